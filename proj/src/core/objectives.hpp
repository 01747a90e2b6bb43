#pragma once

#include <torch/torch.h>

#include <array>

#include "schedule.hpp"

namespace sdm::loss {

struct Lambdas {
  double mse = 3.0;
  double vib = 1.0;
  double ce = 1.0;
  double dice = 1.0;
};

struct LossReport {
  double mse = 0, vib = 0, ce = 0, dice = 0, total = 0;
  Lambdas lambdas;
};

// Mean squared error over every element.
torch::Tensor mse_loss(const torch::Tensor& eps_true, const torch::Tensor& eps_pred);

// Variance term: KL(q(y_{t-1} | y_t, y0) || p(y_{t-1} | y_t)), averaged over
// elements, in nats. The model mean is built from a detached noise
// prediction so only the variance head receives gradient. At t = 1 the
// posterior collapses to N(y0, beta_1) and the same KL is the expected
// Gaussian NLL of y0 less the posterior entropy, which keeps it >= 0.
torch::Tensor vib_loss(const torch::Tensor& y0, const torch::Tensor& y_t, const torch::Tensor& t,
                       const torch::Tensor& pred_noise, const torch::Tensor& pred_var_logit,
                       const diffusion::Schedule& sched);

// Elementwise Gaussian KL(N(m1, exp(lv1)) || N(m2, exp(lv2))).
torch::Tensor gaussian_kl(const torch::Tensor& mean1, const torch::Tensor& logvar1,
                          const torch::Tensor& mean2, const torch::Tensor& logvar2);

// Binary cross-entropy, both classes, probabilities clamped to [1e-7, 1-1e-7],
// mean over pixels.
torch::Tensor ce_loss(const torch::Tensor& probs, const torch::Tensor& mask);

// 1 - 2 sum(y p) / (sum(y^2) + sum(p^2)) per frame (leading dim), averaged.
// A frame where both sums vanish scores 0.
torch::Tensor dice_loss(const torch::Tensor& probs, const torch::Tensor& mask);

struct LossTerms {
  torch::Tensor mse, vib, ce, dice;
};

// Differentiable weighted sum for backprop.
torch::Tensor weighted_total(const LossTerms& terms, const Lambdas& lambdas);

// Exact weighted sum on the recorded scalars; throws naming the first
// non-finite term.
LossReport total_loss(double mse, double vib, double ce, double dice, const Lambdas& lambdas = {});
LossReport report(const LossTerms& terms, const Lambdas& lambdas);

}  // namespace sdm::loss
