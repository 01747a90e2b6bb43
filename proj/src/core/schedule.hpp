#pragma once

#include <torch/torch.h>

#include <vector>

namespace sdm::diffusion {

// Noise tables for a T-step forward process. Steps are 1-based at every
// public entry point; the vectors below are indexed t-1.
struct Schedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
  // beta~_t = beta_t (1 - abar_{t-1}) / (1 - abar_t), with beta~_1 := beta_1.
  std::vector<double> posterior_variances;

  double beta(int t) const { return betas[t - 1]; }
  double alpha(int t) const { return alphas[t - 1]; }
  double alpha_bar(int t) const { return alpha_bars[t - 1]; }
  // abar_0 = 1 (no corruption).
  double alpha_bar_prev(int t) const { return t == 1 ? 1.0 : alpha_bars[t - 2]; }
  double posterior_variance(int t) const { return posterior_variances[t - 1]; }

  void check_step(int t) const;
};

Schedule make_linear_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02);

// Per-sample step indices are int64 tensors of shape [B] holding values in
// [1, T]; scalar overloads broadcast one step over the whole batch.

torch::Tensor q_sample(const torch::Tensor& y0, const torch::Tensor& t,
                       const torch::Tensor& eps, const Schedule& sched);
torch::Tensor q_sample(const torch::Tensor& y0, int t, const torch::Tensor& eps,
                       const Schedule& sched);

// One forward transition q(y_t | y_{t-1}).
torch::Tensor q_step(const torch::Tensor& y_prev, int t, const torch::Tensor& eps,
                     const Schedule& sched);

struct Posterior {
  torch::Tensor mean;
  torch::Tensor variance;      // broadcastable to mean
  torch::Tensor log_variance;  // broadcastable to mean
};

Posterior posterior_mean_variance(const torch::Tensor& y0, const torch::Tensor& y_t,
                                  const torch::Tensor& t, const Schedule& sched);
Posterior posterior_mean_variance(const torch::Tensor& y0, const torch::Tensor& y_t,
                                  int t, const Schedule& sched);

// Inverts q_sample: y0 = (y_t - sqrt(1-abar_t) eps) / sqrt(abar_t).
torch::Tensor predict_y0(const torch::Tensor& y_t, const torch::Tensor& t,
                         const torch::Tensor& eps, const Schedule& sched);

// Learned-variance reverse transition p(y_{t-1} | y_t). The variance head
// emits v in [-1, 1] (nominally) and
//   log Sigma = f log beta_t + (1 - f) log beta~_t,  f = (v + 1) / 2.
Posterior reverse_mean_variance(const torch::Tensor& pred_noise,
                                const torch::Tensor& pred_var_logit,
                                const torch::Tensor& y_t, const torch::Tensor& t,
                                const Schedule& sched);

// Ancestral step. rng_draw is the unit Gaussian used for t > 1; at t == 1
// the mean is returned unchanged.
torch::Tensor p_sample_step(const torch::Tensor& pred_noise,
                            const torch::Tensor& pred_var_logit,
                            const torch::Tensor& y_t, int t, const Schedule& sched,
                            const torch::Tensor& rng_draw);

// Gathers table[t-1] for each sample and reshapes to broadcast over `like`.
torch::Tensor gather_steps(const std::vector<double>& table, const torch::Tensor& t,
                           const torch::Tensor& like);

}  // namespace sdm::diffusion
