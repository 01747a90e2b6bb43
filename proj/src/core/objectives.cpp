#include "objectives.hpp"

#include <cmath>
#include <string>

#include "error.hpp"

namespace sdm::loss {

torch::Tensor mse_loss(const torch::Tensor& eps_true, const torch::Tensor& eps_pred) {
  require(eps_true.sizes() == eps_pred.sizes(), ErrorCode::Shape, "mse: shape mismatch");
  return (eps_true - eps_pred).pow(2).mean();
}

torch::Tensor gaussian_kl(const torch::Tensor& mean1, const torch::Tensor& logvar1,
                          const torch::Tensor& mean2, const torch::Tensor& logvar2) {
  return 0.5 * (-1.0 + logvar2 - logvar1 + torch::exp(logvar1 - logvar2) +
                (mean1 - mean2).pow(2) * torch::exp(-logvar2));
}

torch::Tensor vib_loss(const torch::Tensor& y0, const torch::Tensor& y_t, const torch::Tensor& t,
                       const torch::Tensor& pred_noise, const torch::Tensor& pred_var_logit,
                       const diffusion::Schedule& sched) {
  auto target = diffusion::posterior_mean_variance(y0.detach(), y_t.detach(), t, sched);
  auto model = diffusion::reverse_mean_variance(pred_noise.detach(), pred_var_logit,
                                                y_t.detach(), t, sched);
  auto kl = gaussian_kl(target.mean, target.log_variance.expand_as(target.mean), model.mean,
                        model.log_variance);
  return kl.mean();
}

torch::Tensor ce_loss(const torch::Tensor& probs, const torch::Tensor& mask) {
  require(probs.sizes() == mask.sizes(), ErrorCode::Shape, "ce: shape mismatch");
  const double eps = 1e-7;
  auto p = probs.clamp(eps, 1.0 - eps);
  auto y = mask.to(probs.scalar_type());
  return -(y * torch::log(p) + (1.0 - y) * torch::log(1.0 - p)).mean();
}

torch::Tensor dice_loss(const torch::Tensor& probs, const torch::Tensor& mask) {
  require(probs.sizes() == mask.sizes(), ErrorCode::Shape, "dice: shape mismatch");
  require(probs.dim() >= 1, ErrorCode::Shape, "dice: needs a frame dimension");
  auto y = mask.to(probs.scalar_type());
  auto p = probs.reshape({probs.size(0), -1});
  auto yf = y.reshape({y.size(0), -1});
  auto overlap = (yf * p).sum(1);
  auto denom = yf.pow(2).sum(1) + p.pow(2).sum(1);
  auto safe = torch::where(denom > 0, denom, torch::ones_like(denom));
  auto per_frame = torch::where(denom > 0, 1.0 - 2.0 * overlap / safe, torch::zeros_like(denom));
  return per_frame.mean();
}

torch::Tensor weighted_total(const LossTerms& terms, const Lambdas& l) {
  return l.mse * terms.mse + l.vib * terms.vib + l.ce * terms.ce + l.dice * terms.dice;
}

LossReport total_loss(double mse, double vib, double ce, double dice, const Lambdas& lambdas) {
  const std::pair<const char*, double> parts[] = {{"mse", mse}, {"vib", vib}, {"ce", ce}, {"dice", dice}};
  for (const auto& [name, value] : parts) {
    require(std::isfinite(value), ErrorCode::Diverged,
            std::string("loss term '") + name + "' is not finite");
  }
  LossReport r;
  r.mse = mse;
  r.vib = vib;
  r.ce = ce;
  r.dice = dice;
  r.lambdas = lambdas;
  r.total = lambdas.mse * mse + lambdas.vib * vib + lambdas.ce * ce + lambdas.dice * dice;
  return r;
}

LossReport report(const LossTerms& terms, const Lambdas& lambdas) {
  return total_loss(terms.mse.item<double>(), terms.vib.item<double>(), terms.ce.item<double>(),
                    terms.dice.item<double>(), lambdas);
}

}  // namespace sdm::loss
