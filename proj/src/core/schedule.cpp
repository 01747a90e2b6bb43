#include "schedule.hpp"

#include <cmath>
#include <string>

#include "error.hpp"

namespace sdm::diffusion {

void Schedule::check_step(int t) const {
  require(t >= 1 && t <= T, ErrorCode::InvalidArgument,
          "step " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
}

Schedule make_linear_schedule(int T, double beta_start, double beta_end) {
  require(T >= 1, ErrorCode::InvalidArgument, "schedule needs T >= 1");
  require(beta_start > 0.0 && beta_start < 1.0 && beta_end > 0.0 && beta_end < 1.0,
          ErrorCode::InvalidArgument, "beta endpoints must lie in (0, 1)");
  require(beta_start <= beta_end, ErrorCode::InvalidArgument,
          "beta_start must not exceed beta_end");

  Schedule s;
  s.T = T;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  s.posterior_variances.resize(T);

  double running = 1.0;
  for (int i = 0; i < T; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i) / (T - 1);
    s.betas[i] = beta_start + frac * (beta_end - beta_start);
    s.alphas[i] = 1.0 - s.betas[i];
    running *= s.alphas[i];
    s.alpha_bars[i] = running;
  }
  s.posterior_variances[0] = s.betas[0];
  for (int i = 1; i < T; ++i) {
    s.posterior_variances[i] =
        s.betas[i] * (1.0 - s.alpha_bars[i - 1]) / (1.0 - s.alpha_bars[i]);
  }
  return s;
}

torch::Tensor gather_steps(const std::vector<double>& table, const torch::Tensor& t,
                           const torch::Tensor& like) {
  auto steps = t.to(torch::kLong).reshape({-1});
  auto values = torch::tensor(table, torch::kDouble).index_select(0, steps - 1);
  std::vector<int64_t> shape(std::max<int64_t>(like.dim(), 1), 1);
  shape[0] = steps.size(0);
  return values.reshape(shape).to(like.scalar_type());
}

namespace {

void check_steps(const torch::Tensor& t, const Schedule& sched) {
  require(t.numel() > 0, ErrorCode::InvalidArgument, "empty step tensor");
  const auto lo = t.min().item<int64_t>();
  const auto hi = t.max().item<int64_t>();
  require(lo >= 1 && hi <= sched.T, ErrorCode::InvalidArgument,
          "step outside [1, " + std::to_string(sched.T) + "]");
}

torch::Tensor full_steps(int t, const torch::Tensor& like) {
  return torch::full({like.dim() > 0 ? like.size(0) : 1}, t, torch::kLong);
}

std::vector<double> mapped(const Schedule& s, double (*fn)(const Schedule&, int)) {
  std::vector<double> out(s.T);
  for (int t = 1; t <= s.T; ++t) out[t - 1] = fn(s, t);
  return out;
}

}  // namespace

torch::Tensor q_sample(const torch::Tensor& y0, const torch::Tensor& t,
                       const torch::Tensor& eps, const Schedule& sched) {
  require(y0.sizes() == eps.sizes(), ErrorCode::Shape, "q_sample: noise shape differs from y0");
  check_steps(t, sched);
  std::vector<double> sqrt_ab(sched.T), sqrt_1m_ab(sched.T);
  for (int i = 0; i < sched.T; ++i) {
    sqrt_ab[i] = std::sqrt(sched.alpha_bars[i]);
    sqrt_1m_ab[i] = std::sqrt(1.0 - sched.alpha_bars[i]);
  }
  return gather_steps(sqrt_ab, t, y0) * y0 + gather_steps(sqrt_1m_ab, t, y0) * eps;
}

torch::Tensor q_sample(const torch::Tensor& y0, int t, const torch::Tensor& eps,
                       const Schedule& sched) {
  sched.check_step(t);
  require(y0.sizes() == eps.sizes(), ErrorCode::Shape, "q_sample: noise shape differs from y0");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * y0 + std::sqrt(1.0 - ab) * eps;
}

torch::Tensor q_step(const torch::Tensor& y_prev, int t, const torch::Tensor& eps,
                     const Schedule& sched) {
  sched.check_step(t);
  require(y_prev.sizes() == eps.sizes(), ErrorCode::Shape, "q_step: noise shape mismatch");
  return std::sqrt(sched.alpha(t)) * y_prev + std::sqrt(sched.beta(t)) * eps;
}

Posterior posterior_mean_variance(const torch::Tensor& y0, const torch::Tensor& y_t,
                                  const torch::Tensor& t, const Schedule& sched) {
  require(y0.sizes() == y_t.sizes(), ErrorCode::Shape, "posterior: y0 and y_t shapes differ");
  check_steps(t, sched);
  const auto c0 = mapped(sched, [](const Schedule& s, int k) {
    return std::sqrt(s.alpha_bar_prev(k)) * s.beta(k) / (1.0 - s.alpha_bar(k));
  });
  const auto ct = mapped(sched, [](const Schedule& s, int k) {
    return std::sqrt(s.alpha(k)) * (1.0 - s.alpha_bar_prev(k)) / (1.0 - s.alpha_bar(k));
  });
  std::vector<double> log_var(sched.T);
  for (int i = 0; i < sched.T; ++i) log_var[i] = std::log(sched.posterior_variances[i]);

  Posterior p;
  p.mean = gather_steps(c0, t, y0) * y0 + gather_steps(ct, t, y0) * y_t;
  p.variance = gather_steps(sched.posterior_variances, t, y0);
  p.log_variance = gather_steps(log_var, t, y0);
  return p;
}

Posterior posterior_mean_variance(const torch::Tensor& y0, const torch::Tensor& y_t, int t,
                                  const Schedule& sched) {
  sched.check_step(t);
  return posterior_mean_variance(y0, y_t, full_steps(t, y0), sched);
}

torch::Tensor predict_y0(const torch::Tensor& y_t, const torch::Tensor& t,
                         const torch::Tensor& eps, const Schedule& sched) {
  check_steps(t, sched);
  const auto recip = mapped(sched, [](const Schedule& s, int k) {
    return 1.0 / std::sqrt(s.alpha_bar(k));
  });
  const auto noise_coef = mapped(sched, [](const Schedule& s, int k) {
    return std::sqrt(1.0 - s.alpha_bar(k)) / std::sqrt(s.alpha_bar(k));
  });
  return gather_steps(recip, t, y_t) * y_t - gather_steps(noise_coef, t, y_t) * eps;
}

Posterior reverse_mean_variance(const torch::Tensor& pred_noise,
                                const torch::Tensor& pred_var_logit,
                                const torch::Tensor& y_t, const torch::Tensor& t,
                                const Schedule& sched) {
  require(pred_noise.sizes() == y_t.sizes() && pred_var_logit.sizes() == y_t.sizes(),
          ErrorCode::Shape, "reverse step: prediction shapes differ from y_t");
  check_steps(t, sched);
  const auto recip_sqrt_alpha = mapped(sched, [](const Schedule& s, int k) {
    return 1.0 / std::sqrt(s.alpha(k));
  });
  const auto eps_coef = mapped(sched, [](const Schedule& s, int k) {
    return s.beta(k) / (std::sqrt(s.alpha(k)) * std::sqrt(1.0 - s.alpha_bar(k)));
  });
  std::vector<double> log_beta(sched.T), log_post(sched.T);
  for (int i = 0; i < sched.T; ++i) {
    log_beta[i] = std::log(sched.betas[i]);
    log_post[i] = std::log(sched.posterior_variances[i]);
  }

  Posterior p;
  p.mean = gather_steps(recip_sqrt_alpha, t, y_t) * y_t -
           gather_steps(eps_coef, t, y_t) * pred_noise;
  const auto frac = (pred_var_logit + 1.0) * 0.5;
  p.log_variance = frac * gather_steps(log_beta, t, y_t) +
                   (1.0 - frac) * gather_steps(log_post, t, y_t);
  p.variance = torch::exp(p.log_variance);
  return p;
}

torch::Tensor p_sample_step(const torch::Tensor& pred_noise,
                            const torch::Tensor& pred_var_logit,
                            const torch::Tensor& y_t, int t, const Schedule& sched,
                            const torch::Tensor& rng_draw) {
  sched.check_step(t);
  require(rng_draw.sizes() == y_t.sizes(), ErrorCode::Shape, "reverse step: noise draw shape");
  auto p = reverse_mean_variance(pred_noise, pred_var_logit, y_t, full_steps(t, y_t), sched);
  if (t == 1) return p.mean;
  return p.mean + torch::exp(0.5 * p.log_variance) * rng_draw;
}

}  // namespace sdm::diffusion
