#include "sampler.hpp"

#include <ATen/CPUGeneratorImpl.h>

namespace sdm::nn {

torch::Generator make_generator(std::uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

torch::Tensor reverse_chain(const DenoiseFn& denoise, at::IntArrayRef shape,
                            const diffusion::Schedule& sched, torch::Generator& gen,
                            const StepHook& on_step, torch::ScalarType dtype) {
  torch::NoGradGuard no_grad;
  auto opts = torch::TensorOptions().dtype(dtype);
  auto y = torch::randn(shape, gen, opts);
  for (int t = sched.T; t >= 1; --t) {
    auto steps = torch::full({shape[0]}, t, torch::kLong);
    auto out = denoise(y, steps);
    if (on_step) on_step(t);
    auto draw = t > 1 ? torch::randn(shape, gen, opts) : torch::zeros(shape, opts);
    y = diffusion::p_sample_step(out.pred_noise, out.pred_var_logit, y, t, sched, draw);
  }
  return y;
}

namespace {
std::vector<int64_t> embed_shape(const FrameModel& model, int64_t batch) {
  const auto& d = model->config().denoiser;
  return {batch, d.embed_dim, d.mask.rows, d.mask.cols};
}
}  // namespace

torch::Tensor sample_frames(FrameModel& model, const torch::Tensor& horizontal,
                            const torch::Tensor& vertical, const diffusion::Schedule& sched,
                            torch::Generator& gen, const StepHook& on_step) {
  torch::NoGradGuard no_grad;
  auto pyramid = model->encode(horizontal, vertical);
  auto fn = [&](const torch::Tensor& y, const torch::Tensor& t) {
    return model->denoise(y, t, pyramid);
  };
  auto y0 = reverse_chain(fn, embed_shape(model, horizontal.size(0)), sched, gen, on_step,
                          horizontal.scalar_type());
  return labels_from_logits(model->decode_logits(y0));
}

torch::Tensor sample_windows(SequenceModel& model, const torch::Tensor& horizontal,
                             const torch::Tensor& vertical, const diffusion::Schedule& sched,
                             torch::Generator& gen, const StepHook& on_step) {
  torch::NoGradGuard no_grad;
  auto frame = model->frame();
  auto pyramid = frame->encode(horizontal, vertical);
  auto fn = [&](const torch::Tensor& y, const torch::Tensor& t) {
    return model->denoise(y, t, pyramid);
  };
  auto y0 = reverse_chain(fn, embed_shape(frame, horizontal.size(0)), sched, gen, on_step,
                          horizontal.scalar_type());
  return labels_from_logits(frame->decode_logits(y0));
}

}  // namespace sdm::nn
