#include "stb.hpp"

#include <string>

#include "error.hpp"
#include "layers.hpp"

namespace sdm::nn {

namespace {
torch::nn::Linear linear(int in, int out) {
  return torch::nn::Linear(torch::nn::LinearOptions(in, out).bias(false));
}
}  // namespace

StbImpl::StbImpl(int channels) : channels_(channels), reduced_(std::max(1, channels / 2)) {
  require(channels > 0, ErrorCode::InvalidArgument, "STB channels must be positive");
  w_q = register_module("w_q", linear(channels_, reduced_));
  w_k = register_module("w_k", linear(2 * channels_, reduced_));
  w_v = register_module("w_v", linear(2 * channels_, reduced_));
  lead = register_module("lead", linear(channels_, reduced_));
  t_q = register_module("t_q", linear(reduced_, reduced_));
  t_k = register_module("t_k", linear(reduced_, reduced_));
  t_v = register_module("t_v", linear(reduced_, reduced_));
  out = register_module("out", linear(reduced_, channels_));
  torch::NoGradGuard no_grad;
  out->weight.zero_();
}

torch::Tensor StbImpl::reduce(const torch::Tensor& window, int N) {
  require(N >= 2, ErrorCode::InvalidArgument, "STB needs at least two frames per window");
  require(window.dim() == 4 && window.size(1) == channels_, ErrorCode::Shape,
          "STB expects " + std::to_string(channels_) + " channels");
  require(window.size(0) % N == 0, ErrorCode::Shape, "batch is not a whole number of windows");
  const int64_t B = window.size(0) / N, C = channels_;
  const int64_t P = window.size(2) * window.size(3);

  // [B, N, P, C] tokens
  auto tokens = window.reshape({B, N, C, P}).transpose(2, 3);
  auto first = tokens.select(1, 0);                          // [B, P, C]
  auto current = tokens.slice(1, 1, N);                      // frames 2..N
  auto previous = tokens.slice(1, 0, N - 1);                 // frames 1..N-1
  auto leading = first.unsqueeze(1).expand({B, N - 1, P, C});
  auto context = torch::cat({leading, previous}, -1);        // [B, N-1, P, 2C]

  auto q = w_q(current).reshape({B * (N - 1), P, reduced_});
  auto k = w_k(context).reshape({B * (N - 1), P, reduced_});
  auto v = w_v(context).reshape({B * (N - 1), P, reduced_});
  auto stepped = attend(q, k, v).reshape({B, N - 1, P, reduced_});

  auto head = lead(first).unsqueeze(1);                      // [B, 1, P, d]
  return torch::cat({head, stepped}, 1).transpose(2, 3);     // [B, N, d, P]
}

torch::Tensor StbImpl::forward(const torch::Tensor& window, int N) {
  const int64_t B = window.size(0) / N;
  const int64_t H = window.size(2), W = window.size(3), P = H * W;
  auto reduced = reduce(window, N);  // [B, N, d, P]

  // temporal tokens per pixel: [B*P, N, d]
  auto seq = reduced.permute({0, 3, 1, 2}).reshape({B * P, N, reduced_});
  seq = seq + attend(t_q(seq), t_k(seq), t_v(seq));
  auto projected = out(seq);  // [B*P, N, C]
  auto delta = projected.reshape({B, P, N, channels_}).permute({0, 2, 3, 1})
                   .reshape({B * N, channels_, H, W});
  return window + delta;
}

SequenceModelImpl::SequenceModelImpl(FrameModel frame, int N) : frame_(std::move(frame)), N_(N) {
  require(N >= 2, ErrorCode::InvalidArgument, "sequence model needs N >= 2");
  stb_list_ = register_module("stb", torch::nn::ModuleList());
  for (const auto& s : frame_->sites()) {
    Stb block(s.channels);
    stb_list_->push_back(block);
    stbs_.push_back(block);
  }
}

DenoiserOutput SequenceModelImpl::denoise(const torch::Tensor& y_t, const torch::Tensor& t,
                                          const ConditionPyramid& pyramid) {
  require(y_t.size(0) % N_ == 0, ErrorCode::Shape, "batch is not a whole number of windows");
  return frame_->denoise(y_t, t, pyramid,
                         [&](int b, const torch::Tensor& h) { return stbs_[b](h, N_); });
}

SequenceModel wrap_model_with_stb(FrameModel frame, int N) {
  for (auto& p : frame->parameters()) p.set_requires_grad(false);
  return SequenceModel(std::move(frame), N);
}

}  // namespace sdm::nn
