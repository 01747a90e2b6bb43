#include "layers.hpp"

#include <cmath>

namespace sdm::nn {

int norm_groups(int channels) {
  for (int g = 8; g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

torch::Tensor attend(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.size(-1)));
  auto weights = torch::softmax(torch::matmul(q, k.transpose(-1, -2)) * scale, -1);
  return torch::matmul(weights, v);
}

torch::Tensor to_tokens(const torch::Tensor& x) { return x.flatten(2).transpose(1, 2); }

torch::Tensor from_tokens(const torch::Tensor& tokens, int64_t h, int64_t w) {
  return tokens.transpose(1, 2).reshape({tokens.size(0), tokens.size(2), h, w});
}

torch::Tensor resample(const torch::Tensor& x, data::GridSize size) {
  const auto h = x.size(-2), w = x.size(-1);
  if (h == size.rows && w == size.cols) return x;
  if (h >= size.rows && w >= size.cols) {
    return torch::adaptive_avg_pool2d(x, {size.rows, size.cols});
  }
  namespace F = torch::nn::functional;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{size.rows, size.cols})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::Tensor sinusoidal_embedding(const torch::Tensor& t, int dim) {
  const int half = dim / 2;
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, opts) / half);
  auto args = t.to(torch::kFloat64).reshape({-1, 1}) * freqs.reshape({1, -1});
  auto emb = torch::cat({torch::sin(args), torch::cos(args)}, 1);
  if (dim % 2 == 1) emb = torch::cat({emb, torch::zeros({emb.size(0), 1}, opts)}, 1);
  return emb;
}

torch::nn::Conv2d conv3x3(int in, int out, int stride) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::nn::Conv2d conv1x1(int in, int out, bool bias) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1).bias(bias));
}

ResBlockImpl::ResBlockImpl(int in_channels, int out_channels, int temb_dim) {
  norm1 = register_module("norm1", torch::nn::GroupNorm(norm_groups(in_channels), in_channels));
  conv1 = register_module("conv1", conv3x3(in_channels, out_channels));
  norm2 = register_module("norm2", torch::nn::GroupNorm(norm_groups(out_channels), out_channels));
  conv2 = register_module("conv2", conv3x3(out_channels, out_channels));
  if (in_channels != out_channels) skip = register_module("skip", conv1x1(in_channels, out_channels));
  if (temb_dim > 0) time_proj = register_module("time_proj", torch::nn::Linear(temb_dim, out_channels));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
  auto h = conv1(torch::silu(norm1(x)));
  if (time_proj && temb.defined()) {
    h = h + time_proj(torch::silu(temb)).unsqueeze(-1).unsqueeze(-1);
  }
  h = conv2(torch::silu(norm2(h)));
  return (skip ? skip(x) : x) + h;
}

SelfAttention2dImpl::SelfAttention2dImpl(int channels) {
  norm = register_module("norm", torch::nn::GroupNorm(norm_groups(channels), channels));
  q = register_module("q", conv1x1(channels, channels));
  k = register_module("k", conv1x1(channels, channels));
  v = register_module("v", conv1x1(channels, channels));
  proj = register_module("proj", conv1x1(channels, channels));
}

torch::Tensor SelfAttention2dImpl::forward(const torch::Tensor& x) {
  auto h = norm(x);
  auto out = attend(to_tokens(q(h)), to_tokens(k(h)), to_tokens(v(h)));
  return x + proj(from_tokens(out, x.size(2), x.size(3)));
}

}  // namespace sdm::nn
