#pragma once

#include <torch/torch.h>

#include "data.hpp"

namespace sdm::nn {

// Largest divisor of `channels` not exceeding 8.
int norm_groups(int channels);

// softmax(q k^T / sqrt(d)) v over token sets. q: [B, L, d], k: [B, S, d],
// v: [B, S, dv] -> [B, L, dv].
torch::Tensor attend(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v);

// [B, C, H, W] -> [B, H*W, C], one row per pixel.
torch::Tensor to_tokens(const torch::Tensor& x);
// [B, H*W, C] -> [B, C, H, W]
torch::Tensor from_tokens(const torch::Tensor& tokens, int64_t h, int64_t w);

// Resize a feature map to an exact spatial size. Shrinking uses adaptive
// average pooling, anything else bilinear (align_corners = false); both are
// mirror-symmetric.
torch::Tensor resample(const torch::Tensor& x, data::GridSize size);

torch::Tensor sinusoidal_embedding(const torch::Tensor& t, int dim);

// Pre-activation residual block. When temb_dim > 0 a projected time
// embedding is added between the two convolutions.
class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int in_channels, int out_channels, int temb_dim = 0);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb = {});

 private:
  torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::Conv2d skip{nullptr};
  torch::nn::Linear time_proj{nullptr};
};
TORCH_MODULE(ResBlock);

// Single-head spatial self-attention with residual.
class SelfAttention2dImpl : public torch::nn::Module {
 public:
  explicit SelfAttention2dImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::GroupNorm norm{nullptr};
  torch::nn::Conv2d q{nullptr}, k{nullptr}, v{nullptr}, proj{nullptr};
};
TORCH_MODULE(SelfAttention2d);

torch::nn::Conv2d conv3x3(int in, int out, int stride = 1);
torch::nn::Conv2d conv1x1(int in, int out, bool bias = true);

}  // namespace sdm::nn
