#pragma once

#include <torch/torch.h>

namespace sdm::nn {

// Cross-view transformation block. Queries come from the denoiser feature
// map, keys and values from one condition-pyramid level; every pixel is one
// attention token:
//
//   Q = W_Q * F_frame,  K = W_K * F_cond,  V = W_V * F_cond   (1x1 kernels)
//   out = W_CTB softmax(Q K^T / sqrt(d_b)) V + F_frame
//
// W_CTB is a channel-space matrix shared across pixels and starts at zero,
// so a fresh block is an exact pass-through.
class CtbImpl : public torch::nn::Module {
 public:
  CtbImpl(int frame_channels, int cond_channels, int attn_dim);

  torch::Tensor forward(const torch::Tensor& frame, const torch::Tensor& cond);

  int frame_channels() const { return frame_channels_; }
  int cond_channels() const { return cond_channels_; }
  int attn_dim() const { return attn_dim_; }

  torch::nn::Conv2d w_q{nullptr}, w_k{nullptr}, w_v{nullptr};
  torch::nn::Linear w_ctb{nullptr};

 private:
  int frame_channels_;
  int cond_channels_;
  int attn_dim_;
};
TORCH_MODULE(Ctb);

}  // namespace sdm::nn
