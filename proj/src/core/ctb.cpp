#include "ctb.hpp"

#include <string>

#include "error.hpp"
#include "layers.hpp"

namespace sdm::nn {

CtbImpl::CtbImpl(int frame_channels, int cond_channels, int attn_dim)
    : frame_channels_(frame_channels), cond_channels_(cond_channels), attn_dim_(attn_dim) {
  w_q = register_module("w_q", conv1x1(frame_channels, attn_dim, false));
  w_k = register_module("w_k", conv1x1(cond_channels, attn_dim, false));
  w_v = register_module("w_v", conv1x1(cond_channels, attn_dim, false));
  w_ctb = register_module("w_ctb", torch::nn::Linear(torch::nn::LinearOptions(attn_dim, frame_channels).bias(false)));
  torch::NoGradGuard no_grad;
  w_ctb->weight.zero_();
}

torch::Tensor CtbImpl::forward(const torch::Tensor& frame, const torch::Tensor& cond) {
  require(frame.dim() == 4 && frame.size(1) == frame_channels_, ErrorCode::Shape,
          "CTB expects " + std::to_string(frame_channels_) + " frame channels");
  require(cond.dim() == 4 && cond.size(1) == cond_channels_, ErrorCode::Shape,
          "CTB expects " + std::to_string(cond_channels_) + " condition channels");
  require(frame.size(0) == cond.size(0), ErrorCode::Shape, "CTB batch sizes differ");

  auto q = to_tokens(w_q(frame));
  auto k = to_tokens(w_k(cond));
  auto v = to_tokens(w_v(cond));
  auto guided = w_ctb(attend(q, k, v));
  return frame + from_tokens(guided, frame.size(2), frame.size(3));
}

}  // namespace sdm::nn
