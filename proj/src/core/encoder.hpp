#pragma once

#include <torch/torch.h>

#include <vector>

#include "data.hpp"
#include "layers.hpp"

namespace sdm::nn {

struct EncoderConfig {
  data::GridSize horizontal{64, 64};
  data::GridSize vertical{64, 64};
  // widths[0] is the per-view stem block at input resolution; widths[i] for
  // i >= 1 belongs to pyramid level i, finest first. The two views are fused
  // after block 1 (the finest pyramid level).
  std::vector<int> widths{32, 64, 128, 128};
  // Pyramid sizes, coarsest first.
  std::vector<data::GridSize> levels{{5, 6}, {10, 12}, {20, 25}};

  void validate() const;
  int level_channels(int level) const;  // level indexed coarsest first
};

// Multi-scale condition features, coarsest first, each [B, C_l, h_l, w_l].
struct ConditionPyramid {
  std::vector<torch::Tensor> levels;

  ConditionPyramid index_select(const torch::Tensor& idx) const;
  ConditionPyramid detach() const;
};

// Dual-tower heatmap encoder: one residual tower per view, channel
// concatenation at the finest pyramid level, a shared trunk below it, and
// spatial self-attention on the coarsest grid.
class OrthoCrossEncoderImpl : public torch::nn::Module {
 public:
  explicit OrthoCrossEncoderImpl(EncoderConfig cfg);

  // horizontal: [B, 1, Hh, Wh]; vertical: [B, 1, Hv, Wv].
  ConditionPyramid forward(const torch::Tensor& horizontal, const torch::Tensor& vertical);

  const EncoderConfig& config() const { return cfg_; }

 private:
  struct ViewTower {
    torch::nn::Conv2d stem{nullptr};
    ResBlock block0{nullptr};
    ResBlock block1{nullptr};
  };
  torch::Tensor run_view(ViewTower& tower, const torch::Tensor& x);

  EncoderConfig cfg_;
  ViewTower hor_, ver_;
  torch::nn::Conv2d fuse_{nullptr};
  std::vector<ResBlock> trunk_;
  SelfAttention2d attention_{nullptr};
};
TORCH_MODULE(OrthoCrossEncoder);

int64_t count_parameters(const torch::nn::Module& module, bool trainable_only = false);

}  // namespace sdm::nn
