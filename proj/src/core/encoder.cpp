#include "encoder.hpp"

#include <string>

#include "error.hpp"

namespace sdm::nn {

void EncoderConfig::validate() const {
  require(!widths.empty() && !levels.empty(), ErrorCode::InvalidArgument,
          "encoder needs at least one block and one pyramid level");
  require(widths.size() == levels.size() + 1, ErrorCode::InvalidArgument,
          "encoder widths must number pyramid levels + 1");
  for (int w : widths) require(w > 0, ErrorCode::InvalidArgument, "encoder widths must be positive");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    require(levels[i].rows > 0 && levels[i].cols > 0, ErrorCode::InvalidArgument,
            "pyramid sizes must be positive");
    if (i > 0) {
      require(levels[i].rows * levels[i].cols > levels[i - 1].rows * levels[i - 1].cols,
              ErrorCode::InvalidArgument, "pyramid sizes must grow from coarse to fine");
    }
  }
  for (auto g : {horizontal, vertical}) {
    require(g.rows > 0 && g.cols > 0, ErrorCode::InvalidArgument, "heatmap sizes must be positive");
  }
}

int EncoderConfig::level_channels(int level) const {
  // coarsest level = last block
  return widths[widths.size() - 1 - level];
}

ConditionPyramid ConditionPyramid::index_select(const torch::Tensor& idx) const {
  ConditionPyramid out;
  for (const auto& l : levels) out.levels.push_back(l.index_select(0, idx));
  return out;
}

ConditionPyramid ConditionPyramid::detach() const {
  ConditionPyramid out;
  for (const auto& l : levels) out.levels.push_back(l.detach());
  return out;
}

OrthoCrossEncoderImpl::OrthoCrossEncoderImpl(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int w0 = cfg_.widths[0], w1 = cfg_.widths[1];
  for (auto [tower, name] : {std::pair{&hor_, "hor"}, std::pair{&ver_, "ver"}}) {
    const std::string n = name;
    tower->stem = register_module(n + "_stem", conv3x3(1, w0));
    tower->block0 = register_module(n + "_block0", ResBlock(w0, w0));
    tower->block1 = register_module(n + "_block1", ResBlock(w0, w1));
  }
  fuse_ = register_module("fuse", conv1x1(2 * w1, w1));
  for (std::size_t i = 2; i < cfg_.widths.size(); ++i) {
    trunk_.push_back(register_module("trunk" + std::to_string(i),
                                     ResBlock(cfg_.widths[i - 1], cfg_.widths[i])));
  }
  attention_ = register_module("attention", SelfAttention2d(cfg_.widths.back()));
}

torch::Tensor OrthoCrossEncoderImpl::run_view(ViewTower& tower, const torch::Tensor& x) {
  auto h = tower.block0(tower.stem(x));
  return tower.block1(resample(h, cfg_.levels.back()));
}

ConditionPyramid OrthoCrossEncoderImpl::forward(const torch::Tensor& horizontal,
                                                const torch::Tensor& vertical) {
  auto check = [](const torch::Tensor& x, data::GridSize g, const char* view) {
    require(x.dim() == 4 && x.size(1) == 1 && x.size(2) == g.rows && x.size(3) == g.cols,
            ErrorCode::Shape,
            std::string(view) + " heatmap must be [B, 1, " + std::to_string(g.rows) + ", " +
                std::to_string(g.cols) + "]");
  };
  check(horizontal, cfg_.horizontal, "horizontal");
  check(vertical, cfg_.vertical, "vertical");
  require(horizontal.size(0) == vertical.size(0), ErrorCode::Shape, "heatmap batch sizes differ");

  const int M = static_cast<int>(cfg_.levels.size());
  std::vector<torch::Tensor> fine_to_coarse;
  auto h = fuse_(torch::cat({run_view(hor_, horizontal), run_view(ver_, vertical)}, 1));
  fine_to_coarse.push_back(h);
  for (int i = 0; i + 1 < M; ++i) {
    h = trunk_[i](resample(h, cfg_.levels[M - 2 - i]));
    fine_to_coarse.push_back(h);
  }
  fine_to_coarse.back() = attention_(fine_to_coarse.back());

  ConditionPyramid out;
  out.levels.assign(fine_to_coarse.rbegin(), fine_to_coarse.rend());
  return out;
}

int64_t count_parameters(const torch::nn::Module& module, bool trainable_only) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) {
    if (!trainable_only || p.requires_grad()) n += p.numel();
  }
  return n;
}

}  // namespace sdm::nn
