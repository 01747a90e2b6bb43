#include "denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "error.hpp"

namespace sdm::nn {

void DenoiserConfig::validate() const {
  require(mask.rows > 0 && mask.cols > 0, ErrorCode::InvalidArgument, "mask size must be positive");
  require(embed_dim > 0, ErrorCode::InvalidArgument, "embedding width must be positive");
  require(!widths.empty(), ErrorCode::InvalidArgument, "UNet needs at least one level");
  for (int w : widths) require(w > 0, ErrorCode::InvalidArgument, "UNet widths must be positive");
  require(attn_dim >= 0, ErrorCode::InvalidArgument, "attention width must be >= 0");
}

ModelConfig ModelConfig::full() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
  ModelConfig cfg;
  cfg.encoder.horizontal = {16, 16};
  cfg.encoder.vertical = {16, 16};
  cfg.encoder.widths = {16, 32, 32, 32};
  cfg.denoiser.mask = {40, 50};
  cfg.denoiser.widths = {32, 48, 64};
  cfg.denoiser.attn_dim = 16;
  return cfg;
}

nlohmann::json to_json(const ModelConfig& cfg) {
  auto grid = [](data::GridSize g) { return nlohmann::json::array({g.rows, g.cols}); };
  nlohmann::json levels = nlohmann::json::array();
  for (auto l : cfg.encoder.levels) levels.push_back(grid(l));
  return {{"encoder",
           {{"horizontal", grid(cfg.encoder.horizontal)},
            {"vertical", grid(cfg.encoder.vertical)},
            {"widths", cfg.encoder.widths},
            {"levels", levels}}},
          {"denoiser",
           {{"mask", grid(cfg.denoiser.mask)},
            {"embed_dim", cfg.denoiser.embed_dim},
            {"widths", cfg.denoiser.widths},
            {"attn_dim", cfg.denoiser.attn_dim}}}};
}

ModelConfig model_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  auto grid = [](const nlohmann::json& g) {
    return data::GridSize{g.at(0).get<int>(), g.at(1).get<int>()};
  };
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    if (e.contains("horizontal")) cfg.encoder.horizontal = grid(e["horizontal"]);
    if (e.contains("vertical")) cfg.encoder.vertical = grid(e["vertical"]);
    if (e.contains("widths")) cfg.encoder.widths = e["widths"].get<std::vector<int>>();
    if (e.contains("levels")) {
      cfg.encoder.levels.clear();
      for (const auto& l : e["levels"]) cfg.encoder.levels.push_back(grid(l));
    }
  }
  if (j.contains("denoiser")) {
    const auto& d = j["denoiser"];
    if (d.contains("mask")) cfg.denoiser.mask = grid(d["mask"]);
    cfg.denoiser.embed_dim = d.value("embed_dim", cfg.denoiser.embed_dim);
    if (d.contains("widths")) cfg.denoiser.widths = d["widths"].get<std::vector<int>>();
    cfg.denoiser.attn_dim = d.value("attn_dim", cfg.denoiser.attn_dim);
  }
  return cfg;
}

namespace {

int halve(int n) { return (n - 1) / 2 + 1; }  // 3x3 conv, stride 2, padding 1

int nearest_level(data::GridSize size, const std::vector<data::GridSize>& levels) {
  int best = 0;
  double best_gap = std::numeric_limits<double>::infinity();
  const double area = static_cast<double>(size.rows) * size.cols;
  for (int i = 0; i < static_cast<int>(levels.size()); ++i) {
    const double gap = std::abs(std::log(area / (static_cast<double>(levels[i].rows) * levels[i].cols)));
    if (gap <= best_gap) {  // ties resolve toward the finer level
      best_gap = gap;
      best = i;
    }
  }
  return best;
}

}  // namespace

std::vector<Site> plan_sites(const ModelConfig& cfg) {
  const auto& w = cfg.denoiser.widths;
  const int L = static_cast<int>(w.size());
  std::vector<data::GridSize> sizes{cfg.denoiser.mask};
  for (int l = 0; l < L; ++l) sizes.push_back({halve(sizes.back().rows), halve(sizes.back().cols)});

  std::vector<Site> sites;
  auto add = [&](int channels, data::GridSize size) {
    sites.push_back({channels, size, nearest_level(size, cfg.encoder.levels)});
  };
  for (int l = 0; l < L; ++l) add(w[l], sizes[l]);
  add(w[L - 1], sizes[L]);
  for (int l = L - 1; l >= 0; --l) add(w[l], sizes[l]);
  return sites;
}

SdnImpl::SdnImpl(const DenoiserConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto& w = cfg_.widths;
  const int L = static_cast<int>(w.size());
  time_dim_ = w[0];
  const int temb = 4 * w[0];
  time1 = register_module("time1", torch::nn::Linear(time_dim_, temb));
  time2 = register_module("time2", torch::nn::Linear(temb, temb));
  conv_in = register_module("conv_in", conv3x3(cfg_.embed_dim, w[0]));

  int ch = w[0];
  for (int l = 0; l < L; ++l) {
    const std::string n = "down" + std::to_string(l);
    Down d;
    d.res0 = register_module(n + "_res0", ResBlock(ch, w[l], temb));
    d.res1 = register_module(n + "_res1", ResBlock(w[l], w[l], temb));
    d.down = register_module(n + "_down", conv3x3(w[l], w[l], 2));
    down_.push_back(d);
    ch = w[l];
  }
  mid0 = register_module("mid_res0", ResBlock(ch, ch, temb));
  mid1 = register_module("mid_res1", ResBlock(ch, ch, temb));
  for (int l = L - 1; l >= 0; --l) {
    const std::string n = "up" + std::to_string(l);
    Up u;
    u.up = register_module(n + "_up", conv3x3(ch, ch));
    u.res0 = register_module(n + "_res0", ResBlock(ch + w[l], w[l], temb));
    u.res1 = register_module(n + "_res1", ResBlock(w[l], w[l], temb));
    up_.push_back(u);
    ch = w[l];
  }
  out_norm = register_module("out_norm", torch::nn::GroupNorm(norm_groups(ch), ch));
  out_conv = register_module("out_conv", conv3x3(ch, 2 * cfg_.embed_dim));
}

torch::Tensor SdnImpl::forward(const torch::Tensor& y_t, const torch::Tensor& t,
                               const std::function<torch::Tensor(int, const torch::Tensor&)>& site) {
  auto temb = sinusoidal_embedding(t, time_dim_).to(y_t.scalar_type());
  temb = time2(torch::silu(time1(temb)));

  int b = 0;
  auto h = conv_in(y_t);
  std::vector<torch::Tensor> skips;
  for (auto& d : down_) {
    h = d.res1(d.res0(h, temb), temb);
    h = site(b++, h);
    skips.push_back(h);
    h = d.down(h);
  }
  h = mid0(h, temb);
  h = site(b++, h);
  h = mid1(h, temb);
  namespace F = torch::nn::functional;
  for (auto& u : up_) {
    auto skip = skips.back();
    skips.pop_back();
    h = F::interpolate(h, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{skip.size(2), skip.size(3)})
                              .mode(torch::kNearest));
    h = u.up(h);
    h = u.res1(u.res0(torch::cat({h, skip}, 1), temb), temb);
    h = site(b++, h);
  }
  return out_conv(torch::silu(out_norm(h)));
}

LabelCodecImpl::LabelCodecImpl(int embed_dim) {
  table = register_parameter("table", torch::randn({2, embed_dim}));
  head = register_module("head", conv1x1(embed_dim, 2));
}

torch::Tensor LabelCodecImpl::embed(const torch::Tensor& labels) {
  require(labels.dim() == 3, ErrorCode::Shape, "labels must be [B, H, W]");
  auto idx = labels.to(torch::kLong);
  if (idx.numel() > 0) {
    require(idx.min().item<int64_t>() >= 0 && idx.max().item<int64_t>() <= 1,
            ErrorCode::InvalidArgument, "labels must be binary");
  }
  auto rows = table.index_select(0, idx.reshape({-1}));
  auto emb = rows.reshape({labels.size(0), labels.size(1), labels.size(2), table.size(1)});
  return torch::sigmoid(emb.permute({0, 3, 1, 2}).contiguous());
}

torch::Tensor LabelCodecImpl::decode(const torch::Tensor& emb) { return head(emb); }

FrameModelImpl::FrameModelImpl(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  och = register_module("och", OrthoCrossEncoder(cfg_.encoder));
  codec = register_module("embed", LabelCodec(cfg_.denoiser.embed_dim));
  sdn = register_module("sdn", Sdn(cfg_.denoiser));
  sites_ = plan_sites(cfg_);
  ctb_list_ = register_module("ctb", torch::nn::ModuleList());
  for (const auto& s : sites_) {
    const int attn = cfg_.denoiser.attn_dim > 0 ? cfg_.denoiser.attn_dim : s.channels;
    Ctb block(s.channels, cfg_.encoder.level_channels(s.level), attn);
    ctb_list_->push_back(block);
    ctbs_.push_back(block);
  }
}

ConditionPyramid FrameModelImpl::encode(const torch::Tensor& horizontal, const torch::Tensor& vertical) {
  return och(horizontal, vertical);
}

torch::Tensor FrameModelImpl::embed_labels(const torch::Tensor& labels) {
  require(labels.size(1) == cfg_.denoiser.mask.rows && labels.size(2) == cfg_.denoiser.mask.cols,
          ErrorCode::Shape, "mask size differs from the model configuration");
  return codec->embed(labels);
}

torch::Tensor FrameModelImpl::decode_logits(const torch::Tensor& emb) {
  require(emb.dim() == 4 && emb.size(1) == cfg_.denoiser.embed_dim, ErrorCode::Shape,
          "embedding must be [B, d_e, H, W]");
  return codec->decode(emb);
}

DenoiserOutput FrameModelImpl::denoise(const torch::Tensor& y_t, const torch::Tensor& t,
                                       const ConditionPyramid& pyramid, const SiteHook& after_ctb) {
  const auto& m = cfg_.denoiser.mask;
  require(y_t.dim() == 4 && y_t.size(1) == cfg_.denoiser.embed_dim && y_t.size(2) == m.rows &&
              y_t.size(3) == m.cols,
          ErrorCode::Shape, "noisy input must be [B, d_e, H, W] matching the configuration");
  require(t.numel() == y_t.size(0), ErrorCode::Shape, "one step index per sample is required");

  auto site = [&](int b, const torch::Tensor& h) {
    const int level = sites_[b].level;
    require(level < static_cast<int>(pyramid.levels.size()), ErrorCode::Shape,
            "pyramid has no level " + std::to_string(level) + " for CTB site " + std::to_string(b));
    auto out = ctbs_[b](h, pyramid.levels[level]);
    return after_ctb ? after_ctb(b, out) : out;
  };
  auto raw = sdn(y_t, t, site);
  auto parts = raw.chunk(2, 1);
  return {parts[0], parts[1]};
}

torch::Tensor labels_from_logits(const torch::Tensor& logits) {
  return (logits.select(1, 1) > logits.select(1, 0)).to(torch::kUInt8);
}

torch::Tensor foreground_probability(const torch::Tensor& logits) {
  return torch::softmax(logits, 1).select(1, 1);
}

std::vector<std::pair<std::string, torch::Tensor>> named_parameters(const torch::nn::Module& m,
                                                                    const std::string& prefix) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : m.named_parameters(true)) {
    std::string name = item.key();
    std::replace(name.begin(), name.end(), '.', '/');
    out.emplace_back(prefix + name, item.value());
  }
  return out;
}

}  // namespace sdm::nn
