#pragma once

#include <torch/torch.h>

#include <functional>
#include <vector>

#include <json.hpp>

#include "ctb.hpp"
#include "data.hpp"
#include "encoder.hpp"
#include "layers.hpp"

namespace sdm::nn {

struct DenoiserConfig {
  data::GridSize mask{160, 200};
  int embed_dim = 8;
  // One entry per UNet resolution level; the bottleneck reuses the last.
  std::vector<int> widths{64, 128, 256};
  // Attention width inside each CTB; 0 means "same as the site's channels".
  int attn_dim = 0;

  void validate() const;
};

struct ModelConfig {
  EncoderConfig encoder;
  DenoiserConfig denoiser;

  static ModelConfig full();
  static ModelConfig desk();
  void validate() const { encoder.validate(); denoiser.validate(); }
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_from_json(const nlohmann::json& j);

// One CTB insertion point inside the UNet.
struct Site {
  int channels = 0;
  data::GridSize size;
  int level = 0;  // pyramid level (coarsest first) consumed here
};

// Sites in execution order: one per down level, one in the bottleneck, one
// per up level.
std::vector<Site> plan_sites(const ModelConfig& cfg);

struct DenoiserOutput {
  torch::Tensor pred_noise;      // [B, d_e, H, W]
  torch::Tensor pred_var_logit;  // [B, d_e, H, W]
};

// Called after each CTB with (site index, features); returns the features
// the next UNet block consumes.
using SiteHook = std::function<torch::Tensor(int, const torch::Tensor&)>;

class SdnImpl : public torch::nn::Module {
 public:
  explicit SdnImpl(const DenoiserConfig& cfg);

  // Returns [B, 2 d_e, H, W]; `site` is invoked at every CTB insertion point.
  torch::Tensor forward(const torch::Tensor& y_t, const torch::Tensor& t,
                        const std::function<torch::Tensor(int, const torch::Tensor&)>& site);

 private:
  struct Down {
    ResBlock res0{nullptr}, res1{nullptr};
    torch::nn::Conv2d down{nullptr};
  };
  struct Up {
    torch::nn::Conv2d up{nullptr};
    ResBlock res0{nullptr}, res1{nullptr};
  };

  DenoiserConfig cfg_;
  int time_dim_ = 0;
  torch::nn::Linear time1{nullptr}, time2{nullptr};
  torch::nn::Conv2d conv_in{nullptr};
  std::vector<Down> down_;
  ResBlock mid0{nullptr}, mid1{nullptr};
  std::vector<Up> up_;
  torch::nn::GroupNorm out_norm{nullptr};
  torch::nn::Conv2d out_conv{nullptr};
};
TORCH_MODULE(Sdn);

// Learnable label embedding and the 1x1 decoding head.
class LabelCodecImpl : public torch::nn::Module {
 public:
  explicit LabelCodecImpl(int embed_dim);

  // labels: [B, H, W] integral {0,1} -> [B, d_e, H, W] in (0,1).
  torch::Tensor embed(const torch::Tensor& labels);
  // [B, d_e, H, W] -> class logits [B, 2, H, W].
  torch::Tensor decode(const torch::Tensor& emb);

  torch::Tensor table;
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(LabelCodec);

// Frame-level model: heatmap encoder, label codec, UNet denoiser and one CTB
// per insertion site. Parameter paths: och/..., embed/..., sdn/..., ctb/<b>/...
class FrameModelImpl : public torch::nn::Module {
 public:
  explicit FrameModelImpl(ModelConfig cfg);

  ConditionPyramid encode(const torch::Tensor& horizontal, const torch::Tensor& vertical);
  torch::Tensor embed_labels(const torch::Tensor& labels);
  torch::Tensor decode_logits(const torch::Tensor& emb);

  // y_t: [B, d_e, H, W]; t: [B] int64 in [1, T].
  DenoiserOutput denoise(const torch::Tensor& y_t, const torch::Tensor& t,
                         const ConditionPyramid& pyramid, const SiteHook& after_ctb = nullptr);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<Site>& sites() const { return sites_; }
  Ctb ctb(int site) const { return ctbs_[site]; }

  OrthoCrossEncoder och{nullptr};
  LabelCodec codec{nullptr};
  Sdn sdn{nullptr};

 private:
  ModelConfig cfg_;
  std::vector<Site> sites_;
  torch::nn::ModuleList ctb_list_{nullptr};
  std::vector<Ctb> ctbs_;
};
TORCH_MODULE(FrameModel);

// argmax over the two class logits; ties go to background.
torch::Tensor labels_from_logits(const torch::Tensor& logits);
// Softmax foreground probability, [B, H, W].
torch::Tensor foreground_probability(const torch::Tensor& logits);

// Named parameters with '/' separators, e.g. "ctb/0/w_q/weight".
std::vector<std::pair<std::string, torch::Tensor>> named_parameters(const torch::nn::Module& m,
                                                                    const std::string& prefix = "");

}  // namespace sdm::nn
