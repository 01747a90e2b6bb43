#pragma once

#include <torch/torch.h>

#include <vector>

#include "denoiser.hpp"

namespace sdm::nn {

// Spatio-temporal block attached after a CTB during sequence fine-tuning.
//
// Step 1 (frames n >= 2): queries from frame n, keys/values from the channel
// concatenation [frame 1 | frame n-1], attention over pixels, reduced to
// width d = C/2. Frame 1 takes a learned C -> d map instead.
// Step 2: self-attention over the N temporal positions at each pixel.
// The zero-initialised output projection maps d -> C and is added to the
// input window, so a fresh block is the identity.
class StbImpl : public torch::nn::Module {
 public:
  explicit StbImpl(int channels);

  // window: [B*N, C, H, W] with the N frames of each window contiguous.
  torch::Tensor forward(const torch::Tensor& window, int N);

  // Step-1 features, [B, N, d, H*W] (tokens last).
  torch::Tensor reduce(const torch::Tensor& window, int N);

  int channels() const { return channels_; }
  int reduced() const { return reduced_; }

  torch::nn::Linear w_q{nullptr}, w_k{nullptr}, w_v{nullptr};
  torch::nn::Linear lead{nullptr};
  torch::nn::Linear t_q{nullptr}, t_k{nullptr}, t_v{nullptr};
  torch::nn::Linear out{nullptr};

 private:
  int channels_;
  int reduced_;
};
TORCH_MODULE(Stb);

// Frame model with one STB after every CTB. The frame model is frozen; only
// the STB parameters ("stb/<site>/...") are trainable.
class SequenceModelImpl : public torch::nn::Module {
 public:
  SequenceModelImpl(FrameModel frame, int N);

  // y_t: [B*N, d_e, H, W]; t: [B*N]; pyramid built per frame.
  DenoiserOutput denoise(const torch::Tensor& y_t, const torch::Tensor& t,
                         const ConditionPyramid& pyramid);

  FrameModel frame() const { return frame_; }
  int sequence_length() const { return N_; }
  int site_count() const { return static_cast<int>(stbs_.size()); }
  Stb stb(int site) const { return stbs_[site]; }

 private:
  FrameModel frame_;
  int N_;
  torch::nn::ModuleList stb_list_{nullptr};
  std::vector<Stb> stbs_;
};
TORCH_MODULE(SequenceModel);

// Freezes every frame-model parameter and attaches fresh STBs.
SequenceModel wrap_model_with_stb(FrameModel frame, int N);

}  // namespace sdm::nn
