#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "data.hpp"
#include "denoiser.hpp"
#include "objectives.hpp"
#include "run_config.hpp"
#include "schedule.hpp"
#include "stb.hpp"

namespace sdm::train {

// Frames stacked as tensors. For window sets the N frames of each window are
// contiguous, so item i owns rows [i*N, (i+1)*N).
struct TensorSet {
  torch::Tensor horizontal;  // [F, 1, Hh, Wh] float
  torch::Tensor vertical;    // [F, 1, Hv, Wv] float
  torch::Tensor masks;       // [F, H, W] int64 in {0,1}
  int frames_per_item = 1;

  int64_t items() const { return masks.size(0) / frames_per_item; }
  // Rows belonging to the given items, in order.
  TensorSet select(const std::vector<int64_t>& items) const;
};

TensorSet stack_frames(const std::vector<data::SequenceSample>& samples, int frames_per_item = 1);
void check_shapes(const TensorSet& set, const nn::ModelConfig& cfg);

// Every group of a dataset directory (or the listed ones).
std::vector<data::SequenceSample> load_groups(const std::string& root,
                                              const std::vector<std::string>& groups = {});

// Uniform t in [1, T].
class StepSampler {
 public:
  StepSampler(int T, std::mt19937_64& rng) : dist_(1, T), rng_(rng) {}
  int64_t operator()() { return dist_(rng_); }
  torch::Tensor draw(int64_t n);

 private:
  std::uniform_int_distribution<int64_t> dist_;
  std::mt19937_64& rng_;
};

// Reshuffled epochs of item indices; batches wrap across epochs.
class BatchOrder {
 public:
  BatchOrder(int64_t items, std::mt19937_64& rng) : items_(items), rng_(rng) {}
  std::vector<int64_t> next(int batch);

 private:
  int64_t items_;
  std::mt19937_64& rng_;
  std::vector<int64_t> perm_;
  std::size_t pos_ = 0;
};

using DenoiseCall = std::function<nn::DenoiserOutput(const torch::Tensor& y_t, const torch::Tensor& t)>;

// The four loss terms for one batch. y0 is the embedded mask; the CE/Dice
// terms score the decoded reconstruction predict_y0(y_t, pred_noise).
loss::LossTerms compute_losses(nn::FrameModel& model, const DenoiseCall& denoise,
                               const torch::Tensor& y0, const torch::Tensor& masks,
                               const torch::Tensor& t, const torch::Tensor& noise,
                               const diffusion::Schedule& sched);

struct StepLog {
  int step = 0;
  loss::LossReport loss;
  double grad_norm = 0;
  bool clipped = false;
  double seconds = 0;
};

std::string format_log(const StepLog& s);

using StepCallback = std::function<void(const StepLog&)>;

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> history;
  std::string hash;  // of the final checkpoint
  nn::FrameModel frame{nullptr};
  nn::SequenceModel sequence{nullptr};  // stage 2 only
};

diffusion::Schedule schedule_for(const RunConfig& cfg);

// Stage 1. `data` holds whole sequences; every frame is one training item.
TrainResult train_frame_stage(const RunConfig& cfg, const std::vector<data::SequenceSample>& data,
                              const StepCallback& on_step = nullptr);
// Loads cfg.dataset_root.
TrainResult train_frame_stage(const RunConfig& cfg, const StepCallback& on_step = nullptr);

// Stage 2 on windows of cfg.seq_len consecutive frames. Only STB parameters
// are updated; the archive stores them plus the parent's hash.
TrainResult train_sequence_stage(const RunConfig& cfg, const Checkpoint& stage1,
                                 const std::vector<data::SequenceSample>& data,
                                 const StepCallback& on_step = nullptr);
TrainResult train_sequence_stage(const RunConfig& cfg, const StepCallback& on_step = nullptr);

}  // namespace sdm::train
