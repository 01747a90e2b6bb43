#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "data.hpp"

namespace sdm::eval {

// |pred & truth| / |pred | truth|; two empty masks score 1.
double iou(const data::LabelGrid& pred, const data::LabelGrid& truth);

struct FrameScore {
  std::string group;
  int frame = 0;
  std::string subset;  // "single" or "multi"
  double iou = 0;
  int pred_pixels = 0;
  int truth_pixels = 0;
};

struct EvalReport {
  std::string model;      // free-form label for tables
  std::string mode = "model";
  std::string checkpoint;
  std::string parent_checkpoint;
  std::string config_hash;
  int seq_len = 1;
  std::uint64_t seed = 0;
  int T = 0;
  std::vector<FrameScore> frames;

  double mean() const;
  // Subsets present, in first-seen order.
  std::vector<std::string> subsets() const;
  double mean(const std::string& subset) const;

  std::string to_text() const;
  static EvalReport parse(const std::string& text);
  void save(const std::string& path) const;
  static EvalReport load(const std::string& path);
};

std::string subset_of(int person_count);

// Predicted masks for every frame of one group, in frame order.
using Predictor = std::function<std::vector<data::LabelGrid>(const data::SequenceSample&)>;

struct EvalOptions {
  std::string mode = "model";  // model | oracle | background
  std::uint64_t seed = 0;
  int seq_len = 0;             // 0: take it from the checkpoint
  int T = 0;                   // 0: the training schedule; anything else must match it
  int batch = 16;              // frames (or windows) per sampling call
  std::string image_dir;       // 3-panel composites when non-empty
  bool allow_hash_mismatch = false;
  std::string model_label;
  std::function<void(const std::string& group, int done, int total)> progress;
};

// Scores `predict` on every group and optionally writes composites.
EvalReport score(const std::vector<data::SequenceSample>& groups, const Predictor& predict,
                 const EvalOptions& opts);

// Sampler-backed predictors. Each group draws from its own generator seeded
// from (seed, group id), so results do not depend on group order.
Predictor frame_predictor(const train::Checkpoint& stage1, const EvalOptions& opts);
Predictor sequence_predictor(const train::Checkpoint& stage2, const train::Checkpoint& stage1,
                             const EvalOptions& opts);
Predictor oracle_predictor();
Predictor background_predictor();

// Full evaluation. `stage2` is null for a frame-level model; in oracle and
// background modes both checkpoints may be null.
EvalReport evaluate(const train::Checkpoint* stage1, const train::Checkpoint* stage2,
                    const std::vector<data::SequenceSample>& groups, const EvalOptions& opts);
EvalReport evaluate(const std::string& stage1_path, const std::string& stage2_path,
                    const std::string& dataset_root, const std::vector<std::string>& groups,
                    const EvalOptions& opts);

// Side-by-side composite: heatmaps stacked (horizontal over vertical) | truth | prediction.
void write_composite(const std::string& path, const data::Frame& frame, const data::LabelGrid& pred);

// Rows (model, seq length, subset, IoU) sorted by sequence length.
std::string format_table(std::vector<EvalReport> reports);

}  // namespace sdm::eval
