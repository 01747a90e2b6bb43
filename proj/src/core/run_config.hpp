#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "data.hpp"
#include "denoiser.hpp"
#include "objectives.hpp"

namespace sdm::train {

enum class Stage { Frame, Sequence };

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

struct RunConfig {
  Stage stage = Stage::Frame;

  int T = 500;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  nn::ModelConfig model;
  data::SceneConfig scene;

  int seq_len = 1;
  int batch_size = 16;
  double lr = 2e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double weight_decay = 0.01;
  double grad_clip = 1.0;  // <= 0 disables
  loss::Lambdas lambdas;
  int max_steps = 1000;
  std::uint64_t seed = 0;
  int log_every = 50;
  int checkpoint_every = 0;
  int window_stride = 1;

  std::string dataset_root;
  std::vector<std::string> groups;  // empty: every group in the manifest
  std::string checkpoint_out;
  std::string stage1_checkpoint;    // path or hash of the parent checkpoint
  std::string log_path;

  // "full", "desk", "full-seq4", "full-seq12", "desk-seq4", "desk-seq12".
  static RunConfig preset(const std::string& name);

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  // Dotted-key override, e.g. set("train.lr", "1e-4"). Values parse as JSON
  // when possible and fall back to plain strings.
  void set(const std::string& key, const std::string& value);
};

}  // namespace sdm::train
