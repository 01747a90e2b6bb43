#pragma once

#include <doctest.h>
#include <torch/torch.h>

// c10 logging defines its own CHECK; the tests mean doctest's.
#undef CHECK
#define CHECK(...) DOCTEST_CHECK(__VA_ARGS__)

#include <filesystem>
#include <random>
#include <string>

#include "denoiser.hpp"
#include "error.hpp"
#include "run_config.hpp"

namespace fixtures {

// Small enough that a forward pass takes milliseconds.
inline sdm::nn::ModelConfig tiny_model() {
  sdm::nn::ModelConfig cfg;
  cfg.encoder.horizontal = {8, 8};
  cfg.encoder.vertical = {8, 8};
  cfg.encoder.widths = {4, 8, 8, 8};
  cfg.encoder.levels = {{2, 3}, {4, 6}, {8, 12}};
  cfg.denoiser.mask = {16, 24};
  cfg.denoiser.embed_dim = 4;
  cfg.denoiser.widths = {8, 8, 8};
  cfg.denoiser.attn_dim = 8;
  return cfg;
}

inline sdm::data::SceneConfig tiny_scene() {
  auto s = sdm::data::SceneConfig::desk();
  s.silhouette = {16, 24};
  s.horizontal = {8, 8};
  s.vertical = {8, 8};
  s.blur_sigma_cells = 0.5;
  s.persons = {sdm::data::PersonSpec{0.0, 3.0, 1.7, 0.3, 0.8, 0.5}};
  return s;
}

inline sdm::train::RunConfig tiny_run(std::uint64_t seed = 7) {
  sdm::train::RunConfig c;
  c.T = 20;
  c.model = tiny_model();
  c.scene = tiny_scene();
  c.batch_size = 4;
  c.max_steps = 5;
  c.seed = seed;
  c.log_every = 0;
  return c;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("sdm_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

template <class F>
sdm::ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const sdm::Error& e) {
    return e.code();
  }
  return static_cast<sdm::ErrorCode>(0);
}

}  // namespace fixtures
