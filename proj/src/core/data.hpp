#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace sdm::data {

struct GridSize {
  int rows = 0;
  int cols = 0;
  friend bool operator==(const GridSize&, const GridSize&) = default;
};

template <class T>
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(int r, int c, T fill = T{}) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}

  GridSize size() const { return {rows, cols}; }
  T& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  const T& at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
  friend bool operator==(const Grid&, const Grid&) = default;
};

using Heatmap = Grid<float>;
using LabelGrid = Grid<std::uint8_t>;

// One frame's conditioning views. Horizontal is the plan view (rows: depth
// from the sensor, cols: lateral x); vertical is the elevation view (rows:
// height top-down, cols: depth).
struct HeatmapPair {
  Heatmap horizontal;
  Heatmap vertical;
  int frame_index = 0;
};

// Image-plane silhouette (rows: height top-down, cols: lateral x), values {0,1}.
struct SilhouetteMask {
  LabelGrid labels;
  int frame_index = 0;
};

struct Frame {
  HeatmapPair heatmaps;
  SilhouetteMask mask;
};

struct SequenceSample {
  std::vector<Frame> frames;
  std::string group_id;
  int person_count = 0;
};

struct PersonSpec {
  double x = 0.0;        // lateral position, metres (arena centred at 0)
  double y = 0.0;        // depth from the sensor, metres
  double height = 1.7;
  double radius = 0.16;  // torso radius; head and legs scale from it
  double speed = 0.0;    // m/s
  double heading = 0.0;  // radians in the x-y plane
};

struct SceneConfig {
  double arena_x = 4.0;
  double arena_y = 6.0;
  double arena_z = 2.2;
  std::vector<PersonSpec> persons{PersonSpec{0.0, 3.0}};
  double noise_sigma = 0.0;
  double blur_sigma_cells = 1.0;  // Gaussian blur of heatmaps, in grid cells
  double heading_jitter = 0.1;    // radians per frame (std dev)
  double frame_dt = 0.1;          // seconds between frames
  GridSize silhouette{160, 200};
  GridSize horizontal{64, 64};
  GridSize vertical{64, 64};
  std::uint64_t seed = 0;
  bool randomize_start = false;   // redraw positions/headings from the seed
  bool allow_empty = false;       // permit zero persons (test scenes)

  static SceneConfig desk();
  void validate() const;
};

// Replaces the persons with `count` walkers spread evenly across the arena.
void set_person_count(SceneConfig& cfg, int count);

nlohmann::json to_json(const SceneConfig& cfg);
SceneConfig scene_from_json(const nlohmann::json& j);
std::string config_hash(const SceneConfig& cfg);

// ---- capsule geometry ------------------------------------------------------

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

struct Capsule {
  Vec3 a;
  Vec3 b;
  double radius = 0;
};

enum class Plane { Image, Horizontal, Vertical };

// Body parts of one person at a given walking state.
std::vector<Capsule> body_capsules(const PersonSpec& p, double gait_phase);

// Binary occupancy of the projection of `capsules` onto `plane`, sampled at
// cell centres of a grid of the given size.
LabelGrid render_occupancy(const std::vector<Capsule>& capsules, Plane plane, GridSize size,
                           const SceneConfig& cfg);

// Separable Gaussian blur with zero boundary; kernel radius ceil(3 sigma).
Heatmap gaussian_blur(const LabelGrid& occupancy, double sigma_cells);

// ---- simulation and I/O ----------------------------------------------------

SequenceSample simulate_sequence(const SceneConfig& cfg, int num_frames);

struct GroupLoad {
  SequenceSample sample;
  std::vector<int> skipped;  // frame indices with a missing modality
  bool partial = false;
};

void write_heatmap(const std::filesystem::path& path, const Heatmap& h);
Heatmap read_heatmap(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const LabelGrid& g, int maxval_scale = 255);
LabelGrid read_mask_pgm(const std::filesystem::path& path);
void write_gray_pgm(const std::filesystem::path& path, int rows, int cols,
                    const std::vector<std::uint8_t>& pixels);

void write_group(const std::filesystem::path& root, const SequenceSample& sample);
GroupLoad load_hiber_group(const std::filesystem::path& root, const std::string& group_id);

struct Manifest {
  struct Group {
    std::string id;
    int frames = 0;
    std::uint64_t seed = 0;
    int person_count = 0;
  };
  std::string config_hash;
  nlohmann::json scene_config;
  std::vector<Group> groups;

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
};

Manifest read_manifest(const std::filesystem::path& root);
void write_manifest(const std::filesystem::path& root, const Manifest& m);

Manifest export_synthetic_dataset(const SceneConfig& cfg, int groups, int frames_per_group,
                                  const std::filesystem::path& out);

// Per-group seed derivation used by the exporter.
std::uint64_t group_seed(std::uint64_t base, int group);
std::string group_name(int group);

struct WindowStats {
  int windows = 0;
  int dropped_frames = 0;
  int dropped_tails = 0;
};

// Sliding windows of N consecutive frames. Windows never cross a group or a
// gap in frame indices.
std::vector<SequenceSample> make_windows(const std::vector<SequenceSample>& groups, int N,
                                         int stride, WindowStats* stats = nullptr);

}  // namespace sdm::data
