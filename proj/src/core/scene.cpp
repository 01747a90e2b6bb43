#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "data.hpp"
#include "error.hpp"
#include "hash.hpp"

namespace sdm::data {

SceneConfig SceneConfig::desk() {
  SceneConfig cfg;
  cfg.silhouette = {40, 50};
  cfg.horizontal = {16, 16};
  cfg.vertical = {16, 16};
  cfg.blur_sigma_cells = 0.75;
  return cfg;
}

void SceneConfig::validate() const {
  require(arena_x > 0 && arena_y > 0 && arena_z > 0, ErrorCode::InvalidArgument,
          "arena extents must be positive");
  require(noise_sigma >= 0, ErrorCode::InvalidArgument, "noise sigma must be >= 0");
  require(blur_sigma_cells >= 0, ErrorCode::InvalidArgument, "blur sigma must be >= 0");
  require(allow_empty || !persons.empty(), ErrorCode::InvalidArgument,
          "scene needs at least one person");
  for (auto g : {silhouette, horizontal, vertical}) {
    require(g.rows > 0 && g.cols > 0, ErrorCode::InvalidArgument, "grid sizes must be positive");
  }
  for (const auto& p : persons) {
    require(p.height > 0 && p.radius > 0 && p.speed >= 0, ErrorCode::InvalidArgument,
            "person height/radius must be positive and speed non-negative");
  }
}

void set_person_count(SceneConfig& cfg, int count) {
  require(count >= 0, ErrorCode::InvalidArgument, "person count must be >= 0");
  cfg.persons.clear();
  for (int i = 0; i < count; ++i) {
    PersonSpec p;
    p.x = -cfg.arena_x / 2 + cfg.arena_x * (i + 1) / (count + 1);
    p.y = cfg.arena_y / 2;
    p.speed = 0.8;
    p.heading = (i % 2 == 0 ? 1 : -1) * std::numbers::pi / 2;
    cfg.persons.push_back(p);
  }
  if (count == 0) cfg.allow_empty = true;
}

nlohmann::json to_json(const SceneConfig& cfg) {
  nlohmann::json persons = nlohmann::json::array();
  for (const auto& p : cfg.persons) {
    persons.push_back({{"x", p.x}, {"y", p.y}, {"height", p.height}, {"radius", p.radius},
                       {"speed", p.speed}, {"heading", p.heading}});
  }
  auto grid = [](GridSize g) { return nlohmann::json::array({g.rows, g.cols}); };
  return {{"arena", {cfg.arena_x, cfg.arena_y, cfg.arena_z}},
          {"persons", persons},
          {"noise_sigma", cfg.noise_sigma},
          {"blur_sigma_cells", cfg.blur_sigma_cells},
          {"heading_jitter", cfg.heading_jitter},
          {"frame_dt", cfg.frame_dt},
          {"silhouette", grid(cfg.silhouette)},
          {"horizontal", grid(cfg.horizontal)},
          {"vertical", grid(cfg.vertical)},
          {"seed", cfg.seed},
          {"randomize_start", cfg.randomize_start},
          {"allow_empty", cfg.allow_empty}};
}

SceneConfig scene_from_json(const nlohmann::json& j) {
  SceneConfig cfg;
  auto grid = [](const nlohmann::json& g) { return GridSize{g.at(0).get<int>(), g.at(1).get<int>()}; };
  if (j.contains("arena")) {
    cfg.arena_x = j["arena"].at(0);
    cfg.arena_y = j["arena"].at(1);
    cfg.arena_z = j["arena"].at(2);
  }
  if (j.contains("persons")) {
    cfg.persons.clear();
    for (const auto& p : j["persons"]) {
      PersonSpec s;
      s.x = p.value("x", 0.0);
      s.y = p.value("y", 3.0);
      s.height = p.value("height", s.height);
      s.radius = p.value("radius", s.radius);
      s.speed = p.value("speed", 0.0);
      s.heading = p.value("heading", 0.0);
      cfg.persons.push_back(s);
    }
  }
  cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
  cfg.blur_sigma_cells = j.value("blur_sigma_cells", cfg.blur_sigma_cells);
  cfg.heading_jitter = j.value("heading_jitter", cfg.heading_jitter);
  cfg.frame_dt = j.value("frame_dt", cfg.frame_dt);
  if (j.contains("silhouette")) cfg.silhouette = grid(j["silhouette"]);
  if (j.contains("horizontal")) cfg.horizontal = grid(j["horizontal"]);
  if (j.contains("vertical")) cfg.vertical = grid(j["vertical"]);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.randomize_start = j.value("randomize_start", cfg.randomize_start);
  cfg.allow_empty = j.value("allow_empty", cfg.allow_empty);
  return cfg;
}

std::string config_hash(const SceneConfig& cfg) { return fnv_hex(to_json(cfg).dump()); }

std::vector<Capsule> body_capsules(const PersonSpec& p, double gait_phase) {
  const double h = p.height;
  const double r = p.radius;
  const double head_r = 0.55 * r;
  const double leg_r = 0.4 * r;

  std::vector<Capsule> parts;
  parts.push_back({{p.x, p.y, 0.50 * h}, {p.x, p.y, 0.78 * h}, r});
  const double head_top = h - head_r;
  parts.push_back({{p.x, p.y, std::min(0.87 * h, head_top)}, {p.x, p.y, head_top}, head_r});

  // Legs swing along the heading; hips sit either side across it.
  const double fx = std::cos(p.heading), fy = std::sin(p.heading);
  const double sx = -fy, sy = fx;
  const double swing = 0.15 * h * std::min(1.0, p.speed / 1.2) * std::sin(gait_phase);
  const double hip_z = 0.50 * h;
  for (int side : {-1, 1}) {
    const double hx = p.x + side * 0.5 * r * sx;
    const double hy = p.y + side * 0.5 * r * sy;
    const double s = side * swing;
    parts.push_back({{hx, hy, hip_z}, {hx + s * fx, hy + s * fy, leg_r}, leg_r});
  }
  return parts;
}

namespace {

struct Pt {
  double u, v;
};

// (u, v) = plane coordinates of a 3-D point.
Pt project(const Vec3& p, Plane plane) {
  switch (plane) {
    case Plane::Image: return {p.x, p.z};
    case Plane::Horizontal: return {p.x, p.y};
    case Plane::Vertical: return {p.y, p.z};
  }
  return {0, 0};
}

// Cell centre of (row, col) in plane coordinates.
Pt cell_centre(int row, int col, Plane plane, GridSize size, const SceneConfig& cfg) {
  const double fr = (row + 0.5) / size.rows;
  const double fc = (col + 0.5) / size.cols;
  switch (plane) {
    case Plane::Image: return {-cfg.arena_x / 2 + fc * cfg.arena_x, cfg.arena_z - fr * cfg.arena_z};
    case Plane::Horizontal: return {-cfg.arena_x / 2 + fc * cfg.arena_x, fr * cfg.arena_y};
    case Plane::Vertical: return {fc * cfg.arena_y, cfg.arena_z - fr * cfg.arena_z};
  }
  return {0, 0};
}

double segment_dist2(Pt p, Pt a, Pt b) {
  const double du = b.u - a.u, dv = b.v - a.v;
  const double len2 = du * du + dv * dv;
  double s = 0.0;
  if (len2 > 0) s = std::clamp(((p.u - a.u) * du + (p.v - a.v) * dv) / len2, 0.0, 1.0);
  const double eu = p.u - (a.u + s * du), ev = p.v - (a.v + s * dv);
  return eu * eu + ev * ev;
}

void normalize_unit(Heatmap& h) {
  float peak = 0.0f;
  for (float v : h.values) peak = std::max(peak, v);
  if (peak <= 0.0f) return;
  for (float& v : h.values) v /= peak;
}

}  // namespace

LabelGrid render_occupancy(const std::vector<Capsule>& capsules, Plane plane, GridSize size,
                           const SceneConfig& cfg) {
  LabelGrid out(size.rows, size.cols, 0);
  for (const auto& cap : capsules) {
    const Pt a = project(cap.a, plane), b = project(cap.b, plane);
    const double r2 = cap.radius * cap.radius;
    for (int r = 0; r < size.rows; ++r) {
      for (int c = 0; c < size.cols; ++c) {
        if (out.at(r, c)) continue;
        if (segment_dist2(cell_centre(r, c, plane, size, cfg), a, b) <= r2) out.at(r, c) = 1;
      }
    }
  }
  return out;
}

Heatmap gaussian_blur(const LabelGrid& occ, double sigma) {
  Heatmap out(occ.rows, occ.cols, 0.0f);
  if (sigma <= 0.0) {
    for (std::size_t i = 0; i < occ.values.size(); ++i) out.values[i] = occ.values[i];
    return out;
  }
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += kernel[k + radius];
  }
  for (double& k : kernel) k /= total;

  std::vector<double> tmp(occ.values.size(), 0.0);
  for (int r = 0; r < occ.rows; ++r) {
    for (int c = 0; c < occ.cols; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int cc = c + k;
        if (cc >= 0 && cc < occ.cols) acc += kernel[k + radius] * occ.at(r, cc);
      }
      tmp[static_cast<std::size_t>(r) * occ.cols + c] = acc;
    }
  }
  for (int r = 0; r < occ.rows; ++r) {
    for (int c = 0; c < occ.cols; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int rr = r + k;
        if (rr >= 0 && rr < occ.rows) acc += kernel[k + radius] * tmp[static_cast<std::size_t>(rr) * occ.cols + c];
      }
      out.at(r, c) = static_cast<float>(acc);
    }
  }
  return out;
}

SequenceSample simulate_sequence(const SceneConfig& cfg, int num_frames) {
  cfg.validate();
  require(num_frames >= 1, ErrorCode::InvalidArgument, "num_frames must be >= 1");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<PersonSpec> persons = cfg.persons;
  if (cfg.randomize_start) {
    for (auto& p : persons) {
      const double m = 2.0 * p.radius;
      p.x = -cfg.arena_x / 2 + m + unit(rng) * (cfg.arena_x - 2 * m);
      p.y = m + unit(rng) * (cfg.arena_y - 2 * m);
      p.heading = unit(rng) * 2.0 * std::numbers::pi;
    }
  }
  for (std::size_t i = 0; i < persons.size(); ++i) {
    const auto& p = persons[i];
    const bool inside = std::abs(p.x) + p.radius <= cfg.arena_x / 2 && p.y - p.radius >= 0 &&
                        p.y + p.radius <= cfg.arena_y && p.height <= cfg.arena_z;
    require(inside, ErrorCode::InvalidArgument,
            "person " + std::to_string(i) + " starts outside the arena");
  }

  SequenceSample seq;
  seq.person_count = static_cast<int>(persons.size());
  std::vector<double> phase(persons.size(), 0.0);

  for (int f = 0; f < num_frames; ++f) {
    std::vector<Capsule> capsules;
    for (std::size_t i = 0; i < persons.size(); ++i) {
      auto parts = body_capsules(persons[i], phase[i]);
      capsules.insert(capsules.end(), parts.begin(), parts.end());
    }

    Frame frame;
    frame.mask.frame_index = f;
    frame.heatmaps.frame_index = f;
    frame.mask.labels = render_occupancy(capsules, Plane::Image, cfg.silhouette, cfg);
    frame.heatmaps.horizontal = gaussian_blur(
        render_occupancy(capsules, Plane::Horizontal, cfg.horizontal, cfg), cfg.blur_sigma_cells);
    frame.heatmaps.vertical = gaussian_blur(
        render_occupancy(capsules, Plane::Vertical, cfg.vertical, cfg), cfg.blur_sigma_cells);
    if (cfg.noise_sigma > 0) {
      for (Heatmap* h : {&frame.heatmaps.horizontal, &frame.heatmaps.vertical}) {
        for (float& v : h->values) {
          v = static_cast<float>(v * std::max(0.0, 1.0 + cfg.noise_sigma * gauss(rng)));
        }
      }
    }
    normalize_unit(frame.heatmaps.horizontal);
    normalize_unit(frame.heatmaps.vertical);
    seq.frames.push_back(std::move(frame));

    for (std::size_t i = 0; i < persons.size(); ++i) {
      auto& p = persons[i];
      p.heading += cfg.heading_jitter * gauss(rng);
      p.x += p.speed * cfg.frame_dt * std::cos(p.heading);
      p.y += p.speed * cfg.frame_dt * std::sin(p.heading);
      const double lo_x = -cfg.arena_x / 2 + p.radius, hi_x = cfg.arena_x / 2 - p.radius;
      const double lo_y = p.radius, hi_y = cfg.arena_y - p.radius;
      if (p.x < lo_x) { p.x = 2 * lo_x - p.x; p.heading = std::numbers::pi - p.heading; }
      if (p.x > hi_x) { p.x = 2 * hi_x - p.x; p.heading = std::numbers::pi - p.heading; }
      if (p.y < lo_y) { p.y = 2 * lo_y - p.y; p.heading = -p.heading; }
      if (p.y > hi_y) { p.y = 2 * hi_y - p.y; p.heading = -p.heading; }
      phase[i] += 2.0 * std::numbers::pi * p.speed * cfg.frame_dt / (0.8 * p.height);
    }
  }
  return seq;
}

}  // namespace sdm::data
