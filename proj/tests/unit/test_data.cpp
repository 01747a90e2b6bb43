#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "data.hpp"
#include "capsule_oracle.hpp"
#include "fixtures.hpp"

using namespace sdm::data;
namespace fs = std::filesystem;

namespace {

using oracle::analytic;

LabelGrid binarize(const Heatmap& h) {
  LabelGrid g(h.rows, h.cols);
  for (std::size_t i = 0; i < h.values.size(); ++i) {
    REQUIRE((h.values[i] == 0.0f || h.values[i] == 1.0f));
    g.values[i] = h.values[i] > 0.5f;
  }
  return g;
}

SceneConfig oracle_scene(double x, double y) {
  SceneConfig cfg;
  cfg.noise_sigma = 0;
  cfg.blur_sigma_cells = 0;
  cfg.silhouette = {96, 120};
  cfg.horizontal = {48, 40};
  cfg.vertical = {44, 52};
  cfg.persons = {PersonSpec{x, y, 1.7, 0.2, 0.0, std::numbers::pi / 2}};
  return cfg;
}

}  // namespace

TEST_CASE("renderer matches the analytic capsule projection at zero noise") {
  for (auto [x, y] : {std::pair{0.0, 3.0}, std::pair{-1.13, 1.71}, std::pair{0.77, 4.9}}) {
    auto cfg = oracle_scene(x, y);
    auto seq = simulate_sequence(cfg, 1);
    auto want = analytic(cfg.persons[0], cfg);
    const auto& f = seq.frames[0];
    CHECK(f.mask.labels == want.image);
    CHECK(binarize(f.heatmaps.horizontal) == want.horizontal);
    CHECK(binarize(f.heatmaps.vertical) == want.vertical);
    CHECK(std::count(want.image.values.begin(), want.image.values.end(), 1) > 50);
  }
}

TEST_CASE("centred person peaks at the centre of the plan grid") {
  SceneConfig cfg;
  cfg.horizontal = {33, 33};
  cfg.vertical = {33, 33};
  cfg.silhouette = {40, 50};
  cfg.persons = {PersonSpec{0.0, 3.0, 1.7, 0.3}};
  auto seq = simulate_sequence(cfg, 1);
  const auto& h = seq.frames[0].heatmaps.horizontal;
  auto it = std::max_element(h.values.begin(), h.values.end());
  const auto idx = static_cast<int>(it - h.values.begin());
  CHECK(idx / h.cols == 16);
  CHECK(idx % h.cols == 16);
  CHECK(*it == 1.0f);
}

TEST_CASE("empty scene renders nothing") {
  SceneConfig cfg = SceneConfig::desk();
  cfg.persons.clear();
  CHECK(fixtures::code_of([&] { simulate_sequence(cfg, 2); }) == sdm::ErrorCode::InvalidArgument);
  cfg.allow_empty = true;
  auto seq = simulate_sequence(cfg, 2);
  for (const auto& f : seq.frames) {
    CHECK(std::all_of(f.mask.labels.values.begin(), f.mask.labels.values.end(), [](auto v) { return v == 0; }));
    CHECK(std::all_of(f.heatmaps.horizontal.values.begin(), f.heatmaps.horizontal.values.end(),
                      [](float v) { return v == 0.0f; }));
    CHECK(std::all_of(f.heatmaps.vertical.values.begin(), f.heatmaps.vertical.values.end(),
                      [](float v) { return v == 0.0f; }));
  }
}

TEST_CASE("simulation is deterministic and stays in range") {
  SceneConfig cfg = SceneConfig::desk();
  cfg.noise_sigma = 0.3;
  cfg.randomize_start = true;
  cfg.persons = {PersonSpec{0, 3, 1.7, 0.16, 1.0, 0}, PersonSpec{0, 3, 1.6, 0.15, 0.7, 1}};
  cfg.seed = 99;
  auto a = simulate_sequence(cfg, 30);
  auto b = simulate_sequence(cfg, 30);
  REQUIRE(a.frames.size() == 30);
  CHECK(a.person_count == 2);
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    CHECK(a.frames[i].mask.labels == b.frames[i].mask.labels);
    CHECK(a.frames[i].heatmaps.horizontal == b.frames[i].heatmaps.horizontal);
    CHECK(a.frames[i].heatmaps.vertical == b.frames[i].heatmaps.vertical);
    for (auto v : a.frames[i].mask.labels.values) CHECK(v <= 1);
    for (auto* h : {&a.frames[i].heatmaps.horizontal, &a.frames[i].heatmaps.vertical}) {
      for (float v : h->values) CHECK((v >= 0.0f && v <= 1.0f));
    }
  }
  cfg.seed = 100;
  auto c = simulate_sequence(cfg, 30);
  CHECK(!(c.frames[5].heatmaps.horizontal == a.frames[5].heatmaps.horizontal));
}

TEST_CASE("persons outside the arena are rejected") {
  SceneConfig cfg;
  cfg.persons = {PersonSpec{3.0, 3.0}};
  CHECK(fixtures::code_of([&] { simulate_sequence(cfg, 1); }) == sdm::ErrorCode::InvalidArgument);
}

TEST_CASE("export and load round trip") {
  auto root = fixtures::scratch("roundtrip");
  auto cfg = fixtures::tiny_scene();
  cfg.noise_sigma = 0.2;
  auto manifest = export_synthetic_dataset(cfg, 2, 6, root);
  REQUIRE(manifest.groups.size() == 2);
  for (int g = 0; g < 2; ++g) {
    SceneConfig gc = cfg;
    gc.seed = group_seed(cfg.seed, g);
    auto direct = simulate_sequence(gc, 6);
    auto loaded = load_hiber_group(root, group_name(g));
    CHECK(!loaded.partial);
    REQUIRE(loaded.sample.frames.size() == 6);
    for (int i = 0; i < 6; ++i) {
      CHECK(loaded.sample.frames[i].mask.labels == direct.frames[i].mask.labels);
      CHECK(loaded.sample.frames[i].heatmaps.horizontal == direct.frames[i].heatmaps.horizontal);
      CHECK(loaded.sample.frames[i].heatmaps.vertical == direct.frames[i].heatmaps.vertical);
    }
  }
  auto again = read_manifest(root);
  CHECK(again.config_hash == manifest.config_hash);
  CHECK(again.groups[1].seed == manifest.groups[1].seed);
}

TEST_CASE("full-length groups, file counts and missing modalities") {
  auto root = fixtures::scratch("hiber590");
  auto cfg = fixtures::tiny_scene();
  export_synthetic_dataset(cfg, 2, 590, root);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root)) files += e.is_regular_file();
  CHECK(files == 2 * 3 * 590 + 1);

  CHECK(load_hiber_group(root, "g0000").sample.frames.size() == 590);

  fs::remove(root / "g0001" / "ver" / "frame_00007.hm");
  auto partial = load_hiber_group(root, "g0001");
  CHECK(partial.partial);
  CHECK(partial.sample.frames.size() == 589);
  CHECK(partial.skipped == std::vector<int>{7});

  for (auto dir : {"hor", "ver", "mask"}) {
    for (const auto& e : fs::directory_iterator(root / "g0000" / dir)) {
      if (e.path().stem() == "frame_00009") fs::remove(e.path());
    }
  }
  try {
    load_hiber_group(root, "g0000");
    FAIL("expected a count mismatch");
  } catch (const sdm::Error& e) {
    CHECK(e.code() == sdm::ErrorCode::CountMismatch);
    CHECK(std::string(e.what()).find("[9]") != std::string::npos);
  }
}

TEST_CASE("empty group directory reports no frames") {
  auto root = fixtures::scratch("empty_group");
  fs::create_directories(root / "g0000");
  CHECK(fixtures::code_of([&] { load_hiber_group(root, "g0000"); }) == sdm::ErrorCode::NoFrames);
}

TEST_CASE("manifest hash tracks the scene configuration") {
  auto a = fixtures::tiny_scene();
  auto b = a;
  CHECK(config_hash(a) == config_hash(b));
  b.noise_sigma += 0.01;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.persons[0].height = 1.6;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("windows") {
  auto make = [](const std::string& id, int frames) {
    SequenceSample s;
    s.group_id = id;
    for (int i = 0; i < frames; ++i) {
      Frame f;
      f.heatmaps.frame_index = f.mask.frame_index = i;
      s.frames.push_back(f);
    }
    return s;
  };
  WindowStats st;
  auto w = make_windows({make("a", 590)}, 12, 12, &st);
  CHECK(w.size() == 49);
  CHECK(12 * st.windows + st.dropped_frames == 590);

  w = make_windows({make("a", 7), make("b", 5)}, 1, 1, &st);
  CHECK(w.size() == 12);
  CHECK(st.dropped_frames == 0);

  w = make_windows({make("a", 11)}, 12, 12, &st);
  CHECK(w.empty());
  CHECK(st.dropped_tails == 1);
  CHECK(st.dropped_frames == 11);

  // windows never straddle two groups or an index gap
  auto gappy = make("c", 10);
  gappy.frames.erase(gappy.frames.begin() + 4);
  w = make_windows({make("a", 6), make("b", 6), gappy}, 4, 4, &st);
  for (const auto& win : w) {
    for (std::size_t k = 1; k < win.frames.size(); ++k) {
      CHECK(win.frames[k].mask.frame_index == win.frames[k - 1].mask.frame_index + 1);
    }
  }
  CHECK(st.windows == 1 + 1 + 1 + 1);
  CHECK(4 * st.windows + st.dropped_frames == 6 + 6 + 9);
}
