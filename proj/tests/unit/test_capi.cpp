#include <doctest.h>

#include <sdm/sdm.h>

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>

namespace fs = std::filesystem;

namespace {

using ConfigPtr = std::unique_ptr<sdm_config, decltype(&sdm_config_free)>;
using ReportPtr = std::unique_ptr<sdm_eval_report, decltype(&sdm_eval_report_free)>;

std::string take(char* s) {
  std::string out = s ? s : "";
  sdm_string_free(s);
  return out;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("sdm_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ConfigPtr small_config() {
  sdm_config* c = nullptr;
  REQUIRE(sdm_config_preset("desk", &c) == SDM_OK);
  ConfigPtr cfg(c, sdm_config_free);
  REQUIRE(sdm_config_set(c, "scene.silhouette", "[16, 24]") == SDM_OK);
  REQUIRE(sdm_config_set(c, "scene.horizontal", "[8, 8]") == SDM_OK);
  REQUIRE(sdm_config_set(c, "scene.vertical", "[8, 8]") == SDM_OK);
  return cfg;
}

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(sdm_version()).size() > 0);
  CHECK(std::string(sdm_status_name(SDM_OK)) == "ok");
  CHECK(std::string(sdm_status_name(SDM_HASH_MISMATCH)) == "hash-mismatch");
}

TEST_CASE("config errors set the last error") {
  sdm_config* c = nullptr;
  CHECK(sdm_config_preset("no-such-preset", &c) == SDM_INVALID_ARGUMENT);
  CHECK(c == nullptr);
  CHECK(std::string(sdm_last_error()).find("no-such-preset") != std::string::npos);
  CHECK(sdm_config_preset(nullptr, &c) == SDM_INVALID_ARGUMENT);

  auto cfg = small_config();
  CHECK(sdm_config_set(cfg.get(), "train.no_such_field", "1") == SDM_INVALID_ARGUMENT);
  CHECK(std::string(sdm_last_error()).find("train.no_such_field") != std::string::npos);
  REQUIRE(sdm_config_set(cfg.get(), "train.lr", "0.125") == SDM_OK);
  char* json = nullptr;
  REQUIRE(sdm_config_to_json(cfg.get(), &json) == SDM_OK);
  CHECK(take(json).find("0.125") != std::string::npos);
  CHECK(sdm_config_load("/nonexistent/config.json", &c) == SDM_IO);
}

TEST_CASE("config save and load round trip") {
  auto dir = scratch("config");
  auto cfg = small_config();
  REQUIRE(sdm_config_set(cfg.get(), "train.seed", "1234") == SDM_OK);
  const auto path = (dir / "run.json").string();
  REQUIRE(sdm_config_save(cfg.get(), path.c_str()) == SDM_OK);
  sdm_config* back = nullptr;
  REQUIRE(sdm_config_load(path.c_str(), &back) == SDM_OK);
  ConfigPtr guard(back, sdm_config_free);
  char *a = nullptr, *b = nullptr;
  sdm_config_to_json(cfg.get(), &a);
  sdm_config_to_json(back, &b);
  CHECK(take(a) == take(b));
}

TEST_CASE("iou through the C interface") {
  const uint8_t p[6] = {1, 1, 0, 0, 0, 0};
  const uint8_t t[6] = {0, 1, 1, 0, 0, 0};
  const uint8_t z[6] = {0, 0, 0, 0, 0, 0};
  double v = -1;
  REQUIRE(sdm_iou(p, t, 2, 3, &v) == SDM_OK);
  CHECK(v == doctest::Approx(1.0 / 3));
  REQUIRE(sdm_iou(z, z, 2, 3, &v) == SDM_OK);
  CHECK(v == 1.0);
  CHECK(sdm_iou(nullptr, t, 2, 3, &v) == SDM_INVALID_ARGUMENT);
  const uint8_t bad[6] = {2, 0, 0, 0, 0, 0};
  CHECK(sdm_iou(bad, t, 2, 3, &v) == SDM_INVALID_ARGUMENT);
}

TEST_CASE("export then evaluate with the oracle and background predictors") {
  auto dir = scratch("export");
  auto cfg = small_config();
  REQUIRE(sdm_config_set_persons(cfg.get(), 2) == SDM_OK);
  REQUIRE(sdm_export_dataset(cfg.get(), 2, 4, dir.string().c_str()) == SDM_OK);
  CHECK(fs::exists(dir / "manifest.json"));

  sdm_eval_options opts;
  sdm_eval_options_init(&opts);
  const auto root = dir.string();
  opts.mode = "oracle";
  opts.dataset_root = root.c_str();
  sdm_eval_report* r = nullptr;
  REQUIRE(sdm_evaluate(&opts, &r) == SDM_OK);
  ReportPtr oracle(r, sdm_eval_report_free);
  CHECK(sdm_eval_report_frames(r) == 8);
  CHECK(sdm_eval_report_mean(r) == 1.0);

  opts.mode = "background";
  opts.groups = "g0000";
  REQUIRE(sdm_evaluate(&opts, &r) == SDM_OK);
  ReportPtr background(r, sdm_eval_report_free);
  CHECK(sdm_eval_report_frames(r) == 4);
  CHECK(sdm_eval_report_mean(r) == 0.0);

  const sdm_eval_report* both[2] = {oracle.get(), background.get()};
  char* table = nullptr;
  REQUIRE(sdm_report_table(both, 2, &table) == SDM_OK);
  auto t = take(table);
  CHECK(t.find("oracle") != std::string::npos);
  CHECK(t.find("1.0000") != std::string::npos);
  CHECK(t.find("multi") != std::string::npos);

  const auto saved = (dir / "oracle.txt").string();
  REQUIRE(sdm_eval_report_save(oracle.get(), saved.c_str()) == SDM_OK);
  REQUIRE(sdm_eval_report_load(saved.c_str(), &r) == SDM_OK);
  ReportPtr loaded(r, sdm_eval_report_free);
  char *x = nullptr, *y = nullptr;
  sdm_eval_report_text(oracle.get(), &x);
  sdm_eval_report_text(loaded.get(), &y);
  CHECK(take(x) == take(y));

  opts.groups = "no_such_group";
  CHECK(sdm_evaluate(&opts, &r) != SDM_OK);
  opts.mode = "model";
  opts.groups = nullptr;
  CHECK(sdm_evaluate(&opts, &r) == SDM_INVALID_ARGUMENT);
}

TEST_CASE("missing checkpoints are reported as I/O errors") {
  char* info = nullptr;
  CHECK(sdm_checkpoint_info("/nonexistent.ckpt", &info) == SDM_IO);
  CHECK(info == nullptr);
}

TEST_CASE("train, inspect and sample a tiny model through the C interface") {
  auto dir = scratch("train");
  auto cfg = small_config();
  REQUIRE(sdm_export_dataset(cfg.get(), 1, 4, (dir / "data").string().c_str()) == SDM_OK);
  const auto ckpt = (dir / "stage1.ckpt").string();
  const auto data = (dir / "data").string();
  REQUIRE(sdm_config_set(cfg.get(), "data.root", ("\"" + data + "\"").c_str()) == SDM_OK);
  REQUIRE(sdm_config_set(cfg.get(), "checkpoint.out", ("\"" + ckpt + "\"").c_str()) == SDM_OK);
  REQUIRE(sdm_config_set(cfg.get(), "train.max_steps", "2") == SDM_OK);
  REQUIRE(sdm_config_set(cfg.get(), "train.batch_size", "2") == SDM_OK);
  REQUIRE(sdm_config_set(cfg.get(), "diffusion.T", "10") == SDM_OK);
  const char* model[][2] = {{"model.encoder.horizontal", "[8, 8]"},
                             {"model.encoder.vertical", "[8, 8]"},
                             {"model.encoder.widths", "[4, 8, 8, 8]"},
                             {"model.encoder.levels", "[[2, 3], [4, 6], [8, 12]]"},
                             {"model.denoiser.mask", "[16, 24]"},
                             {"model.denoiser.embed_dim", "4"},
                             {"model.denoiser.widths", "[8, 8, 8]"},
                             {"model.denoiser.attn_dim", "8"}};
  for (auto& kv : model) REQUIRE(sdm_config_set(cfg.get(), kv[0], kv[1]) == SDM_OK);

  int calls = 0;
  auto progress = [](void* user, int, int, double) { ++*static_cast<int*>(user); };
  char* hash = nullptr;
  const auto status = sdm_train_frame(cfg.get(), progress, &calls, &hash);
  INFO(sdm_last_error());
  REQUIRE(status == SDM_OK);
  CHECK(calls == 2);
  const auto h = take(hash);
  CHECK(h.size() == 16);

  char* info = nullptr;
  REQUIRE(sdm_checkpoint_info(ckpt.c_str(), &info) == SDM_OK);
  auto i = take(info);
  CHECK(i.find(h) != std::string::npos);
  CHECK(i.find("frame") != std::string::npos);

  sdm_eval_options opts;
  sdm_eval_options_init(&opts);
  opts.stage1_path = ckpt.c_str();
  opts.dataset_root = data.c_str();
  opts.seed = 5;
  int written = 0;
  REQUIRE(sdm_sample(&opts, (dir / "masks").string().c_str(), &written) == SDM_OK);
  CHECK(written == 4);
  CHECK(fs::exists(dir / "masks" / "g0000" / "frame_00003.pgm"));

  opts.T = 11;
  sdm_eval_report* r = nullptr;
  CHECK(sdm_evaluate(&opts, &r) == SDM_STAGE);
  CHECK(std::string(sdm_last_error()).find("T=11") != std::string::npos);
}
