#include "sdm/sdm.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>

#include "data.hpp"
#include "error.hpp"
#include "evaluate.hpp"
#include "run_config.hpp"
#include "trainer.hpp"

struct sdm_config {
  sdm::train::RunConfig cfg;
};

struct sdm_eval_report {
  sdm::eval::EvalReport report;
};

namespace {

thread_local std::string last_error;

sdm_status to_status(sdm::ErrorCode c) { return static_cast<sdm_status>(static_cast<int>(c)); }

template <class F>
sdm_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return SDM_OK;
  } catch (const sdm::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const nlohmann::json::exception& e) {
    last_error = std::string("configuration: ") + e.what();
    return SDM_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    last_error = e.what();
    return SDM_INTERNAL;
  }
}

char* dup(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  sdm::require(p != nullptr, sdm::ErrorCode::InvalidArgument, std::string(what) + " is null");
}

std::vector<std::string> split_groups(const char* s) {
  std::vector<std::string> out;
  if (s == nullptr) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

sdm::eval::EvalOptions convert(const sdm_eval_options& o) {
  sdm::eval::EvalOptions e;
  if (o.mode != nullptr) e.mode = o.mode;
  e.seed = o.seed;
  e.seq_len = o.seq_len;
  e.T = o.T;
  if (o.batch > 0) e.batch = o.batch;
  if (o.image_dir != nullptr) e.image_dir = o.image_dir;
  if (o.model_label != nullptr) e.model_label = o.model_label;
  e.allow_hash_mismatch = o.allow_hash_mismatch != 0;
  return e;
}

sdm::train::StepCallback progress_adapter(sdm_progress_fn fn, void* user, int max_steps) {
  if (fn == nullptr) return nullptr;
  return [fn, user, max_steps](const sdm::train::StepLog& s) { fn(user, s.step, max_steps, s.loss.total); };
}

}  // namespace

extern "C" {

const char* sdm_version(void) { return "0.1.0"; }

const char* sdm_last_error(void) { return last_error.c_str(); }

const char* sdm_status_name(sdm_status s) {
  switch (s) {
    case SDM_OK: return "ok";
    case SDM_INVALID_ARGUMENT: return "invalid-argument";
    case SDM_IO: return "io";
    case SDM_CORRUPT: return "corrupt";
    case SDM_HASH_MISMATCH: return "hash-mismatch";
    case SDM_SHAPE: return "shape";
    case SDM_NO_FRAMES: return "no-frames";
    case SDM_DIVERGED: return "diverged";
    case SDM_STAGE: return "stage";
    case SDM_COUNT_MISMATCH: return "count-mismatch";
    case SDM_INTERNAL: return "internal";
  }
  return "unknown";
}

void sdm_string_free(char* s) { std::free(s); }

sdm_status sdm_config_preset(const char* name, sdm_config** out) {
  return guarded([&] {
    need(name, "preset name");
    need(out, "output handle");
    *out = new sdm_config{sdm::train::RunConfig::preset(name)};
  });
}

sdm_status sdm_config_load(const char* path, sdm_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "output handle");
    *out = new sdm_config{sdm::train::RunConfig::load(path)};
  });
}

sdm_status sdm_config_save(const sdm_config* cfg, const char* path) {
  return guarded([&] {
    need(cfg, "config");
    need(path, "path");
    cfg->cfg.save(path);
  });
}

sdm_status sdm_config_set(sdm_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    need(cfg, "config");
    need(key, "key");
    need(value, "value");
    cfg->cfg.set(key, value);
  });
}

sdm_status sdm_config_set_persons(sdm_config* cfg, int count) {
  return guarded([&] {
    need(cfg, "config");
    sdm::data::set_person_count(cfg->cfg.scene, count);
  });
}

sdm_status sdm_config_to_json(const sdm_config* cfg, char** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "output string");
    *out = dup(cfg->cfg.to_json().dump(2));
  });
}

void sdm_config_free(sdm_config* cfg) { delete cfg; }

sdm_status sdm_export_dataset(const sdm_config* cfg, int groups, int frames, const char* out_dir) {
  return guarded([&] {
    need(cfg, "config");
    need(out_dir, "output directory");
    sdm::data::export_synthetic_dataset(cfg->cfg.scene, groups, frames, out_dir);
  });
}

sdm_status sdm_train_frame(const sdm_config* cfg, sdm_progress_fn progress, void* user, char** hash_out) {
  return guarded([&] {
    need(cfg, "config");
    auto r = sdm::train::train_frame_stage(cfg->cfg, progress_adapter(progress, user, cfg->cfg.max_steps));
    if (hash_out != nullptr) *hash_out = dup(r.hash);
  });
}

sdm_status sdm_finetune_sequence(const sdm_config* cfg, sdm_progress_fn progress, void* user,
                                 char** hash_out) {
  return guarded([&] {
    need(cfg, "config");
    auto r = sdm::train::train_sequence_stage(cfg->cfg, progress_adapter(progress, user, cfg->cfg.max_steps));
    if (hash_out != nullptr) *hash_out = dup(r.hash);
  });
}

sdm_status sdm_checkpoint_info(const char* path, char** json_out) {
  return guarded([&] {
    need(path, "path");
    need(json_out, "output string");
    auto c = sdm::train::load_checkpoint(path);
    nlohmann::json j = {{"hash", c.hash()},          {"stage", c.stage},
                        {"step", c.step},            {"parent_hash", c.parent_hash},
                        {"parent_path", c.parent_path}, {"tensors", c.tensors.size()},
                        {"config", c.config}};
    *json_out = dup(j.dump(2));
  });
}

void sdm_eval_options_init(sdm_eval_options* opts) {
  if (opts != nullptr) std::memset(opts, 0, sizeof *opts);
}

sdm_status sdm_evaluate(const sdm_eval_options* opts, sdm_eval_report** out) {
  return guarded([&] {
    need(opts, "options");
    need(out, "output handle");
    need(opts->dataset_root, "dataset root");
    auto r = sdm::eval::evaluate(opts->stage1_path ? opts->stage1_path : "",
                                 opts->stage2_path ? opts->stage2_path : "", opts->dataset_root,
                                 split_groups(opts->groups), convert(*opts));
    *out = new sdm_eval_report{std::move(r)};
  });
}

sdm_status sdm_sample(const sdm_eval_options* opts, const char* out_dir, int* frames_written) {
  return guarded([&] {
    need(opts, "options");
    need(opts->dataset_root, "dataset root");
    need(out_dir, "output directory");
    namespace fs = std::filesystem;
    auto e = convert(*opts);
    std::optional<sdm::train::Checkpoint> s1, s2;
    if (opts->stage2_path != nullptr) s2 = sdm::train::load_checkpoint(opts->stage2_path);
    std::string parent = opts->stage1_path ? opts->stage1_path : (s2 ? s2->parent_path : "");
    sdm::require(!parent.empty(), sdm::ErrorCode::InvalidArgument, "no stage-1 checkpoint given");
    s1 = sdm::train::load_checkpoint(parent);
    auto predict = s2 ? sdm::eval::sequence_predictor(*s2, *s1, e) : sdm::eval::frame_predictor(*s1, e);
    int written = 0;
    for (const auto& g : sdm::train::load_groups(opts->dataset_root, split_groups(opts->groups))) {
      auto preds = predict(g);
      const auto dir = fs::path(out_dir) / g.group_id;
      fs::create_directories(dir);
      for (std::size_t i = 0; i < preds.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%05d.pgm", g.frames[i].mask.frame_index);
        sdm::data::write_pgm(dir / name, preds[i]);
        ++written;
      }
    }
    if (frames_written != nullptr) *frames_written = written;
  });
}

sdm_status sdm_eval_report_load(const char* path, sdm_eval_report** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "output handle");
    *out = new sdm_eval_report{sdm::eval::EvalReport::load(path)};
  });
}

sdm_status sdm_eval_report_save(const sdm_eval_report* r, const char* path) {
  return guarded([&] {
    need(r, "report");
    need(path, "path");
    r->report.save(path);
  });
}

sdm_status sdm_eval_report_text(const sdm_eval_report* r, char** out) {
  return guarded([&] {
    need(r, "report");
    need(out, "output string");
    *out = dup(r->report.to_text());
  });
}

double sdm_eval_report_mean(const sdm_eval_report* r) { return r == nullptr ? 0.0 : r->report.mean(); }

size_t sdm_eval_report_frames(const sdm_eval_report* r) { return r == nullptr ? 0 : r->report.frames.size(); }

void sdm_eval_report_free(sdm_eval_report* r) { delete r; }

sdm_status sdm_report_table(const sdm_eval_report* const* reports, size_t n, char** out) {
  return guarded([&] {
    need(out, "output string");
    sdm::require(n == 0 || reports != nullptr, sdm::ErrorCode::InvalidArgument, "reports is null");
    std::vector<sdm::eval::EvalReport> list;
    for (size_t i = 0; i < n; ++i) {
      need(reports[i], "report");
      list.push_back(reports[i]->report);
    }
    *out = dup(sdm::eval::format_table(list));
  });
}

sdm_status sdm_iou(const uint8_t* pred, const uint8_t* truth, int rows, int cols, double* out) {
  return guarded([&] {
    need(pred, "pred");
    need(truth, "truth");
    need(out, "output");
    sdm::require(rows > 0 && cols > 0, sdm::ErrorCode::Shape, "mask dimensions must be positive");
    sdm::data::LabelGrid p(rows, cols), t(rows, cols);
    std::memcpy(p.values.data(), pred, p.values.size());
    std::memcpy(t.values.data(), truth, t.values.size());
    *out = sdm::eval::iou(p, t);
  });
}

}  // extern "C"
