// Command-line front end over the C interface.
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sdm/sdm.h"

namespace {

struct Failure {
  sdm_status status;
};

void check(sdm_status s) {
  if (s != SDM_OK) throw Failure{s};
}

struct ConfigFlags {
  std::string config_path;
  std::string preset = "desk";
  std::vector<std::string> overrides;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration file (JSON)");
    cmd->add_option("--preset", preset, "preset when no --config: full, desk, desk-seq4, desk-seq12, ...")
        ->capture_default_str();
    cmd->add_option("--set", overrides, "override a config field, key=value (e.g. train.lr=1e-4)");
  }

  sdm_config* load() const {
    sdm_config* cfg = nullptr;
    check(config_path.empty() ? sdm_config_preset(preset.c_str(), &cfg)
                              : sdm_config_load(config_path.c_str(), &cfg));
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) {
        sdm_config_free(cfg);
        throw CLI::ValidationError("--set", "expected key=value, got '" + o + "'");
      }
      const auto s = sdm_config_set(cfg, o.substr(0, eq).c_str(), o.substr(eq + 1).c_str());
      if (s != SDM_OK) {
        sdm_config_free(cfg);
        throw Failure{s};
      }
    }
    return cfg;
  }
};

using ConfigPtr = std::unique_ptr<sdm_config, decltype(&sdm_config_free)>;

void set(sdm_config* cfg, const std::string& key, const std::string& value) {
  check(sdm_config_set(cfg, key.c_str(), value.c_str()));
}

std::string json_str(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

void print_progress(void*, int step, int max_steps, double total) {
  if (step == 1 || step == max_steps || step % 100 == 0) {
    std::fprintf(stderr, "step %d/%d total=%.5f\n", step, max_steps, total);
  }
}

struct EvalFlags {
  std::string stage1, stage2, data, groups, images, label;
  std::uint64_t seed = 0;
  int seq_len = 0, T = 0, batch = 0;
  bool allow_mismatch = false;

  void add(CLI::App* cmd, bool need_model) {
    auto* s1 = cmd->add_option("--stage1", stage1, "frame-level checkpoint");
    cmd->add_option("--stage2", stage2, "sequence checkpoint (its parent is found from --stage1 or its record)");
    cmd->add_option("--data", data, "dataset directory")->required();
    cmd->add_option("--groups", groups, "comma-separated group ids (default: all)");
    cmd->add_option("--seed", seed, "sampling seed")->capture_default_str();
    cmd->add_option("--seq-len", seq_len, "expected sequence length (checked against the checkpoint)");
    cmd->add_option("--steps", T, "diffusion steps; must equal the training T");
    cmd->add_option("--batch", batch, "frames per sampling call");
    cmd->add_flag("--allow-hash-mismatch", allow_mismatch, "load a stage-2 checkpoint over a different parent");
    if (need_model) s1->description("frame-level checkpoint (required unless --stage2 records it)");
  }

  sdm_eval_options options(const char* mode) const {
    sdm_eval_options o;
    sdm_eval_options_init(&o);
    o.mode = mode;
    o.stage1_path = stage1.empty() ? nullptr : stage1.c_str();
    o.stage2_path = stage2.empty() ? nullptr : stage2.c_str();
    o.dataset_root = data.c_str();
    o.groups = groups.empty() ? nullptr : groups.c_str();
    o.image_dir = images.empty() ? nullptr : images.c_str();
    o.model_label = label.empty() ? nullptr : label.c_str();
    o.seed = seed;
    o.seq_len = seq_len;
    o.T = T;
    o.batch = batch;
    o.allow_hash_mismatch = allow_mismatch ? 1 : 0;
    return o;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Silhouette diffusion from orthogonal RF heatmaps"};
  app.require_subcommand(1);

  // simulate
  ConfigFlags sim_cfg;
  int sim_persons = -1, sim_frames = 10;
  std::uint64_t sim_seed = 0;
  bool sim_seed_set = false;
  std::string sim_out;
  auto* sim = app.add_subcommand("simulate", "render one synthetic sequence into a dataset directory");
  sim_cfg.add(sim);
  sim->add_option("--persons", sim_persons, "number of walkers (default: the configured scene)");
  sim->add_option("--frames", sim_frames, "frames to render")->capture_default_str();
  sim->add_option("--seed", sim_seed, "scene seed")->each([&](const std::string&) { sim_seed_set = true; });
  sim->add_option("--out", sim_out, "output directory")->required();

  // export-data
  ConfigFlags exp_cfg;
  int exp_groups = 8, exp_frames = 10, exp_persons = -1;
  std::string exp_out;
  auto* exp = app.add_subcommand("export-data", "simulate many sequences into a dataset directory");
  exp_cfg.add(exp);
  exp->add_option("--groups", exp_groups, "number of sequences")->capture_default_str();
  exp->add_option("--frames", exp_frames, "frames per sequence")->capture_default_str();
  exp->add_option("--persons", exp_persons, "walkers per sequence (default: the configured scene)");
  exp->add_option("--out", exp_out, "output directory")->required();

  // train-frame
  ConfigFlags tf_cfg;
  std::string tf_data, tf_out, tf_log;
  int tf_steps = -1;
  auto* tf = app.add_subcommand("train-frame", "stage 1: train the frame-level model");
  tf_cfg.add(tf);
  tf->add_option("--data", tf_data, "dataset directory (overrides data.root)");
  tf->add_option("--out", tf_out, "checkpoint path (overrides checkpoint.out)");
  tf->add_option("--max-steps", tf_steps, "optimizer steps (overrides train.max_steps)");
  tf->add_option("--log", tf_log, "training log file");

  // finetune-seq
  ConfigFlags fs_cfg;
  std::string fs_data, fs_out, fs_log, fs_stage1;
  int fs_steps = -1, fs_len = 0;
  auto* fsq = app.add_subcommand("finetune-seq", "stage 2: train the spatio-temporal blocks on windows");
  fs_cfg.preset = "desk-seq4";
  fs_cfg.add(fsq);
  fsq->add_option("--stage1", fs_stage1, "frame-level checkpoint (overrides checkpoint.stage1)");
  fsq->add_option("--seq-len", fs_len, "window length N (overrides train.seq_len)");
  fsq->add_option("--data", fs_data, "dataset directory (overrides data.root)");
  fsq->add_option("--out", fs_out, "checkpoint path (overrides checkpoint.out)");
  fsq->add_option("--max-steps", fs_steps, "optimizer steps (overrides train.max_steps)");
  fsq->add_option("--log", fs_log, "training log file");

  // sample
  EvalFlags smp_flags;
  std::string smp_out;
  auto* smp = app.add_subcommand("sample", "sample silhouettes for dataset frames and write them as PGM");
  smp_flags.add(smp, true);
  smp->add_option("--out", smp_out, "output directory")->required();

  // eval
  EvalFlags ev_flags;
  std::string ev_report;
  bool ev_oracle = false, ev_background = false;
  auto* ev = app.add_subcommand("eval", "score sampled silhouettes against ground truth (IoU)");
  ev_flags.add(ev, true);
  ev->add_option("--report", ev_report, "write the evaluation report here");
  ev->add_option("--images", ev_flags.images, "directory for heatmap | truth | prediction composites");
  ev->add_option("--label", ev_flags.label, "model name used in tables");
  auto* oracle_flag = ev->add_flag("--oracle", ev_oracle, "score the ground truth against itself");
  ev->add_flag("--background", ev_background, "score an all-background predictor")->excludes(oracle_flag);

  // report
  std::vector<std::string> rep_files;
  auto* rep = app.add_subcommand("report", "tabulate evaluation reports by sequence length");
  rep->add_option("reports", rep_files, "evaluation report files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (sim->parsed() || exp->parsed()) {
      const bool is_sim = sim->parsed();
      ConfigPtr cfg((is_sim ? sim_cfg : exp_cfg).load(), sdm_config_free);
      const int persons = is_sim ? sim_persons : exp_persons;
      if (persons >= 0) check(sdm_config_set_persons(cfg.get(), persons));
      if (is_sim && sim_seed_set) set(cfg.get(), "scene.seed", std::to_string(sim_seed));
      const auto& out = is_sim ? sim_out : exp_out;
      check(sdm_export_dataset(cfg.get(), is_sim ? 1 : exp_groups, is_sim ? sim_frames : exp_frames, out.c_str()));
      std::printf("wrote %s\n", out.c_str());
    } else if (tf->parsed() || fsq->parsed()) {
      const bool frame = tf->parsed();
      ConfigPtr cfg((frame ? tf_cfg : fs_cfg).load(), sdm_config_free);
      if (!frame) {
        set(cfg.get(), "stage", json_str("sequence"));
        if (!fs_stage1.empty()) set(cfg.get(), "checkpoint.stage1", json_str(fs_stage1));
        if (fs_len > 0) set(cfg.get(), "train.seq_len", std::to_string(fs_len));
      }
      const auto& data = frame ? tf_data : fs_data;
      const auto& out = frame ? tf_out : fs_out;
      const auto& log = frame ? tf_log : fs_log;
      const int steps = frame ? tf_steps : fs_steps;
      if (!data.empty()) set(cfg.get(), "data.root", json_str(data));
      if (!out.empty()) set(cfg.get(), "checkpoint.out", json_str(out));
      if (!log.empty()) set(cfg.get(), "log", json_str(log));
      if (steps >= 0) set(cfg.get(), "train.max_steps", std::to_string(steps));
      char* hash = nullptr;
      check(frame ? sdm_train_frame(cfg.get(), print_progress, nullptr, &hash)
                  : sdm_finetune_sequence(cfg.get(), print_progress, nullptr, &hash));
      std::printf("checkpoint %s\n", hash);
      sdm_string_free(hash);
    } else if (smp->parsed()) {
      auto opts = smp_flags.options("model");
      int written = 0;
      check(sdm_sample(&opts, smp_out.c_str(), &written));
      std::printf("wrote %d masks to %s\n", written, smp_out.c_str());
    } else if (ev->parsed()) {
      auto opts = ev_flags.options(ev_oracle ? "oracle" : ev_background ? "background" : "model");
      sdm_eval_report* report = nullptr;
      check(sdm_evaluate(&opts, &report));
      std::unique_ptr<sdm_eval_report, decltype(&sdm_eval_report_free)> guard(report, sdm_eval_report_free);
      if (!ev_report.empty()) check(sdm_eval_report_save(report, ev_report.c_str()));
      char* text = nullptr;
      check(sdm_eval_report_text(report, &text));
      // header only; the per-frame block goes to the report file
      std::string t = text;
      sdm_string_free(text);
      std::fputs(t.substr(0, t.find("---\n")).c_str(), stdout);
    } else if (rep->parsed()) {
      std::vector<sdm_eval_report*> reports;
      sdm_status s = SDM_OK;
      for (const auto& f : rep_files) {
        sdm_eval_report* r = nullptr;
        s = sdm_eval_report_load(f.c_str(), &r);
        if (s != SDM_OK) break;
        reports.push_back(r);
      }
      char* table = nullptr;
      if (s == SDM_OK) s = sdm_report_table(reports.data(), reports.size(), &table);
      for (auto* r : reports) sdm_eval_report_free(r);
      check(s);
      std::fputs(table, stdout);
      sdm_string_free(table);
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error[%s]: %s\n", sdm_status_name(f.status), sdm_last_error());
    return static_cast<int>(f.status) == 0 ? 1 : static_cast<int>(f.status);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  }
  return 0;
}
