#include "evaluate.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "error.hpp"
#include "hash.hpp"
#include "run_config.hpp"
#include "sampler.hpp"
#include "trainer.hpp"

namespace sdm::eval {

namespace fs = std::filesystem;

double iou(const data::LabelGrid& pred, const data::LabelGrid& truth) {
  require(pred.size() == truth.size(), ErrorCode::Shape, "iou: mask shapes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const auto p = pred.values[i], t = truth.values[i];
    require(p <= 1 && t <= 1, ErrorCode::InvalidArgument, "iou: masks must be binary");
    inter += p & t;
    uni += p | t;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::string subset_of(int person_count) { return person_count <= 1 ? "single" : "multi"; }

double EvalReport::mean() const {
  if (frames.empty()) return 0.0;
  double s = 0;
  for (const auto& f : frames) s += f.iou;
  return s / static_cast<double>(frames.size());
}

std::vector<std::string> EvalReport::subsets() const {
  std::vector<std::string> out;
  for (const auto& f : frames) {
    if (std::find(out.begin(), out.end(), f.subset) == out.end()) out.push_back(f.subset);
  }
  return out;
}

double EvalReport::mean(const std::string& subset) const {
  double s = 0;
  int n = 0;
  for (const auto& f : frames) {
    if (f.subset == subset) {
      s += f.iou;
      ++n;
    }
  }
  return n == 0 ? 0.0 : s / n;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "# sdm evaluation report\n";
  os << "model: " << model << '\n';
  os << "mode: " << mode << '\n';
  os << "checkpoint: " << checkpoint << '\n';
  os << "parent_checkpoint: " << parent_checkpoint << '\n';
  os << "config_hash: " << config_hash << '\n';
  os << "seq_len: " << seq_len << '\n';
  os << "seed: " << seed << '\n';
  os << "T: " << T << '\n';
  os << "iou_aggregation: per-frame mean\n";
  os << "iou_both_empty: 1.0\n";
  os << "multi_person_scoring: union silhouette\n";
  os << "frames: " << frames.size() << '\n';
  os << "mean_iou: " << num(mean()) << '\n';
  for (const auto& s : subsets()) os << "mean_iou." << s << ": " << num(mean(s)) << '\n';
  os << "---\n";
  os << "group,frame,subset,iou,pred_pixels,truth_pixels\n";
  for (const auto& f : frames) {
    os << f.group << ',' << f.frame << ',' << f.subset << ',' << num(f.iou) << ',' << f.pred_pixels << ','
       << f.truth_pixels << '\n';
  }
  return os.str();
}

EvalReport EvalReport::parse(const std::string& text) {
  EvalReport r;
  std::istringstream is(text);
  std::string line;
  bool in_csv = false, saw_columns = false;
  auto bad = [](const std::string& why) { fail(ErrorCode::Corrupt, "eval report: " + why); };
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!in_csv) {
      if (line == "---") {
        in_csv = true;
        continue;
      }
      const auto colon = line.find(": ");
      if (colon == std::string::npos) bad("malformed header line '" + line + "'");
      const auto key = line.substr(0, colon), value = line.substr(colon + 2);
      try {
        if (key == "model") r.model = value;
        else if (key == "mode") r.mode = value;
        else if (key == "checkpoint") r.checkpoint = value;
        else if (key == "parent_checkpoint") r.parent_checkpoint = value;
        else if (key == "config_hash") r.config_hash = value;
        else if (key == "seq_len") r.seq_len = std::stoi(value);
        else if (key == "seed") r.seed = std::stoull(value);
        else if (key == "T") r.T = std::stoi(value);
      } catch (const std::exception&) {
        bad("bad value for '" + key + "'");
      }
      continue;
    }
    if (!saw_columns) {
      saw_columns = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) bad("expected 6 columns in '" + line + "'");
    try {
      r.frames.push_back({cells[0], std::stoi(cells[1]), cells[2], std::stod(cells[3]), std::stoi(cells[4]),
                          std::stoi(cells[5])});
    } catch (const std::exception&) {
      bad("bad row '" + line + "'");
    }
  }
  if (!in_csv) bad("missing per-frame block");
  return r;
}

void EvalReport::save(const std::string& path) const {
  const auto tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + tmp);
    out << to_text();
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  require(!ec, ErrorCode::Io, "cannot rename " + tmp + ": " + ec.message());
}

EvalReport EvalReport::load(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open report " + path);
  return parse(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

namespace {

int count_on(const data::LabelGrid& g) {
  return static_cast<int>(std::count(g.values.begin(), g.values.end(), std::uint8_t{1}));
}

std::uint8_t to_byte(float v) { return static_cast<std::uint8_t>(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f); }

}  // namespace

void write_composite(const std::string& path, const data::Frame& frame, const data::LabelGrid& pred) {
  const auto& hor = frame.heatmaps.horizontal;
  const auto& ver = frame.heatmaps.vertical;
  const auto& truth = frame.mask.labels;
  const int gap = 2;
  const int left_w = std::max(hor.cols, ver.cols);
  const int rows = std::max(hor.rows + gap + ver.rows, truth.rows);
  const int cols = left_w + gap + truth.cols + gap + pred.cols;
  std::vector<std::uint8_t> px(static_cast<std::size_t>(rows) * cols, 0);
  auto put = [&](int r, int c, std::uint8_t v) { px[static_cast<std::size_t>(r) * cols + c] = v; };
  for (int r = 0; r < rows; ++r) {
    for (int g = 0; g < gap; ++g) {
      put(r, left_w + g, 128);
      put(r, left_w + gap + truth.cols + g, 128);
    }
  }
  for (int r = 0; r < hor.rows; ++r)
    for (int c = 0; c < hor.cols; ++c) put(r, c, to_byte(hor.at(r, c)));
  for (int r = 0; r < ver.rows; ++r)
    for (int c = 0; c < ver.cols; ++c) put(hor.rows + gap + r, c, to_byte(ver.at(r, c)));
  for (int r = 0; r < truth.rows; ++r)
    for (int c = 0; c < truth.cols; ++c) put(r, left_w + gap + c, truth.at(r, c) ? 255 : 0);
  for (int r = 0; r < pred.rows; ++r)
    for (int c = 0; c < pred.cols; ++c) put(r, left_w + 2 * gap + truth.cols + c, pred.at(r, c) ? 255 : 0);
  data::write_gray_pgm(path, rows, cols, px);
}

EvalReport score(const std::vector<data::SequenceSample>& groups, const Predictor& predict,
                 const EvalOptions& opts) {
  EvalReport report;
  report.mode = opts.mode;
  report.seed = opts.seed;
  report.model = opts.model_label;
  if (!opts.image_dir.empty()) fs::create_directories(opts.image_dir);
  int done = 0;
  for (const auto& g : groups) {
    auto preds = predict(g);
    require(preds.size() == g.frames.size(), ErrorCode::Internal, "predictor returned the wrong frame count");
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const auto& f = g.frames[i];
      const auto& truth = f.mask.labels;
      report.frames.push_back({g.group_id, f.mask.frame_index, subset_of(g.person_count), iou(preds[i], truth),
                               count_on(preds[i]), count_on(truth)});
      if (!opts.image_dir.empty()) {
        char name[64];
        std::snprintf(name, sizeof name, "_frame_%05d.pgm", f.mask.frame_index);
        write_composite((fs::path(opts.image_dir) / (g.group_id + name)).string(), f, preds[i]);
      }
    }
    if (opts.progress) opts.progress(g.group_id, ++done, static_cast<int>(groups.size()));
  }
  return report;
}

Predictor oracle_predictor() {
  return [](const data::SequenceSample& g) {
    std::vector<data::LabelGrid> out;
    for (const auto& f : g.frames) out.push_back(f.mask.labels);
    return out;
  };
}

Predictor background_predictor() {
  return [](const data::SequenceSample& g) {
    std::vector<data::LabelGrid> out;
    for (const auto& f : g.frames) out.emplace_back(f.mask.labels.rows, f.mask.labels.cols, 0);
    return out;
  };
}

namespace {

diffusion::Schedule checked_schedule(const train::RunConfig& cfg, const EvalOptions& opts) {
  require(opts.T == 0 || opts.T == cfg.T, ErrorCode::Stage,
          "sampling with T=" + std::to_string(opts.T) + " but the model was trained with T=" +
              std::to_string(cfg.T));
  return train::schedule_for(cfg);
}

torch::Tensor stack_views(const data::SequenceSample& g, const std::vector<int>& idx, bool horizontal) {
  std::vector<torch::Tensor> out;
  for (int i : idx) {
    const auto& h = horizontal ? g.frames[i].heatmaps.horizontal : g.frames[i].heatmaps.vertical;
    out.push_back(torch::from_blob(const_cast<float*>(h.values.data()), {1, h.rows, h.cols}, torch::kFloat32)
                      .clone());
  }
  return torch::stack(out);
}

data::LabelGrid to_grid(const torch::Tensor& labels) {
  auto c = labels.to(torch::kUInt8).contiguous();
  data::LabelGrid g(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)));
  std::memcpy(g.values.data(), c.data_ptr(), g.values.size());
  return g;
}

torch::Generator group_generator(std::uint64_t seed, const std::string& group) {
  Fnv1a h;
  h.update(group);
  return nn::make_generator(seed ^ h.digest());
}

}  // namespace

Predictor frame_predictor(const train::Checkpoint& stage1, const EvalOptions& opts) {
  auto cfg = train::RunConfig::from_json(stage1.config);
  require(opts.seq_len == 0 || opts.seq_len == 1, ErrorCode::Stage,
          "a frame-level checkpoint evaluates with seq_len 1");
  auto sched = checked_schedule(cfg, opts);
  auto model = train::frame_model_from(stage1);
  const int batch = std::max(1, opts.batch);
  const auto seed = opts.seed;
  return [model, sched, batch, seed](const data::SequenceSample& g) mutable {
    auto gen = group_generator(seed, g.group_id);
    std::vector<data::LabelGrid> out;
    const int F = static_cast<int>(g.frames.size());
    for (int start = 0; start < F; start += batch) {
      std::vector<int> idx;
      for (int i = start; i < std::min(F, start + batch); ++i) idx.push_back(i);
      auto labels = nn::sample_frames(model, stack_views(g, idx, true), stack_views(g, idx, false), sched, gen);
      for (int64_t b = 0; b < labels.size(0); ++b) out.push_back(to_grid(labels[b]));
    }
    return out;
  };
}

Predictor sequence_predictor(const train::Checkpoint& stage2, const train::Checkpoint& stage1,
                             const EvalOptions& opts) {
  auto cfg = train::RunConfig::from_json(stage2.config);
  require(opts.seq_len == 0 || opts.seq_len == cfg.seq_len, ErrorCode::Stage,
          "checkpoint was fine-tuned with seq_len " + std::to_string(cfg.seq_len) + ", not " +
              std::to_string(opts.seq_len));
  auto sched = checked_schedule(cfg, opts);
  auto model = train::sequence_model_from(stage2, stage1, opts.allow_hash_mismatch);
  const int N = cfg.seq_len;
  const int windows_per_call = std::max(1, opts.batch / N);
  const auto seed = opts.seed;
  return [model, sched, N, windows_per_call, seed](const data::SequenceSample& g) mutable {
    auto gen = group_generator(seed, g.group_id);
    const int F = static_cast<int>(g.frames.size());
    // Non-overlapping windows; a ragged tail is covered by one window
    // aligned to the end, and groups shorter than N repeat their last frame.
    std::vector<std::vector<int>> windows;
    for (int s = 0; s + N <= F; s += N) {
      std::vector<int> w(N);
      std::iota(w.begin(), w.end(), s);
      windows.push_back(w);
    }
    if (F % N != 0) {
      std::vector<int> w(N);
      for (int k = 0; k < N; ++k) w[k] = F >= N ? F - N + k : std::min(k, F - 1);
      windows.push_back(w);
    }
    std::vector<data::LabelGrid> out(F);
    std::vector<bool> filled(F, false);
    for (std::size_t w0 = 0; w0 < windows.size(); w0 += windows_per_call) {
      std::vector<int> idx;
      const auto w1 = std::min(windows.size(), w0 + windows_per_call);
      for (auto w = w0; w < w1; ++w) idx.insert(idx.end(), windows[w].begin(), windows[w].end());
      auto labels = nn::sample_windows(model, stack_views(g, idx, true), stack_views(g, idx, false), sched, gen);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (!filled[idx[k]]) {
          out[idx[k]] = to_grid(labels[static_cast<int64_t>(k)]);
          filled[idx[k]] = true;
        }
      }
    }
    return out;
  };
}

EvalReport evaluate(const train::Checkpoint* stage1, const train::Checkpoint* stage2,
                    const std::vector<data::SequenceSample>& groups, const EvalOptions& opts) {
  require(!groups.empty(), ErrorCode::NoFrames, "nothing to evaluate");
  Predictor predict;
  EvalReport meta;
  if (opts.mode == "oracle") {
    predict = oracle_predictor();
    meta.model = "oracle";
    meta.seq_len = std::max(1, opts.seq_len);
  } else if (opts.mode == "background") {
    predict = background_predictor();
    meta.model = "all-background";
    meta.seq_len = std::max(1, opts.seq_len);
  } else if (opts.mode == "model") {
    require(stage1 != nullptr, ErrorCode::InvalidArgument, "model evaluation needs a stage-1 checkpoint");
    if (stage2 != nullptr) {
      predict = sequence_predictor(*stage2, *stage1, opts);
      meta.seq_len = train::RunConfig::from_json(stage2->config).seq_len;
      meta.checkpoint = stage2->hash();
      meta.parent_checkpoint = stage1->hash();
      meta.model = "sequence";
      meta.T = train::RunConfig::from_json(stage2->config).T;
    } else {
      predict = frame_predictor(*stage1, opts);
      meta.seq_len = 1;
      meta.checkpoint = stage1->hash();
      meta.model = "frame";
      meta.T = train::RunConfig::from_json(stage1->config).T;
    }
  } else {
    fail(ErrorCode::InvalidArgument, "unknown evaluation mode '" + opts.mode + "'");
  }
  auto report = score(groups, predict, opts);
  report.model = opts.model_label.empty() ? meta.model : opts.model_label;
  report.seq_len = meta.seq_len;
  report.checkpoint = meta.checkpoint;
  report.parent_checkpoint = meta.parent_checkpoint;
  report.T = meta.T;
  return report;
}

EvalReport evaluate(const std::string& stage1_path, const std::string& stage2_path,
                    const std::string& dataset_root, const std::vector<std::string>& groups,
                    const EvalOptions& opts) {
  std::optional<train::Checkpoint> s1, s2;
  if (opts.mode == "model") {
    if (!stage2_path.empty()) s2 = train::load_checkpoint(stage2_path);
    std::string parent = stage1_path;
    if (parent.empty() && s2) parent = s2->parent_path;
    require(!parent.empty(), ErrorCode::InvalidArgument, "no stage-1 checkpoint given");
    s1 = train::load_checkpoint(parent);
  }
  auto data = train::load_groups(dataset_root, groups);
  auto report = evaluate(s1 ? &*s1 : nullptr, s2 ? &*s2 : nullptr, data, opts);
  report.config_hash = data::read_manifest(dataset_root).config_hash;
  return report;
}

std::string format_table(std::vector<EvalReport> reports) {
  std::stable_sort(reports.begin(), reports.end(),
                   [](const EvalReport& a, const EvalReport& b) { return a.seq_len < b.seq_len; });
  struct Row {
    std::string model, n, subset, iou;
  };
  std::vector<Row> rows{{"model", "seq length", "subset", "IoU"}};
  for (const auto& r : reports) {
    const auto subsets = r.subsets();
    char buf[32];
    for (const auto& s : subsets) {
      std::snprintf(buf, sizeof buf, "%.4f", r.mean(s));
      rows.push_back({r.model, std::to_string(r.seq_len), s, buf});
    }
    if (subsets.size() != 1) {
      std::snprintf(buf, sizeof buf, "%.4f", r.mean());
      rows.push_back({r.model, std::to_string(r.seq_len), "all", buf});
    }
  }
  std::size_t w[4] = {0, 0, 0, 0};
  for (const auto& r : rows) {
    w[0] = std::max(w[0], r.model.size());
    w[1] = std::max(w[1], r.n.size());
    w[2] = std::max(w[2], r.subset.size());
    w[3] = std::max(w[3], r.iou.size());
  }
  std::ostringstream os;
  auto line = [&](const Row& r) {
    os << r.model << std::string(w[0] - r.model.size() + 2, ' ') << std::string(w[1] - r.n.size(), ' ') << r.n
       << "  " << r.subset << std::string(w[2] - r.subset.size() + 2, ' ')
       << std::string(w[3] - r.iou.size(), ' ') << r.iou << '\n';
  };
  line(rows[0]);
  os << std::string(w[0] + w[1] + w[2] + w[3] + 6, '-') << '\n';
  for (std::size_t i = 1; i < rows.size(); ++i) line(rows[i]);
  return os.str();
}

}  // namespace sdm::eval
