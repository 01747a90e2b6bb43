#include "trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "error.hpp"
#include "sampler.hpp"

namespace sdm::train {

namespace {

torch::Tensor heatmap_tensor(const data::Heatmap& h) {
  return torch::from_blob(const_cast<float*>(h.values.data()), {1, h.rows, h.cols}, torch::kFloat32)
      .clone();
}

torch::Tensor mask_tensor(const data::LabelGrid& g) {
  return torch::from_blob(const_cast<std::uint8_t*>(g.values.data()), {g.rows, g.cols}, torch::kUInt8)
      .to(torch::kLong);
}

// Distinct streams for batch order and for Gaussian draws.
constexpr std::uint64_t kNoiseStream = 0x6a09e667f3bcc909ULL;

}  // namespace

TensorSet TensorSet::select(const std::vector<int64_t>& items) const {
  std::vector<int64_t> rows;
  rows.reserve(items.size() * frames_per_item);
  for (auto i : items) {
    for (int k = 0; k < frames_per_item; ++k) rows.push_back(i * frames_per_item + k);
  }
  auto idx = torch::tensor(rows, torch::kLong);
  return {horizontal.index_select(0, idx), vertical.index_select(0, idx), masks.index_select(0, idx),
          frames_per_item};
}

TensorSet stack_frames(const std::vector<data::SequenceSample>& samples, int frames_per_item) {
  std::vector<torch::Tensor> hor, ver, masks;
  for (const auto& s : samples) {
    for (const auto& f : s.frames) {
      hor.push_back(heatmap_tensor(f.heatmaps.horizontal));
      ver.push_back(heatmap_tensor(f.heatmaps.vertical));
      masks.push_back(mask_tensor(f.mask.labels));
    }
  }
  require(!masks.empty(), ErrorCode::NoFrames, "no frames to train on");
  require(masks.size() % frames_per_item == 0, ErrorCode::Shape, "frame count not a multiple of the window");
  return {torch::stack(hor), torch::stack(ver), torch::stack(masks), frames_per_item};
}

void check_shapes(const TensorSet& set, const nn::ModelConfig& cfg) {
  auto expect = [](const torch::Tensor& t, const data::GridSize& g, const char* what) {
    require(t.size(-2) == g.rows && t.size(-1) == g.cols, ErrorCode::Shape,
            std::string(what) + " resolution " + std::to_string(t.size(-2)) + "x" +
                std::to_string(t.size(-1)) + " does not match the model (" + std::to_string(g.rows) +
                "x" + std::to_string(g.cols) + ")");
  };
  expect(set.horizontal, cfg.encoder.horizontal, "horizontal heatmap");
  expect(set.vertical, cfg.encoder.vertical, "vertical heatmap");
  expect(set.masks, cfg.denoiser.mask, "silhouette mask");
}

std::vector<data::SequenceSample> load_groups(const std::string& root,
                                              const std::vector<std::string>& groups) {
  require(!root.empty(), ErrorCode::InvalidArgument, "no dataset root configured");
  std::vector<std::string> ids = groups;
  if (ids.empty()) {
    for (const auto& g : data::read_manifest(root).groups) ids.push_back(g.id);
  }
  std::vector<data::SequenceSample> out;
  for (const auto& id : ids) out.push_back(data::load_hiber_group(root, id).sample);
  return out;
}

torch::Tensor StepSampler::draw(int64_t n) {
  std::vector<int64_t> v(n);
  for (auto& x : v) x = (*this)();
  return torch::tensor(v, torch::kLong);
}

std::vector<int64_t> BatchOrder::next(int batch) {
  std::vector<int64_t> out;
  out.reserve(batch);
  while (static_cast<int>(out.size()) < batch) {
    if (pos_ == perm_.size()) {
      perm_.resize(items_);
      std::iota(perm_.begin(), perm_.end(), 0);
      std::shuffle(perm_.begin(), perm_.end(), rng_);
      pos_ = 0;
    }
    out.push_back(perm_[pos_++]);
  }
  return out;
}

loss::LossTerms compute_losses(nn::FrameModel& model, const DenoiseCall& denoise,
                               const torch::Tensor& y0, const torch::Tensor& masks,
                               const torch::Tensor& t, const torch::Tensor& noise,
                               const diffusion::Schedule& sched) {
  auto y_t = diffusion::q_sample(y0, t, noise, sched);
  auto out = denoise(y_t, t);
  loss::LossTerms terms;
  terms.mse = loss::mse_loss(noise, out.pred_noise);
  terms.vib = loss::vib_loss(y0, y_t, t, out.pred_noise, out.pred_var_logit, sched);
  auto y0_hat = diffusion::predict_y0(y_t, t, out.pred_noise, sched).clamp(0.0, 1.0);
  auto probs = nn::foreground_probability(model->decode_logits(y0_hat));
  terms.ce = loss::ce_loss(probs, masks);
  terms.dice = loss::dice_loss(probs, masks);
  return terms;
}

std::string format_log(const StepLog& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "step=%d mse=%.6g vib=%.6g ce=%.6g dice=%.6g total=%.6g grad_norm=%.6g clipped=%d wall=%.3f",
                s.step, s.loss.mse, s.loss.vib, s.loss.ce, s.loss.dice, s.loss.total, s.grad_norm,
                s.clipped ? 1 : 0, s.seconds);
  return buf;
}

diffusion::Schedule schedule_for(const RunConfig& cfg) {
  return diffusion::make_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
}

namespace {

// Shared optimisation loop. `batch_loss` builds the loss terms for a batch
// of item indices and a t per item.
struct Loop {
  const RunConfig& cfg;
  std::vector<torch::Tensor> params;
  std::function<loss::LossTerms(const std::vector<int64_t>&, const torch::Tensor&)> batch_loss;
  std::function<Checkpoint(int step)> make_checkpoint;
  int64_t items = 0;
  int frames_per_item = 1;

  TrainResult run(std::mt19937_64& rng, const StepCallback& on_step) {
    torch::optim::AdamW opt(params, torch::optim::AdamWOptions(cfg.lr)
                                        .betas({cfg.adam_beta1, cfg.adam_beta2})
                                        .weight_decay(cfg.weight_decay));
    StepSampler steps(cfg.T, rng);
    BatchOrder order(items, rng);
    std::ofstream log;
    if (!cfg.log_path.empty()) {
      log.open(cfg.log_path, std::ios::app);
      require(static_cast<bool>(log), ErrorCode::Io, "cannot open log " + cfg.log_path);
    }
    TrainResult result;
    const auto start = std::chrono::steady_clock::now();
    for (int step = 1; step <= cfg.max_steps; ++step) {
      auto batch = order.next(cfg.batch_size);
      auto t = steps.draw(static_cast<int64_t>(batch.size()));
      if (frames_per_item > 1) t = t.repeat_interleave(frames_per_item);
      opt.zero_grad();
      auto terms = batch_loss(batch, t);
      StepLog entry;
      entry.step = step;
      entry.loss = loss::report(terms, cfg.lambdas);  // throws on non-finite terms
      loss::weighted_total(terms, cfg.lambdas).backward();
      if (cfg.grad_clip > 0) {
        entry.grad_norm = torch::nn::utils::clip_grad_norm_(params, cfg.grad_clip);
        entry.clipped = entry.grad_norm > cfg.grad_clip;
      } else {
        double sq = 0;
        for (const auto& p : params) {
          if (p.grad().defined()) sq += p.grad().pow(2).sum().item<double>();
        }
        entry.grad_norm = std::sqrt(sq);
      }
      opt.step();
      entry.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.history.push_back(entry);
      if (log && (step == 1 || step == cfg.max_steps || (cfg.log_every > 0 && step % cfg.log_every == 0))) {
        log << format_log(entry) << '\n' << std::flush;
      }
      if (on_step) on_step(entry);
      if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && !cfg.checkpoint_out.empty()) {
        save_checkpoint(make_checkpoint(step), cfg.checkpoint_out);
      }
    }
    result.checkpoint = make_checkpoint(cfg.max_steps);
    result.hash = cfg.checkpoint_out.empty() ? result.checkpoint.hash()
                                             : save_checkpoint(result.checkpoint, cfg.checkpoint_out);
    return result;
  }
};

}  // namespace

TrainResult train_frame_stage(const RunConfig& cfg, const std::vector<data::SequenceSample>& samples,
                              const StepCallback& on_step) {
  cfg.validate();
  require(cfg.stage == Stage::Frame, ErrorCode::Stage, "train_frame_stage needs stage = frame");
  const auto sched = schedule_for(cfg);
  auto set = stack_frames(samples);
  check_shapes(set, cfg.model);

  torch::manual_seed(cfg.seed);
  nn::FrameModel model(cfg.model);
  model->train();
  auto gen = nn::make_generator(cfg.seed ^ kNoiseStream);
  std::mt19937_64 rng(cfg.seed);

  Loop loop{cfg};
  loop.params = model->parameters();
  loop.items = set.items();
  loop.batch_loss = [&](const std::vector<int64_t>& batch, const torch::Tensor& t) {
    auto b = set.select(batch);
    auto y0 = model->embed_labels(b.masks);
    auto noise = torch::randn(y0.sizes(), gen);
    auto pyramid = model->encode(b.horizontal, b.vertical);
    auto denoise = [&](const torch::Tensor& y_t, const torch::Tensor& tt) {
      return model->denoise(y_t, tt, pyramid);
    };
    return compute_losses(model, denoise, y0, b.masks, t, noise, sched);
  };
  loop.make_checkpoint = [&](int step) {
    Checkpoint c;
    c.stage = "frame";
    c.step = step;
    c.config = cfg.to_json();
    c.tensors = snapshot(*model);
    return c;
  };
  auto result = loop.run(rng, on_step);
  result.frame = model;
  return result;
}

TrainResult train_frame_stage(const RunConfig& cfg, const StepCallback& on_step) {
  return train_frame_stage(cfg, load_groups(cfg.dataset_root, cfg.groups), on_step);
}

TrainResult train_sequence_stage(const RunConfig& cfg, const Checkpoint& stage1,
                                 const std::vector<data::SequenceSample>& samples,
                                 const StepCallback& on_step) {
  cfg.validate();
  require(cfg.stage == Stage::Sequence, ErrorCode::Stage, "train_sequence_stage needs stage = sequence");
  const auto parent_cfg = RunConfig::from_json(stage1.config);
  require(parent_cfg.T == cfg.T && parent_cfg.beta_start == cfg.beta_start &&
              parent_cfg.beta_end == cfg.beta_end,
          ErrorCode::Stage, "diffusion schedule differs from the stage-1 run");
  const auto sched = schedule_for(cfg);
  const int N = cfg.seq_len;

  data::WindowStats stats;
  auto windows = data::make_windows(samples, N, cfg.window_stride, &stats);
  require(!windows.empty(), ErrorCode::NoFrames,
          "no window of " + std::to_string(N) + " consecutive frames in the dataset");
  auto set = stack_frames(windows, N);

  auto frame = frame_model_from(stage1);
  check_shapes(set, frame->config());
  torch::manual_seed(cfg.seed);
  auto seq = nn::wrap_model_with_stb(frame, N);
  seq->train();
  frame->eval();
  auto gen = nn::make_generator(cfg.seed ^ kNoiseStream);
  std::mt19937_64 rng(cfg.seed);
  const auto parent_hash = stage1.hash();

  Loop loop{cfg};
  loop.params = seq->parameters();
  loop.items = set.items();
  loop.frames_per_item = N;
  loop.batch_loss = [&](const std::vector<int64_t>& batch, const torch::Tensor& t) {
    auto b = set.select(batch);
    torch::Tensor y0;
    nn::ConditionPyramid pyramid;
    {
      torch::NoGradGuard frozen;
      y0 = frame->embed_labels(b.masks);
      pyramid = frame->encode(b.horizontal, b.vertical);
    }
    auto noise = torch::randn(y0.sizes(), gen);
    auto denoise = [&](const torch::Tensor& y_t, const torch::Tensor& tt) {
      return seq->denoise(y_t, tt, pyramid);
    };
    return compute_losses(frame, denoise, y0, b.masks, t, noise, sched);
  };
  loop.make_checkpoint = [&](int step) {
    Checkpoint c;
    c.stage = "sequence";
    c.step = step;
    c.config = cfg.to_json();
    c.parent_hash = parent_hash;
    c.parent_path = cfg.stage1_checkpoint;
    c.tensors = snapshot(*seq);
    return c;
  };
  auto result = loop.run(rng, on_step);
  result.frame = frame;
  result.sequence = seq;
  return result;
}

TrainResult train_sequence_stage(const RunConfig& cfg, const StepCallback& on_step) {
  require(!cfg.stage1_checkpoint.empty(), ErrorCode::InvalidArgument,
          "sequence stage requires a stage-1 checkpoint reference");
  auto stage1 = load_checkpoint(cfg.stage1_checkpoint);
  return train_sequence_stage(cfg, stage1, load_groups(cfg.dataset_root, cfg.groups), on_step);
}

}  // namespace sdm::train
