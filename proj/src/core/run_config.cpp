#include "run_config.hpp"

#include <fstream>
#include <sstream>

#include "error.hpp"

namespace sdm::train {

std::string to_string(Stage s) { return s == Stage::Frame ? "frame" : "sequence"; }

Stage stage_from_string(const std::string& s) {
  if (s == "frame") return Stage::Frame;
  if (s == "sequence") return Stage::Sequence;
  fail(ErrorCode::InvalidArgument, "unknown stage '" + s + "' (expected frame or sequence)");
}

RunConfig RunConfig::preset(const std::string& name) {
  RunConfig c;
  auto starts = [&](const char* p) { return name.rfind(p, 0) == 0; };
  if (starts("desk")) {
    c.model = nn::ModelConfig::desk();
    c.scene = data::SceneConfig::desk();
  } else if (!starts("full")) {
    fail(ErrorCode::InvalidArgument, "unknown preset '" + name + "'");
  }
  auto ends = [&](const char* s) {
    const std::string suf = s;
    return name.size() >= suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (ends("-seq4")) {
    c.stage = Stage::Sequence;
    c.seq_len = 4;
    c.batch_size = 6;
  } else if (ends("-seq12")) {
    c.stage = Stage::Sequence;
    c.seq_len = 12;
    c.batch_size = 5;
  }
  return c;
}

void RunConfig::validate() const {
  require(T >= 1, ErrorCode::InvalidArgument, "T must be >= 1");
  require(beta_start > 0 && beta_start <= beta_end && beta_end < 1, ErrorCode::InvalidArgument,
          "need 0 < beta_start <= beta_end < 1");
  model.validate();
  require(batch_size >= 1, ErrorCode::InvalidArgument, "batch_size must be >= 1");
  require(lr > 0, ErrorCode::InvalidArgument, "learning rate must be positive");
  require(max_steps >= 0, ErrorCode::InvalidArgument, "max_steps must be >= 0");
  require(window_stride >= 1, ErrorCode::InvalidArgument, "window_stride must be >= 1");
  if (stage == Stage::Frame) {
    require(seq_len == 1, ErrorCode::InvalidArgument, "frame stage requires seq_len = 1");
  } else {
    require(seq_len >= 2, ErrorCode::InvalidArgument, "sequence stage requires seq_len >= 2");
    require(!stage1_checkpoint.empty(), ErrorCode::InvalidArgument,
            "sequence stage requires a stage-1 checkpoint reference");
  }
}

nlohmann::json RunConfig::to_json() const {
  return {
      {"stage", to_string(stage)},
      {"diffusion", {{"T", T}, {"beta_start", beta_start}, {"beta_end", beta_end}}},
      {"model", nn::to_json(model)},
      {"scene", data::to_json(scene)},
      {"train",
       {{"seq_len", seq_len},
        {"batch_size", batch_size},
        {"lr", lr},
        {"adam_betas", {adam_beta1, adam_beta2}},
        {"weight_decay", weight_decay},
        {"grad_clip", grad_clip},
        {"lambdas", {lambdas.mse, lambdas.vib, lambdas.ce, lambdas.dice}},
        {"max_steps", max_steps},
        {"seed", seed},
        {"log_every", log_every},
        {"checkpoint_every", checkpoint_every},
        {"window_stride", window_stride}}},
      {"data", {{"root", dataset_root}, {"groups", groups}}},
      {"checkpoint", {{"out", checkpoint_out}, {"stage1", stage1_checkpoint}}},
      {"log", log_path},
  };
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.stage = stage_from_string(j.value("stage", std::string("frame")));
    if (j.contains("diffusion")) {
      const auto& d = j["diffusion"];
      c.T = d.value("T", c.T);
      c.beta_start = d.value("beta_start", c.beta_start);
      c.beta_end = d.value("beta_end", c.beta_end);
    }
    if (j.contains("model")) c.model = nn::model_from_json(j["model"]);
    if (j.contains("scene")) c.scene = data::scene_from_json(j["scene"]);
    if (j.contains("train")) {
      const auto& t = j["train"];
      c.seq_len = t.value("seq_len", c.seq_len);
      c.batch_size = t.value("batch_size", c.batch_size);
      c.lr = t.value("lr", c.lr);
      if (t.contains("adam_betas")) {
        c.adam_beta1 = t["adam_betas"].at(0);
        c.adam_beta2 = t["adam_betas"].at(1);
      }
      c.weight_decay = t.value("weight_decay", c.weight_decay);
      c.grad_clip = t.value("grad_clip", c.grad_clip);
      if (t.contains("lambdas")) {
        const auto& l = t["lambdas"];
        c.lambdas = {l.at(0).get<double>(), l.at(1).get<double>(), l.at(2).get<double>(),
                     l.at(3).get<double>()};
      }
      c.max_steps = t.value("max_steps", c.max_steps);
      c.seed = t.value("seed", c.seed);
      c.log_every = t.value("log_every", c.log_every);
      c.checkpoint_every = t.value("checkpoint_every", c.checkpoint_every);
      c.window_stride = t.value("window_stride", c.window_stride);
    }
    if (j.contains("data")) {
      c.dataset_root = j["data"].value("root", c.dataset_root);
      if (j["data"].contains("groups")) c.groups = j["data"]["groups"].get<std::vector<std::string>>();
    }
    if (j.contains("checkpoint")) {
      c.checkpoint_out = j["checkpoint"].value("out", c.checkpoint_out);
      c.stage1_checkpoint = j["checkpoint"].value("stage1", c.stage1_checkpoint);
    }
    c.log_path = j.value("log", c.log_path);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("malformed run configuration: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open configuration " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, path + ": " + e.what());
  }
  return from_json(j);
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot write configuration " + path);
  out << to_json().dump(2) << "\n";
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto j = to_json();
  std::string pointer = "/" + key;
  for (auto& ch : pointer) {
    if (ch == '.') ch = '/';
  }
  nlohmann::json::json_pointer ptr(pointer);
  require(j.contains(ptr), ErrorCode::InvalidArgument, "unknown configuration key '" + key + "'");
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = value;
  }
  j[ptr] = parsed;
  *this = from_json(j);
}

}  // namespace sdm::train
