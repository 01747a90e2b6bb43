#include "checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "error.hpp"
#include "hash.hpp"
#include "run_config.hpp"

namespace sdm::train {

namespace {

constexpr char kMagic[8] = {'S', 'D', 'M', 'C', 'K', 'P', 'T', '1'};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    default: fail(ErrorCode::InvalidArgument, "unsupported tensor dtype in checkpoint");
  }
}

torch::ScalarType dtype_from(const std::string& s) {
  if (s == "f32") return torch::kFloat32;
  if (s == "f64") return torch::kFloat64;
  fail(ErrorCode::Corrupt, "unknown tensor dtype '" + s + "'");
}

void put_u64(std::string& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  std::memcpy(&v, in.data() + pos, 8);
  return v;
}

std::string body(const Checkpoint& ckpt) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    table.push_back({{"name", name}, {"dtype", dtype_name(t.scalar_type())}, {"shape", t.sizes().vec()},
                     {"nbytes", t.numel() * t.element_size()}});
  }
  nlohmann::json meta = {{"format", "sdm-checkpoint"}, {"version", 1},       {"stage", ckpt.stage},
                         {"step", ckpt.step},          {"config", ckpt.config}, {"parent_hash", ckpt.parent_hash},
                         {"parent_path", ckpt.parent_path}, {"tensors", table}};
  const auto meta_str = meta.dump();
  std::string out(kMagic, 8);
  put_u64(out, meta_str.size());
  out += meta_str;
  for (const auto& [name, t] : ckpt.tensors) {
    auto c = t.detach().contiguous().cpu();
    out.append(static_cast<const char*>(c.data_ptr()), c.numel() * c.element_size());
  }
  return out;
}

}  // namespace

std::string serialize(const Checkpoint& ckpt) {
  auto out = body(ckpt);
  Fnv1a h;
  h.update(out);
  put_u64(out, h.digest());
  return out;
}

std::string Checkpoint::hash() const {
  Fnv1a h;
  h.update(body(*this));
  return hex64(h.digest());
}

const torch::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

Checkpoint deserialize(const std::string& bytes, const std::string& origin) {
  auto corrupt = [&](const std::string& why) { fail(ErrorCode::Corrupt, origin + ": " + why); };
  if (bytes.size() < 24 || std::memcmp(bytes.data(), kMagic, 8) != 0) corrupt("not a checkpoint archive");
  const std::size_t payload_end = bytes.size() - 8;
  Fnv1a h;
  h.update(bytes.data(), payload_end);
  if (h.digest() != get_u64(bytes, payload_end)) corrupt("digest mismatch (truncated or corrupt archive)");

  const auto meta_len = get_u64(bytes, 8);
  if (16 + meta_len > payload_end) corrupt("metadata overruns archive");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(bytes.substr(16, meta_len));
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("bad metadata: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.stage = meta.value("stage", "frame");
  ckpt.step = meta.value("step", std::int64_t{0});
  ckpt.config = meta.value("config", nlohmann::json::object());
  ckpt.parent_hash = meta.value("parent_hash", "");
  ckpt.parent_path = meta.value("parent_path", "");
  std::size_t pos = 16 + meta_len;
  for (const auto& entry : meta.at("tensors")) {
    const auto nbytes = entry.at("nbytes").get<std::size_t>();
    if (pos + nbytes > payload_end) corrupt("tensor payload overruns archive");
    auto shape = entry.at("shape").get<std::vector<int64_t>>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype_from(entry.at("dtype"))));
    if (static_cast<std::size_t>(t.numel() * t.element_size()) != nbytes) corrupt("tensor size mismatch");
    std::memcpy(t.data_ptr(), bytes.data() + pos, nbytes);
    pos += nbytes;
    ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), t);
  }
  if (pos != payload_end) corrupt("trailing bytes after tensor payloads");
  return ckpt;
}

std::string save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto bytes = serialize(ckpt);
  const auto tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCode::Io, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, ErrorCode::Io, "cannot rename " + tmp + ": " + ec.message());
  return hex64(get_u64(bytes, bytes.size() - 8));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes, path);
}

std::vector<std::pair<std::string, torch::Tensor>> snapshot(const torch::nn::Module& m,
                                                            const std::string& prefix) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (auto& [name, t] : nn::named_parameters(m, prefix)) out.emplace_back(name, t.detach().clone());
  return out;
}

void restore(torch::nn::Module& m, const Checkpoint& ckpt, const std::string& prefix) {
  torch::NoGradGuard no_grad;
  const auto params = nn::named_parameters(m, prefix);
  std::set<std::string> expected;
  for (const auto& [name, p] : params) {
    expected.insert(name);
    const auto* t = ckpt.find(name);
    require(t != nullptr, ErrorCode::Corrupt, "checkpoint lacks parameter '" + name + "'");
    require(t->sizes() == p.sizes(), ErrorCode::Shape, "parameter '" + name + "' has a different shape");
    p.copy_(*t);
  }
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind(prefix, 0) == 0) {
      require(expected.count(name) > 0, ErrorCode::Corrupt,
              "checkpoint parameter '" + name + "' has no counterpart in the model");
    }
  }
}

nn::FrameModel frame_model_from(const Checkpoint& stage1) {
  require(stage1.stage == "frame", ErrorCode::Stage, "expected a frame-stage checkpoint");
  const auto cfg = RunConfig::from_json(stage1.config);
  nn::FrameModel model(cfg.model);
  // only frame-model parameters live in a stage-1 archive
  restore(*model, stage1);
  model->eval();
  return model;
}

void verify_parent(const Checkpoint& stage2, const Checkpoint& stage1, bool allow_mismatch) {
  require(stage2.stage == "sequence", ErrorCode::Stage, "expected a sequence-stage checkpoint");
  const auto actual = stage1.hash();
  if (stage2.parent_hash != actual && !allow_mismatch) {
    fail(ErrorCode::HashMismatch, "stage-2 checkpoint expects parent " + stage2.parent_hash +
                                      " but the supplied stage-1 checkpoint is " + actual);
  }
}

nn::SequenceModel sequence_model_from(const Checkpoint& stage2, const Checkpoint& stage1,
                                      bool allow_mismatch) {
  verify_parent(stage2, stage1, allow_mismatch);
  const auto cfg = RunConfig::from_json(stage2.config);
  auto frame = frame_model_from(stage1);
  auto seq = nn::wrap_model_with_stb(frame, cfg.seq_len);
  require(static_cast<int>(frame->sites().size()) == seq->site_count(), ErrorCode::Stage,
          "site count differs between stage-1 model and STB set");
  restore(*seq, stage2);
  seq->eval();
  return seq;
}

}  // namespace sdm::train
