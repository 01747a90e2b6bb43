#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "denoiser.hpp"
#include "stb.hpp"

namespace sdm::train {

// Named-tensor archive plus run metadata.
//
// On disk: "SDMCKPT1", u64 metadata length, metadata JSON, raw tensor
// payloads in table order, then a u64 FNV-1a digest of everything before it.
// The hex digest is the checkpoint's identity.
struct Checkpoint {
  std::string stage = "frame";  // "frame" | "sequence"
  std::int64_t step = 0;
  nlohmann::json config;        // RunConfig snapshot
  std::string parent_hash;      // stage-2 only
  std::string parent_path;      // stage-2 only; a hint for locating the parent
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  // Digest of the serialized form.
  std::string hash() const;
  const torch::Tensor* find(const std::string& name) const;
};

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::string& bytes, const std::string& origin = "<memory>");

// Atomic (write temp, rename). Returns the checkpoint hash.
std::string save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Copies of the current parameter values.
std::vector<std::pair<std::string, torch::Tensor>> snapshot(const torch::nn::Module& m,
                                                            const std::string& prefix = "");
// Copies named tensors into a module; names and shapes must match exactly.
void restore(torch::nn::Module& m, const Checkpoint& ckpt, const std::string& prefix = "");

nn::FrameModel frame_model_from(const Checkpoint& stage1);

// Throws HashMismatch naming both hashes unless `allow_mismatch`.
void verify_parent(const Checkpoint& stage2, const Checkpoint& stage1, bool allow_mismatch = false);
nn::SequenceModel sequence_model_from(const Checkpoint& stage2, const Checkpoint& stage1,
                                      bool allow_mismatch = false);

}  // namespace sdm::train
