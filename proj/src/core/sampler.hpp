#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>

#include "denoiser.hpp"
#include "schedule.hpp"
#include "stb.hpp"

namespace sdm::nn {

torch::Generator make_generator(std::uint64_t seed);

using DenoiseFn = std::function<DenoiserOutput(const torch::Tensor& y_t, const torch::Tensor& t)>;
using StepHook = std::function<void(int t)>;

// Ancestral sampling from y_T ~ N(0, I) down to y_0; one denoise call per
// step. Returns the final embedding.
torch::Tensor reverse_chain(const DenoiseFn& denoise, at::IntArrayRef shape,
                            const diffusion::Schedule& sched, torch::Generator& gen,
                            const StepHook& on_step = nullptr,
                            torch::ScalarType dtype = torch::kFloat32);

// Frame-level sampling for a batch of heatmap pairs -> [B, H, W] uint8 labels.
torch::Tensor sample_frames(FrameModel& model, const torch::Tensor& horizontal,
                            const torch::Tensor& vertical, const diffusion::Schedule& sched,
                            torch::Generator& gen, const StepHook& on_step = nullptr);

// Joint sampling of whole windows; inputs hold B*N frames.
torch::Tensor sample_windows(SequenceModel& model, const torch::Tensor& horizontal,
                             const torch::Tensor& vertical, const diffusion::Schedule& sched,
                             torch::Generator& gen, const StepHook& on_step = nullptr);

}  // namespace sdm::nn
