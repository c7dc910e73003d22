// Copyright 2026 The SimDiff Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "simdiff/checkpoint.hpp"
#include "simdiff/physics.hpp"
#include "simdiff/sampling.hpp"

namespace simdiff {

struct SampleOptions {
  SamplerKind sampler = SamplerKind::DDPM;
  int ddim_steps = 20;
  double s_cfg = 2.5;
  double adapter_scale = 1.0;
  bool project = false;               // projection-guided baseline
  std::vector<int> projection_steps;  // empty = sampler default schedule
  WorldConfig world{};                // world used by the guidance projector
  int frames = kDefaultSampleFrames;
  std::uint64_t seed = 0;
  int jobs = 1;

  static constexpr int kDefaultSampleFrames = 60;
};

// Denoiser closure over fixed parameters; operates in normalized space.
DenoiseFn make_denoise_fn(const DenoiserParams& params);

// Guidance projector: denormalize, track through the simulator under phi,
// re-normalize. The world passed here should be permissive (the escape
// radius guards dataset generation, not guidance).
Projector make_projector(const SimParams& phi, const WorldConfig& world,
                         const Normalizer& norm, int frame_rate = 30);

// Samples one motion. The chain runs in the checkpoint's normalized space
// and the result is mapped back to world coordinates.
Motion generate_motion(const Checkpoint& ckpt, int class_label,
                       const SimParams& phi, const SampleOptions& opt,
                       int chain_id = 0);

// Independent chains (seed, chain_id) in parallel; output order is by chain.
std::vector<Motion> generate_batch(const Checkpoint& ckpt, int class_label,
                                   const SimParams& phi,
                                   const SampleOptions& opt, int n);

// Default projection schedule of the ancestral sampler, 0-based chain
// indices.
std::vector<int> default_ddpm_projection_steps(int T);

}  // namespace simdiff
