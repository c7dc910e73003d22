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

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "simdiff/diffusion.hpp"
#include "simdiff/motion.hpp"

namespace simdiff {

// Denoiser interface used by the samplers. Arguments: noisy sample, step
// t in [1, T], optional class condition (nullopt = unconditional pass),
// environment parameters, adapter scale.
using DenoiseFn = std::function<Eigen::MatrixXd(
    const Eigen::MatrixXd& tau_t, int t, std::optional<int> cond,
    const SimParams& phi, double adapter_scale)>;

// Maps a kinematic clean-sample estimate to its physically tracked version.
using Projector = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

enum class SamplerKind { DDPM, DDIM };

// Subset of schedule indices visited by the respaced DDIM sampler.
// Entries are 0-based chain indices, strictly decreasing, ending at 0;
// index k corresponds to noise level alpha_bar[k+1]. The model is evaluated
// once per entry; reaching index 0 the chain emits the clean estimate
// (alpha_bar[0] == 1).
struct StepSpacing {
  std::vector<int> steps;

  void validate(int T) const;
  int num_steps() const { return static_cast<int>(steps.size()); }
};

// n indices evenly spread over [0, T-1], first = T-1, last = 0.
StepSpacing make_uniform_spacing(int T, int n);

// n indices allocated to the five equal segments of the chain in the
// 15:15:8:6:6 proportion (densest at high noise), evenly placed within each
// segment. With T=1000, n=50 this reproduces the 15-15-8-6-6 layout.
StepSpacing make_grouped_spacing(int T, int n);

struct GuidedSampleConfig {
  double s_cfg = 2.5;
  double adapter_scale = 1.0;
  // 0-based chain indices at which the projector replaces the step mean,
  // sorted descending (e.g. {60, 40, 20, 0}).
  std::optional<std::vector<int>> projection_steps;
  SamplerKind sampler = SamplerKind::DDPM;
  std::uint64_t seed = 0;
  int chain_id = 0;

  void validate(int T) const;
};

// Classifier-free-guided noise prediction: two model passes (conditional and
// condition-masked, adapters active in both), combined with cfg_epsilon.
// A null condition collapses to a single unconditional pass.
Eigen::MatrixXd guided_epsilon(const DenoiseFn& model,
                               const Eigen::MatrixXd& tau_t, int t,
                               std::optional<int> cond, const SimParams& phi,
                               const GuidedSampleConfig& cfg,
                               const NoiseSchedule& sched);

// Mean replacement for one projection-guided step at chain index t (0-based):
// estimates the clean sample by Tweedie, projects it, and rebuilds the step
// mean from the projected motion. With an identity projector this equals the
// unguided posterior mean.
Eigen::MatrixXd projection_guided_step(const DenoiseFn& model,
                                       const Eigen::MatrixXd& tau_t, int t,
                                       std::optional<int> cond,
                                       const SimParams& phi,
                                       const GuidedSampleConfig& cfg,
                                       const Projector& projector,
                                       const NoiseSchedule& sched);

// Full ancestral chain T -> 1. Noise of scale sqrt(beta_t) is added at every
// step except the last. Throws NumericDivergence if the state stops being
// finite.
Eigen::MatrixXd ddpm_sample(const DenoiseFn& model, std::optional<int> cond,
                            const SimParams& phi,
                            const GuidedSampleConfig& cfg,
                            const NoiseSchedule& sched, int rows, int cols,
                            const Projector& projector = nullptr);

// Deterministic (eta = 0) respaced sampler: every step forms the Tweedie
// estimate and re-noises it analytically to the next spacing index.
Eigen::MatrixXd ddim_sample(const DenoiseFn& model, std::optional<int> cond,
                            const SimParams& phi,
                            const GuidedSampleConfig& cfg,
                            const NoiseSchedule& sched,
                            const StepSpacing& spacing, int rows, int cols,
                            const Projector& projector = nullptr);

// Projection schedule for the respaced sampler: the last n entries of the
// spacing, one sampling index apart.
std::vector<int> end_space1_projection_steps(const StepSpacing& spacing,
                                             int n = 4);

}  // namespace simdiff
