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

#include "simdiff/pipeline.hpp"

#include <atomic>
#include <thread>

namespace simdiff {

DenoiseFn make_denoise_fn(const DenoiserParams& params) {
  return [&params](const Eigen::MatrixXd& tau_t, int t, std::optional<int> cond,
                   const SimParams& phi, double adapter_scale) {
    return denoise(tau_t, t, cond, phi, adapter_scale, params);
  };
}

Projector make_projector(const SimParams& phi, const WorldConfig& world,
                         const Normalizer& norm, int frame_rate) {
  return [phi, world, norm, frame_rate](const Eigen::MatrixXd& x0) {
    Motion m;
    m.frame_rate = frame_rate;
    m.frames = norm.denormalize(x0);
    return norm.normalize(project(m, phi, world).frames);
  };
}

std::vector<int> default_ddpm_projection_steps(int T) {
  std::vector<int> steps;
  for (int k : {60, 40, 20, 0})
    if (k <= T - 1) steps.push_back(k);
  return steps;
}

Motion generate_motion(const Checkpoint& ckpt, int class_label,
                       const SimParams& phi, const SampleOptions& opt,
                       int chain_id) {
  const NoiseSchedule sched =
      make_schedule(ckpt.T, ckpt.beta_start, ckpt.beta_end);
  const int D = ckpt.params.backbone.cfg.input_dim;
  if (opt.frames < 1 || opt.frames > ckpt.params.backbone.cfg.max_frames)
    throw ParameterError("frame count outside the checkpoint's range");

  GuidedSampleConfig cfg;
  cfg.s_cfg = opt.s_cfg;
  cfg.adapter_scale = opt.adapter_scale;
  cfg.sampler = opt.sampler;
  cfg.seed = opt.seed;
  cfg.chain_id = chain_id;

  StepSpacing spacing;
  if (opt.sampler == SamplerKind::DDIM)
    spacing = make_grouped_spacing(ckpt.T, opt.ddim_steps);

  Projector projector;
  if (opt.project) {
    if (D != kFrameDim)
      throw ParameterError("projection guidance needs figure motions");
    projector = make_projector(phi, opt.world, ckpt.norm);
    if (!opt.projection_steps.empty()) {
      cfg.projection_steps = opt.projection_steps;
    } else if (opt.sampler == SamplerKind::DDPM) {
      cfg.projection_steps = default_ddpm_projection_steps(ckpt.T);
    } else {
      cfg.projection_steps = end_space1_projection_steps(spacing, 4);
    }
  }

  const DenoiseFn model = make_denoise_fn(ckpt.params);
  Eigen::MatrixXd out;
  if (opt.sampler == SamplerKind::DDPM) {
    out = ddpm_sample(model, class_label, phi, cfg, sched, opt.frames, D,
                      projector);
  } else {
    out = ddim_sample(model, class_label, phi, cfg, sched, spacing, opt.frames,
                      D, projector);
  }

  Motion m;
  m.frame_rate = 30;
  m.frames = ckpt.norm.denormalize(out);
  return m;
}

std::vector<Motion> generate_batch(const Checkpoint& ckpt, int class_label,
                                   const SimParams& phi,
                                   const SampleOptions& opt, int n) {
  std::vector<Motion> out(n);
  const int jobs = std::max(1, opt.jobs);
  if (jobs == 1 || n <= 1) {
    for (int i = 0; i < n; ++i)
      out[i] = generate_motion(ckpt, class_label, phi, opt, i);
    return out;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      out[i] = generate_motion(ckpt, class_label, phi, opt, i);
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < std::min(jobs, n); ++j) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace simdiff
