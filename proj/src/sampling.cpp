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

#include "simdiff/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "simdiff/rng.hpp"

namespace simdiff {

void StepSpacing::validate(int T) const {
  if (steps.empty()) throw ParameterError("spacing must not be empty");
  if (steps.back() != 0) throw ParameterError("spacing must end at index 0");
  for (size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] < 0 || steps[i] > T - 1)
      throw ParameterError("spacing index out of [0, T-1]");
    if (i > 0 && steps[i] >= steps[i - 1])
      throw ParameterError("spacing must be strictly decreasing");
  }
}

StepSpacing make_uniform_spacing(int T, int n) {
  if (n < 1 || n > T) throw ParameterError("spacing size out of range");
  StepSpacing sp;
  if (n == 1) {
    sp.steps = {0};
    return sp;
  }
  for (int i = 0; i < n; ++i) {
    int k = static_cast<int>(std::llround(double(T - 1) * (n - 1 - i) / (n - 1)));
    if (sp.steps.empty() || k < sp.steps.back()) sp.steps.push_back(k);
  }
  if (sp.steps.back() != 0) sp.steps.push_back(0);
  return sp;
}

StepSpacing make_grouped_spacing(int T, int n) {
  if (n < 5 || n > T) throw ParameterError("grouped spacing needs 5 <= n <= T");
  const double weights[5] = {15, 15, 8, 6, 6};  // segment 0 = highest noise
  // largest-remainder allocation, at least one index per segment
  int counts[5];
  double rem[5];
  int total = 0;
  for (int s = 0; s < 5; ++s) {
    double exact = n * weights[s] / 50.0;
    counts[s] = std::max(1, static_cast<int>(exact));
    rem[s] = exact - counts[s];
    total += counts[s];
  }
  while (total < n) {
    int best = 0;
    for (int s = 1; s < 5; ++s)
      if (rem[s] > rem[best]) best = s;
    ++counts[best];
    rem[best] -= 1.0;
    ++total;
  }
  while (total > n) {
    int best = -1;
    for (int s = 0; s < 5; ++s)
      if (counts[s] > 1 && (best < 0 || rem[s] < rem[best])) best = s;
    --counts[best];
    rem[best] += 1.0;
    --total;
  }

  StepSpacing sp;
  for (int s = 0; s < 5; ++s) {
    // segment s covers indices [lo, hi), highest-noise segment first
    int lo = (4 - s) * T / 5;
    int hi = (5 - s) * T / 5;
    int c = counts[s];
    for (int i = 0; i < c; ++i) {
      double frac = (c == 1) ? 1.0 : double(c - 1 - i) / (c - 1);
      int k = lo + static_cast<int>(std::llround(frac * (hi - 1 - lo)));
      if (sp.steps.empty() || k < sp.steps.back()) sp.steps.push_back(k);
    }
  }
  if (sp.steps.back() != 0) sp.steps.push_back(0);
  sp.validate(T);
  return sp;
}

void GuidedSampleConfig::validate(int T) const {
  if (s_cfg < 0.0) throw ParameterError("s_cfg must be >= 0");
  if (adapter_scale < 0.0) throw ParameterError("adapter scale must be >= 0");
  if (projection_steps) {
    const auto& ps = *projection_steps;
    if (ps.empty()) throw ParameterError("projection step list is empty");
    for (size_t i = 0; i < ps.size(); ++i) {
      if (ps[i] < 0 || ps[i] > T - 1)
        throw ParameterError("projection step out of [0, T-1]");
      if (i > 0 && ps[i] >= ps[i - 1])
        throw ParameterError("projection steps must be sorted descending");
    }
  }
}

namespace {

void check_finite(const Eigen::MatrixXd& x, const char* what, int step) {
  if (!x.allFinite())
    throw NumericDivergence(std::string(what) + " produced non-finite values",
                            step);
}

}  // namespace

Eigen::MatrixXd guided_epsilon(const DenoiseFn& model,
                               const Eigen::MatrixXd& tau_t, int t,
                               std::optional<int> cond, const SimParams& phi,
                               const GuidedSampleConfig& cfg,
                               const NoiseSchedule& sched) {
  sched.check_step(t);
  Eigen::MatrixXd eps_uncond =
      model(tau_t, t, std::nullopt, phi, cfg.adapter_scale);
  if (!cond) return eps_uncond;
  Eigen::MatrixXd eps_cond = model(tau_t, t, cond, phi, cfg.adapter_scale);
  return cfg_epsilon(eps_uncond, eps_cond, cfg.s_cfg);
}

Eigen::MatrixXd projection_guided_step(const DenoiseFn& model,
                                       const Eigen::MatrixXd& tau_t, int t,
                                       std::optional<int> cond,
                                       const SimParams& phi,
                                       const GuidedSampleConfig& cfg,
                                       const Projector& projector,
                                       const NoiseSchedule& sched) {
  if (!projector) throw ParameterError("projection step requires a projector");
  const int step = t + 1;  // model step for 0-based chain index t
  Eigen::MatrixXd eps = guided_epsilon(model, tau_t, step, cond, phi, cfg, sched);
  Eigen::MatrixXd x0 = tweedie_x0(tau_t, eps, step, sched);
  Eigen::MatrixXd projected = projector(x0);
  check_finite(projected, "projector", t);
  return posterior_mean(tau_t, projected, step, sched);
}

Eigen::MatrixXd ddpm_sample(const DenoiseFn& model, std::optional<int> cond,
                            const SimParams& phi,
                            const GuidedSampleConfig& cfg,
                            const NoiseSchedule& sched, int rows, int cols,
                            const Projector& projector) {
  cfg.validate(sched.T);
  std::unordered_set<int> project_at;
  if (cfg.projection_steps) {
    if (!projector)
      throw ParameterError("projection steps given without a projector");
    project_at.insert(cfg.projection_steps->begin(),
                      cfg.projection_steps->end());
  }

  Rng rng(derive_stream(cfg.seed, static_cast<std::uint64_t>(cfg.chain_id)));
  Eigen::MatrixXd x = rng.normal_matrix(rows, cols);

  for (int t = sched.T; t >= 1; --t) {
    const int k = t - 1;  // 0-based chain index
    Eigen::MatrixXd mean;
    if (project_at.count(k)) {
      mean = projection_guided_step(model, x, k, cond, phi, cfg, projector,
                                    sched);
    } else {
      Eigen::MatrixXd eps = guided_epsilon(model, x, t, cond, phi, cfg, sched);
      mean = posterior_mean_from_eps(x, eps, t, sched);
    }
    check_finite(mean, "reverse step", t);
    if (t > 1) {
      x = mean + std::sqrt(sched.beta[t]) * rng.normal_matrix(rows, cols);
    } else {
      x = mean;
    }
  }
  return x;
}

Eigen::MatrixXd ddim_sample(const DenoiseFn& model, std::optional<int> cond,
                            const SimParams& phi,
                            const GuidedSampleConfig& cfg,
                            const NoiseSchedule& sched,
                            const StepSpacing& spacing, int rows, int cols,
                            const Projector& projector) {
  cfg.validate(sched.T);
  spacing.validate(sched.T);
  std::unordered_set<int> project_at;
  if (cfg.projection_steps) {
    if (!projector)
      throw ParameterError("projection steps given without a projector");
    project_at.insert(cfg.projection_steps->begin(),
                      cfg.projection_steps->end());
  }

  Rng rng(derive_stream(cfg.seed, static_cast<std::uint64_t>(cfg.chain_id)));
  Eigen::MatrixXd x = rng.normal_matrix(rows, cols);

  const int n = spacing.num_steps();
  for (int i = 0; i < n; ++i) {
    const int k = spacing.steps[i];
    const int t = k + 1;
    Eigen::MatrixXd eps = guided_epsilon(model, x, t, cond, phi, cfg, sched);
    Eigen::MatrixXd x0 = tweedie_x0(x, eps, t, sched);
    if (project_at.count(k)) {
      if (!projector) throw ParameterError("projection requires a projector");
      x0 = projector(x0);
    }
    check_finite(x0, "ddim step", t);
    if (i + 1 < n) {
      const double ab_next = sched.alpha_bar[spacing.steps[i + 1] + 1];
      x = std::sqrt(ab_next) * x0 + std::sqrt(1.0 - ab_next) * eps;
    } else {
      x = x0;  // index 0: alpha_bar[0] == 1, clean estimate
    }
  }
  return x;
}

std::vector<int> end_space1_projection_steps(const StepSpacing& spacing, int n) {
  const int m = spacing.num_steps();
  if (n < 1 || n > m) throw ParameterError("projection count out of range");
  return std::vector<int>(spacing.steps.end() - n, spacing.steps.end());
}

}  // namespace simdiff
