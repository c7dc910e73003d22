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

#include <limits>
#include <string>
#include <vector>

#include "simdiff/physics.hpp"
#include "simdiff/pipeline.hpp"

namespace simdiff {

inline constexpr int kFeatureDim = 5;

// Handcrafted motion descriptor: mean root height, apex, net horizontal
// displacement, mean root speed, ground-contact ratio.
Eigen::RowVectorXd motion_features(const Motion& m);

double apex_height(const Motion& m);

// Time-averaged signed root drift along an axis (0 = x, 1 = y), relative to
// the first frame.
double signed_drift(const Motion& m, int axis);

struct FrechetResult {
  double value = 0.0;
  bool regularized = false;  // a covariance needed the eps*I fallback
};

// Frechet distance between Gaussian fits of two feature sets:
// ||mu_A - mu_B||^2 + tr(S_A + S_B - 2 (S_A S_B)^{1/2}).
FrechetResult feature_frechet(const std::vector<Eigen::RowVectorXd>& a,
                              const std::vector<Eigen::RowVectorXd>& b);

// Mean pairwise feature distance over n_pairs seeded random pairs
// (n_pairs == 0 enumerates all pairs).
double diversity(const std::vector<Eigen::RowVectorXd>& a, int n_pairs,
                 std::uint64_t seed = 0);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

enum class SweepAxis { GRAVITY, WIND_X, WIND_Y };

struct ComplianceCurve {
  SweepAxis axis = SweepAxis::GRAVITY;
  std::vector<double> values;     // swept parameter
  std::vector<double> response;   // mean apex (gravity) or mean drift (wind)
  std::vector<std::vector<double>> per_sample;  // responses per value
  double spearman_vs_magnitude = 0.0;  // gravity: corr(|g|, apex); wind: corr(w, drift)
};

ComplianceCurve compliance_sweep(const Checkpoint& ckpt, SweepAxis axis,
                                 const std::vector<double>& values,
                                 int n_samples, int class_label,
                                 const SampleOptions& opt);

struct TimingRow {
  std::string method;
  std::string sampler;
  double median_seconds = 0.0;
  int n = 0;
};

// Median per-sample wall clock, batch size 1, for the five standard
// variants: trunk-only DDPM, adapter-conditioned DDPM/DDIM, and
// projection-guided DDPM/DDIM.
std::vector<TimingRow> timing_bench(const Checkpoint& backbone,
                                    const Checkpoint& adapted,
                                    const SampleOptions& base, int n);

struct EvalRow {
  std::string method;
  std::string sampler;
  double s_cfg = 0.0;
  double adapter_scale = 0.0;
  double penetration_mm = 0.0, penetration_std = 0.0;
  double floating_mm = 0.0, floating_std = 0.0;
  double sliding_mm = 0.0, sliding_std = 0.0;
  double ffd = 0.0;
  bool ffd_regularized = false;
  double diversity = 0.0;
  double class_consistency = std::numeric_limits<double>::quiet_NaN();
  double secs_per_sample = std::numeric_limits<double>::quiet_NaN();
  int n = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::string meta_json;  // seeds, config hash, free-form
};

// Aggregates one method's sample set against a reference set.
EvalRow evaluate_set(const std::string& method, const std::string& sampler,
                     double s_cfg, double adapter_scale,
                     const std::vector<Motion>& samples,
                     const std::vector<Eigen::RowVectorXd>& ref_features,
                     std::uint64_t seed);

// report.csv (fixed column order) + report.json; byte-deterministic.
void emit_report(const EvalReport& report, const std::string& out_dir);

// Minimal deterministic SVG line chart, one or more series.
struct ChartSeries {
  std::string label;
  std::vector<double> x, y;
};
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<ChartSeries>& series);

}  // namespace simdiff
