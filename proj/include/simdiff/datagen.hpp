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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "simdiff/motion.hpp"
#include "simdiff/physics.hpp"

namespace simdiff {

inline constexpr int kNumClasses = 3;  // 0 = jump, 1 = walk, 2 = hop
inline constexpr int kDefaultFrames = 60;

// Point-figure dimensions used by the reference generator.
inline constexpr double kStandHeight = 0.50;
inline constexpr double kFootLateral = 0.09;
inline constexpr double kHeadOffset = 0.30;

// Mocap-style artifacts injected into generated references: a uniform
// vertical offset of the whole clip and a per-contact-phase horizontal foot
// skate. Zero ranges produce clean references.
struct ArtifactConfig {
  double z_offset_lo = -0.02;  // m
  double z_offset_hi = 0.04;   // m
  double skate_max = 0.01;     // m per contact phase

  static ArtifactConfig clean() { return {0.0, 0.0, 0.0}; }
};

enum class RandomizationMode { SINGLE_PARAM, FIXED_EARTH };

struct RandomizationSpec {
  std::array<double, 2> gravity_range = {-20.0, -1.0};  // m/s^2
  std::array<double, 2> wind_range = {-10.0, 10.0};     // N
  RandomizationMode mode = RandomizationMode::SINGLE_PARAM;

  void validate() const;
};

enum class RecordSource { REFERENCE, TRACKED };

struct MotionRecord {
  std::string id;
  int class_label = 0;
  SimParams phi;
  Motion motion;
  RecordSource source = RecordSource::REFERENCE;
  std::optional<double> d_l2;  // present iff TRACKED
};

struct GenerationReport {
  int n_clips = 0;
  int n_tracking_failed = 0;
  int n_filtered = 0;
  int n_retained = 0;
  double retention_rate = 0.0;
  double threshold = 0.0;
  double mean_d_l2 = 0.0;
  // per-axis histograms of retained tracked clips: g_z, w_x, w_y
  std::array<std::array<int, 8>, 3> phi_histograms{};

  std::string to_json() const;
};

// Analytic reference motion for a class, deterministic per seed. Clips vary
// mildly in timing and amplitude so the corpus is not degenerate.
Motion gen_reference(int class_label, std::uint64_t seed,
                     const ArtifactConfig& artifacts,
                     int frames = kDefaultFrames, int frame_rate = 30);

// Domain-randomized environment draw. SINGLE_PARAM varies exactly one of
// {g_z, w_x, w_y} per call, leaving the others at the Earth default;
// FIXED_EARTH always returns (-9.8, 0, 0).
SimParams sample_phi(const RandomizationSpec& spec, std::uint64_t seed);

// Mean positional discrepancy: (1/F) sum_f ||ref_f - trk_f||_2 with each
// frame's norm taken over all J*3 coordinates.
double d_l2(const Motion& ref, const Motion& trk);

struct CorpusOptions {
  int frames = kDefaultFrames;
  int frame_rate = 30;
  ArtifactConfig artifacts{};
  WorldConfig world{};
  int jobs = 1;
};

// Generates n_clips references, tracks each under a sampled phi, filters by
// d_l2 <= threshold, and returns reference records plus retained tracked
// records. Throws EmptyCorpusError when no tracked clip survives.
std::pair<std::vector<MotionRecord>, GenerationReport> build_corpus(
    int n_clips, const RandomizationSpec& spec, double threshold,
    std::uint64_t seed, const CorpusOptions& options = {});

// One-time filter calibration: the 90th percentile of d_l2 over clean
// references tracked under spec-sampled environments.
double calibrate_threshold(const RandomizationSpec& spec, int n_clips,
                           std::uint64_t seed, const CorpusOptions& options = {});

// Default filter threshold baked from `simdiff calibrate --n 400 --seed 1`.
inline constexpr double kDefaultFilterThreshold = 0.35;

void write_corpus(const std::vector<MotionRecord>& records,
                  const std::string& path);
std::vector<MotionRecord> read_corpus(const std::string& path);

}  // namespace simdiff
