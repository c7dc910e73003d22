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

#include <string>

#include "simdiff/model.hpp"

namespace simdiff {

inline constexpr int kCheckpointSchema = 1;

// Everything needed to sample: parameters, the whitening transform they were
// trained under, and the noise schedule.
struct Checkpoint {
  DenoiserParams params;
  Normalizer norm;
  int T = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::string phase = "backbone";  // "backbone" | "adapter"
  int n_categories = 1;            // categorical encoder size, when used
};

// Named-tensor container: a JSON config header followed by raw row-major
// float64 tensor records. Round-trips bit-exactly.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace simdiff
