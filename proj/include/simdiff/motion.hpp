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

namespace simdiff {

// Joint layout of the point figure. Every motion frame stores absolute
// world-space positions, meters, as a flat row [root, lfoot, rfoot, head],
// three coordinates per joint.
inline constexpr int kNumJoints = 4;
inline constexpr int kFrameDim = kNumJoints * 3;
inline constexpr int kRoot = 0;
inline constexpr int kLeftFoot = 1;
inline constexpr int kRightFoot = 2;
inline constexpr int kHead = 3;

// A motion clip: frames.rows() = F, frames.cols() = J*3 for figure motions.
// The diffusion stack is dimension-agnostic, so frames.cols() may differ for
// toy problems; the physics and metric code requires the figure layout.
struct Motion {
  Eigen::MatrixXd frames;
  int frame_rate = 30;

  int num_frames() const { return static_cast<int>(frames.rows()); }

  Eigen::Vector3d joint(int frame, int j) const {
    return frames.block<1, 3>(frame, j * 3).transpose();
  }
  void set_joint(int frame, int j, const Eigen::Vector3d& p) {
    frames.block<1, 3>(frame, j * 3) = p.transpose();
  }
  double joint_z(int frame, int j) const { return frames(frame, j * 3 + 2); }
};

// Environment parameters phi: vertical gravity (m/s^2, negative = downward)
// and a constant horizontal wind force (N).
struct SimParams {
  double g_z = -9.81;
  double w_x = 0.0;
  double w_y = 0.0;

  Eigen::Vector3d as_vector() const { return {g_z, w_x, w_y}; }
};

inline constexpr double kEarthGravity = -9.81;
inline constexpr double kMaxWindForce = 10.0;

}  // namespace simdiff
