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

#include "simdiff/errors.hpp"
#include "simdiff/motion.hpp"

namespace simdiff {

// Plausibility metrics treat clearances within 5 mm of the ground plane as
// contact.
inline constexpr double kContactMetricTol = 0.005;

struct WorldConfig {
  double mass = 1.0;               // kg
  double dt_control = 1.0 / 30.0;  // s, one tracked reference frame
  int substeps = 15;               // physics at substeps / dt_control Hz
  double kp = 2000.0;              // N/m
  double kd = 15.0;                // N*s/m
  double f_max = 80.0;             // actuation clamp, N
  double ground_z = 0.0;           // m
  double contact_tol = 1e-6;       // m, solver contact tolerance
  double escape_radius = 2.0;      // m, tracking-failure threshold

  void validate() const;
};

// Root state of the point figure. Feet and head are kinematic appendages
// placed from the tracked reference pose; `support` is true when any foot is
// within contact_tol of the ground after contact resolution.
struct SimState {
  Eigen::Vector3d root_pos = Eigen::Vector3d::Zero();
  Eigen::Vector3d root_vel = Eigen::Vector3d::Zero();
  bool support = false;
};

// Advances one control period (cfg.substeps semi-implicit Euler substeps).
// Actuation is a PD pull toward the target root, clamped to f_max, and acts
// only while the figure has ground support; gravity acts always and wind is
// a constant force field independent of contact. Ground contact projects any
// foot below ground_z back up and zeroes downward root velocity.
SimState step(const SimState& state, const Eigen::RowVectorXd& target_frame,
              const SimParams& phi, const WorldConfig& cfg);

// Tracks a kinematic motion through the simulator under phi and returns the
// rollout with identical frame count and rate. The first frame is snapped to
// the ground before tracking. Feet in ground contact are pinned where they
// touched (stiction) until the reference lifts them. Throws TrackingFailure
// if the root leaves the escape radius around its target.
Motion project(const Motion& motion, const SimParams& phi,
               const WorldConfig& cfg);

// Mean over frames of the summed below-ground depth of all joints, mm.
double penetration(const Motion& motion, double ground_z = 0.0);

// Mean over frames of the lowest joint's clearance, counting only frames
// clear of the ground by more than the 5 mm tolerance, mm.
double floating(const Motion& motion, double ground_z = 0.0);

// Mean over consecutive frame pairs of the horizontal displacement of feet
// that stay within 5 mm of the ground plane in both frames, mm.
double sliding(const Motion& motion, double ground_z = 0.0);

}  // namespace simdiff
