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

#include "simdiff/physics.hpp"

#include <algorithm>
#include <cmath>

namespace simdiff {

namespace {

// A pinned foot is released once the reference lifts it this far off the
// ground; large enough to ignore contact dithering, well below step height.
constexpr double kLatchRelease = 0.01;

Eigen::Vector3d joint_of(const Eigen::RowVectorXd& frame, int j) {
  return {frame[j * 3], frame[j * 3 + 1], frame[j * 3 + 2]};
}

void check_phi(const SimParams& phi) {
  if (!(phi.g_z < 0.0)) throw ParameterError("g_z must be negative");
  if (std::abs(phi.w_x) > kMaxWindForce || std::abs(phi.w_y) > kMaxWindForce)
    throw ParameterError("wind magnitude exceeds the configured maximum");
}

struct FootLatch {
  bool pinned = false;
  double x = 0.0, y = 0.0;
};

// One semi-implicit Euler substep against a (possibly moving) support
// height. The support is unilateral: a rising floor carries the root with
// the floor's speed, a static floor only cancels downward velocity.
void substep_integrate(SimState& s, const Eigen::Vector3d& target_root,
                       double floor_z, double floor_vel, const SimParams& phi,
                       const WorldConfig& cfg, double dt) {
  Eigen::Vector3d force(phi.w_x, phi.w_y, cfg.mass * phi.g_z);
  if (s.support && (cfg.kp > 0.0 || cfg.kd > 0.0)) {
    Eigen::Vector3d pd =
        cfg.kp * (target_root - s.root_pos) - cfg.kd * s.root_vel;
    const double mag = pd.norm();
    if (mag > cfg.f_max) pd *= cfg.f_max / mag;
    force += pd;
  }
  s.root_vel += (force / cfg.mass) * dt;
  s.root_pos += s.root_vel * dt;

  if (s.root_pos.z() < floor_z) {
    s.root_pos.z() = floor_z;
    s.root_vel.z() = std::max(s.root_vel.z(), std::max(0.0, floor_vel));
  }
  s.support = (s.root_pos.z() - floor_z) <= cfg.contact_tol;
}

}  // namespace

void WorldConfig::validate() const {
  if (substeps < 1) throw ParameterError("substeps must be >= 1");
  if (!(mass > 0) || kp < 0 || kd < 0 || !(f_max > 0))
    throw ParameterError("mass and f_max must be positive; gains nonnegative");
  if (!(dt_control > 0) || !(contact_tol > 0) || !(escape_radius > 0))
    throw ParameterError(
        "dt_control, contact_tol, escape_radius must be positive");
}

SimState step(const SimState& state, const Eigen::RowVectorXd& target_frame,
              const SimParams& phi, const WorldConfig& cfg) {
  cfg.validate();
  check_phi(phi);
  if (target_frame.size() != kFrameDim)
    throw ParameterError("target frame must have J*3 entries");
  if (!state.root_pos.allFinite() || !state.root_vel.allFinite() ||
      !target_frame.allFinite())
    throw NumericDivergence("non-finite simulator input", 0);

  const Eigen::Vector3d target_root = joint_of(target_frame, kRoot);
  const double off_min =
      std::min(target_frame[kLeftFoot * 3 + 2], target_frame[kRightFoot * 3 + 2]) -
      target_root.z();
  const double floor_z = cfg.ground_z - off_min;

  const double dt = cfg.dt_control / cfg.substeps;
  SimState s = state;
  for (int i = 0; i < cfg.substeps; ++i)
    substep_integrate(s, target_root, floor_z, 0.0, phi, cfg, dt);

  if (!s.root_pos.allFinite() || !s.root_vel.allFinite())
    throw NumericDivergence("simulator state diverged", 0);
  return s;
}

Motion project(const Motion& motion, const SimParams& phi,
               const WorldConfig& cfg) {
  cfg.validate();
  check_phi(phi);
  const int F = motion.num_frames();
  if (F < 2) throw ParameterError("motion needs at least 2 frames");
  if (motion.frames.cols() != kFrameDim)
    throw ParameterError("motion must use the figure joint layout");
  if (!motion.frames.allFinite())
    throw NumericDivergence("non-finite motion passed to project", 0);

  auto root_of = [&](int f) { return motion.joint(f, kRoot); };
  auto floor_of = [&](int f) {
    const double off_min = std::min(motion.joint_z(f, kLeftFoot),
                                    motion.joint_z(f, kRightFoot)) -
                           root_of(f).z();
    return cfg.ground_z - off_min;
  };

  // snap the first frame to the ground
  const double min_foot0 =
      std::min(motion.joint_z(0, kLeftFoot), motion.joint_z(0, kRightFoot));
  const double shift = cfg.ground_z - min_foot0;

  SimState s;
  s.root_pos = root_of(0) + Eigen::Vector3d(0, 0, shift);
  s.root_vel = (root_of(1) - root_of(0)) * double(motion.frame_rate);
  s.support = true;

  Motion out;
  out.frame_rate = motion.frame_rate;
  out.frames.resize(F, kFrameDim);

  FootLatch latch[2];
  auto assemble = [&](int f) {
    const Eigen::RowVectorXd ref = motion.frames.row(f);
    const Eigen::Vector3d ref_root = joint_of(ref, kRoot);
    out.frames.block<1, 3>(f, kRoot * 3) = s.root_pos.transpose();
    for (int leg = 0; leg < 2; ++leg) {
      const int j = kLeftFoot + leg;
      Eigen::Vector3d foot = s.root_pos + (joint_of(ref, j) - ref_root);
      const double clearance = foot.z() - cfg.ground_z;
      FootLatch& l = latch[leg];
      if (l.pinned && clearance > kLatchRelease) l.pinned = false;
      if (!l.pinned && clearance <= cfg.contact_tol) {
        l.pinned = true;
        l.x = foot.x();
        l.y = foot.y();
      }
      if (l.pinned) foot = {l.x, l.y, cfg.ground_z};
      out.frames.block<1, 3>(f, j * 3) = foot.transpose();
    }
    const Eigen::Vector3d head =
        s.root_pos + (joint_of(ref, kHead) - ref_root);
    out.frames.block<1, 3>(f, kHead * 3) = head.transpose();
  };

  assemble(0);
  const double dt = cfg.dt_control / cfg.substeps;
  double floor_prev = floor_of(0);
  for (int f = 1; f < F; ++f) {
    const Eigen::Vector3d r0 = root_of(f - 1), r1 = root_of(f);
    const double fl0 = floor_of(f - 1), fl1 = floor_of(f);
    for (int i = 1; i <= cfg.substeps; ++i) {
      const double tau = double(i) / cfg.substeps;
      const Eigen::Vector3d target = r0 + tau * (r1 - r0);
      const double floor_z = fl0 + tau * (fl1 - fl0);
      const double floor_vel = (floor_z - floor_prev) / dt;
      substep_integrate(s, target, floor_z, floor_vel, phi, cfg, dt);
      floor_prev = floor_z;
    }
    if (!s.root_pos.allFinite() || !s.root_vel.allFinite())
      throw NumericDivergence("simulator state diverged", f);
    if ((s.root_pos - r1).norm() > cfg.escape_radius)
      throw TrackingFailure("root left the escape radius around its target", f);
    assemble(f);
  }
  return out;
}

double penetration(const Motion& motion, double ground_z) {
  const int F = motion.num_frames();
  if (F < 1 || motion.frames.cols() % 3 != 0)
    throw ParameterError("invalid motion");
  const int J = static_cast<int>(motion.frames.cols()) / 3;
  double total = 0.0;
  for (int f = 0; f < F; ++f)
    for (int j = 0; j < J; ++j)
      total += std::max(0.0, ground_z - motion.frames(f, j * 3 + 2));
  return total / F * 1000.0;
}

double floating(const Motion& motion, double ground_z) {
  const int F = motion.num_frames();
  if (F < 1 || motion.frames.cols() % 3 != 0)
    throw ParameterError("invalid motion");
  const int J = static_cast<int>(motion.frames.cols()) / 3;
  double total = 0.0;
  for (int f = 0; f < F; ++f) {
    double low = motion.frames(f, 2);
    for (int j = 1; j < J; ++j)
      low = std::min(low, motion.frames(f, j * 3 + 2));
    const double clearance = low - ground_z;
    if (clearance > kContactMetricTol) total += clearance;
  }
  return total / F * 1000.0;
}

double sliding(const Motion& motion, double ground_z) {
  const int F = motion.num_frames();
  if (F < 2) throw ParameterError("sliding needs at least 2 frames");
  if (motion.frames.cols() != kFrameDim)
    throw ParameterError("sliding requires the figure joint layout");
  double total = 0.0;
  for (int f = 0; f + 1 < F; ++f) {
    for (int j = kLeftFoot; j <= kRightFoot; ++j) {
      const double z0 = motion.frames(f, j * 3 + 2) - ground_z;
      const double z1 = motion.frames(f + 1, j * 3 + 2) - ground_z;
      if (std::abs(z0) <= kContactMetricTol &&
          std::abs(z1) <= kContactMetricTol) {
        const double dx = motion.frames(f + 1, j * 3) - motion.frames(f, j * 3);
        const double dy =
            motion.frames(f + 1, j * 3 + 1) - motion.frames(f, j * 3 + 1);
        total += std::hypot(dx, dy);
      }
    }
  }
  return total / (F - 1) * 1000.0;
}

}  // namespace simdiff
