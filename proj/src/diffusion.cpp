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

#include "simdiff/diffusion.hpp"

#include <cmath>

namespace simdiff {

namespace {
void check_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                      const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ParameterError(std::string("shape mismatch in ") + what);
}
}  // namespace

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 2) throw ParameterError("schedule needs at least 2 steps");
  if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
    throw ParameterError("beta range must satisfy 0 < beta_start <= beta_end < 1");

  NoiseSchedule s;
  s.T = T;
  s.beta = Eigen::VectorXd::Zero(T + 1);
  s.alpha = Eigen::VectorXd::Ones(T + 1);
  s.alpha_bar = Eigen::VectorXd::Ones(T + 1);
  for (int t = 1; t <= T; ++t) {
    s.beta[t] = beta_start + (beta_end - beta_start) * (t - 1) / double(T - 1);
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  return s;
}

Eigen::MatrixXd q_sample(const Eigen::MatrixXd& tau0, int t,
                         const Eigen::MatrixXd& eps,
                         const NoiseSchedule& sched) {
  sched.check_step(t);
  check_same_shape(tau0, eps, "q_sample");
  const double ab = sched.alpha_bar[t];
  return std::sqrt(ab) * tau0 + std::sqrt(1.0 - ab) * eps;
}

Eigen::MatrixXd posterior_mean(const Eigen::MatrixXd& tau_t,
                               const Eigen::MatrixXd& tau0, int t,
                               const NoiseSchedule& sched) {
  sched.check_step(t);
  check_same_shape(tau_t, tau0, "posterior_mean");
  const double ab = sched.alpha_bar[t];
  const double ab_prev = sched.alpha_bar[t - 1];
  const double c1 = std::sqrt(sched.alpha[t]) * (1.0 - ab_prev) / (1.0 - ab);
  const double c2 = std::sqrt(ab_prev) * sched.beta[t] / (1.0 - ab);
  return c1 * tau_t + c2 * tau0;
}

Eigen::MatrixXd posterior_mean_from_eps(const Eigen::MatrixXd& tau_t,
                                        const Eigen::MatrixXd& eps, int t,
                                        const NoiseSchedule& sched) {
  sched.check_step(t);
  check_same_shape(tau_t, eps, "posterior_mean_from_eps");
  const double ab = sched.alpha_bar[t];
  const double b = sched.beta[t];
  return (tau_t - (b / std::sqrt(1.0 - ab)) * eps) / std::sqrt(1.0 - b);
}

Eigen::MatrixXd tweedie_x0(const Eigen::MatrixXd& tau_t,
                           const Eigen::MatrixXd& eps_pred, int t,
                           const NoiseSchedule& sched) {
  sched.check_step(t);
  check_same_shape(tau_t, eps_pred, "tweedie_x0");
  const double ab = sched.alpha_bar[t];
  return (tau_t - std::sqrt(1.0 - ab) * eps_pred) / std::sqrt(ab);
}

double classifier_log_likelihood(const Eigen::MatrixXd& tau_t,
                                 const Eigen::MatrixXd& tau_hat_t) {
  check_same_shape(tau_t, tau_hat_t, "classifier_log_likelihood");
  return -(tau_t - tau_hat_t).squaredNorm();
}

Eigen::MatrixXd classifier_gradient(const Eigen::MatrixXd& mu,
                                    const Eigen::MatrixXd& tau_hat_t) {
  check_same_shape(mu, tau_hat_t, "classifier_gradient");
  return -2.0 * (mu - tau_hat_t);
}

Eigen::MatrixXd guided_mean(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& g,
                            double gamma_sigma) {
  check_same_shape(mu, g, "guided_mean");
  return mu + gamma_sigma * g;
}

Eigen::MatrixXd cfg_epsilon(const Eigen::MatrixXd& eps_uncond,
                            const Eigen::MatrixXd& eps_cond, double s_cfg) {
  check_same_shape(eps_uncond, eps_cond, "cfg_epsilon");
  if (s_cfg < 0.0) throw ParameterError("s_cfg must be >= 0");
  return eps_uncond + s_cfg * (eps_cond - eps_uncond);
}

}  // namespace simdiff
