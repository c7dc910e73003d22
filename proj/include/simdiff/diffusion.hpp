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

#include "simdiff/errors.hpp"

namespace simdiff {

// Variance schedule of the forward noising chain. Tables are stored with a
// leading convention slot so that step t in [1, T] indexes directly:
// beta[0] is unused, alpha_bar[0] == 1 (a "step 0" sample is clean data).
struct NoiseSchedule {
  int T = 0;
  Eigen::VectorXd beta;       // size T+1, beta[t] in (0,1) for t >= 1
  Eigen::VectorXd alpha;      // 1 - beta[t]
  Eigen::VectorXd alpha_bar;  // running product of alpha[1..t]

  void check_step(int t) const {
    if (t < 1 || t > T) throw ParameterError("diffusion step out of range");
  }
};

// Linear beta schedule from beta_start to beta_end over T steps.
NoiseSchedule make_schedule(int T, double beta_start, double beta_end);

// Forward noising: sqrt(abar_t) * tau0 + sqrt(1 - abar_t) * eps.
Eigen::MatrixXd q_sample(const Eigen::MatrixXd& tau0, int t,
                         const Eigen::MatrixXd& eps,
                         const NoiseSchedule& sched);

// Posterior mean of the reverse transition expressed with a clean sample:
//   c1(t) * tau_t + c2(t) * tau0
// with c1 = sqrt(alpha_t)(1-abar_{t-1})/(1-abar_t) and
//      c2 = sqrt(abar_{t-1}) beta_t / (1-abar_t).
Eigen::MatrixXd posterior_mean(const Eigen::MatrixXd& tau_t,
                               const Eigen::MatrixXd& tau0, int t,
                               const NoiseSchedule& sched);

// The same mean expressed with the predicted noise:
//   (tau_t - beta_t / sqrt(1-abar_t) * eps) / sqrt(1 - beta_t).
Eigen::MatrixXd posterior_mean_from_eps(const Eigen::MatrixXd& tau_t,
                                        const Eigen::MatrixXd& eps, int t,
                                        const NoiseSchedule& sched);

// One-shot clean-sample estimate from a noisy sample and predicted noise:
//   (tau_t - sqrt(1-abar_t) * eps) / sqrt(abar_t).
Eigen::MatrixXd tweedie_x0(const Eigen::MatrixXd& tau_t,
                           const Eigen::MatrixXd& eps_pred, int t,
                           const NoiseSchedule& sched);

// Log-likelihood that a noisy motion matches a plausible reference at the
// same step: -||tau_t - tau_hat_t||^2.
double classifier_log_likelihood(const Eigen::MatrixXd& tau_t,
                                 const Eigen::MatrixXd& tau_hat_t);

// Gradient of classifier_log_likelihood at mu: -2 (mu - tau_hat_t).
Eigen::MatrixXd classifier_gradient(const Eigen::MatrixXd& mu,
                                    const Eigen::MatrixXd& tau_hat_t);

// Generic guided-mean helper: mu + gamma_sigma * g, where gamma_sigma stands
// for the product of the guidance weight and the step covariance. The main
// samplers never use it; full mean replacement is the limit gamma_sigma ->
// 1/2 applied to classifier_gradient, which collapses to posterior_mean on
// the projected clean sample.
Eigen::MatrixXd guided_mean(const Eigen::MatrixXd& mu,
                            const Eigen::MatrixXd& g, double gamma_sigma);

// Classifier-free guidance combination:
//   eps_uncond + s_cfg * (eps_cond - eps_uncond).
Eigen::MatrixXd cfg_epsilon(const Eigen::MatrixXd& eps_uncond,
                            const Eigen::MatrixXd& eps_cond, double s_cfg);

}  // namespace simdiff
