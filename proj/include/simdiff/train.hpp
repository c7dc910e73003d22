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

#include <functional>
#include <string>
#include <vector>

#include "simdiff/checkpoint.hpp"
#include "simdiff/datagen.hpp"
#include "simdiff/diffusion.hpp"
#include "simdiff/model.hpp"

namespace simdiff {

enum class TrainPhase { BACKBONE, ADAPTER };

struct TrainConfig {
  TrainPhase phase = TrainPhase::BACKBONE;
  int batch_size = 32;
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int iterations = 5000;
  double cond_mask_prob = 0.10;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 = final checkpoint only
  int jobs = 1;
  int T = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  BackboneConfig model{};            // backbone phase only
  double adapter_train_scale = 1.0;  // alpha during adapter training
  std::function<void(int, double)> progress;
  std::function<void(int, const Checkpoint&)> save_hook;

  void validate() const;
};

struct TrainItem {
  const Eigen::MatrixXd* motion;  // raw (unnormalized) frames
  int class_label = 0;
  SimParams phi{};
};

// Per-tensor Adam with bias correction. State is created lazily on the
// first step and keyed by tensor order, which must stay fixed.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::vector<TensorRef>& params,
            const std::vector<TensorRef>& grads);

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct LossAndGrads {
  double loss = 0.0;
  DenoiserParams grads;
};

// One training objective evaluation on a batch: draws t uniform in [1, T]
// and elementwise standard-normal noise, masks the class label to the null
// token with probability cond_mask_prob (the environment embedding is never
// masked), and returns the mean squared noise-prediction error per element
// together with exact gradients.
LossAndGrads diffusion_loss(const std::vector<TrainItem>& batch,
                            const DenoiserParams& params,
                            const Normalizer& norm, const NoiseSchedule& sched,
                            Rng& rng, double cond_mask_prob,
                            double adapter_scale = 1.0, int jobs = 1,
                            bool train_dropout = false);

// Loss-only variant with an injectable predictor that also sees the drawn
// noise; used by tests and diagnostics.
using ProbeFn = std::function<Eigen::MatrixXd(
    const Eigen::MatrixXd& tau_t, int t, std::optional<int> cond,
    const SimParams& phi, const Eigen::MatrixXd& true_eps)>;
double diffusion_loss_probe(const std::vector<TrainItem>& batch,
                            const ProbeFn& fn, const Normalizer& norm,
                            const NoiseSchedule& sched, Rng& rng,
                            double cond_mask_prob);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<std::pair<int, double>> loss_curve;  // (iteration, loss)
};

// Phase 1: trains every backbone parameter on reference records; no
// adapters are attached.
TrainResult train_backbone(const std::vector<MotionRecord>& corpus,
                           const TrainConfig& cfg);

// Phase 2: loads the frozen trunk from the checkpoint, attaches a fresh Sim
// Encoder and adapters, and trains only those on tracked records. Schedule
// and dimensions are inherited from the checkpoint.
TrainResult train_adapters(const Checkpoint& backbone,
                           const std::vector<MotionRecord>& corpus,
                           const TrainConfig& cfg);

void write_loss_csv(const std::vector<std::pair<int, double>>& curve,
                    const std::string& phase, const std::string& path);

}  // namespace simdiff
