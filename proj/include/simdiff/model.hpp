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
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "simdiff/errors.hpp"
#include "simdiff/motion.hpp"
#include "simdiff/rng.hpp"

namespace simdiff {

// Tokens are rows throughout; a linear layer computes y = x * W + b with
// W shaped (in_dim x out_dim) and biases stored as 1 x out_dim rows.
using Tensor = Eigen::MatrixXd;

struct BackboneConfig {
  int layers = 2;
  int hidden_dim = 64;  // divisible by heads
  int heads = 4;
  int ff_dim = 128;
  int max_frames = 60;
  int num_classes = 3;
  int input_dim = kFrameDim;
  double dropout = 0.0;  // training-time only, off at inference

  int adapter_rank() const { return hidden_dim / 2; }
  void validate() const;
};

struct LayerParams {
  Tensor ln1_g, ln1_b;          // 1 x d
  Tensor wq, wk, wv, wo;        // d x d
  Tensor bq, bk, bv, bo;        // 1 x d
  Tensor ln2_g, ln2_b;          // 1 x d
  Tensor w1, b1;                // d x ff, 1 x ff
  Tensor w2, b2;                // ff x d, 1 x d
};

// Frozen-able denoiser trunk: per-frame embedding, one condition token
// (timestep + class or learned null token), pre-norm attention/feed-forward
// blocks with learned per-position embeddings, and a projection back to
// frame features.
struct BackboneParams {
  BackboneConfig cfg;
  Tensor w_in, b_in;    // input_dim x d
  Tensor w_t, b_t;      // d x d affine on sinusoidal timestep features
  Tensor class_emb;     // (C+1) x d, last row is the null token
  Tensor pos_emb;       // (max_frames+1) x d
  std::vector<LayerParams> layers;
  Tensor w_out, b_out;  // d x input_dim
};

enum class SimEncoderMode { CONTINUOUS, CATEGORICAL };

// Embeds environment parameters into the hidden dimension. Continuous mode
// maps (g_z, w_x, w_y) through 3 -> 16 -> d with SiLU between the layers;
// categorical mode looks up a 16-dim index embedding and projects it to d.
struct SimEncoderParams {
  SimEncoderMode mode = SimEncoderMode::CONTINUOUS;
  Tensor w1, b1;    // 3 x 16 (continuous only)
  Tensor w2, b2;    // 16 x d
  Tensor cat_emb;   // n_categories x 16 (categorical only)
};

// Bottleneck residual branch, Eq.-10 style:
//   h' = h + alpha * silu((h + e_sim * w_sim) * w_down + b_down) * w_up + b_up
// w_up and b_up start at zero so a fresh adapter is an exact identity.
struct AdapterParams {
  Tensor w_down, b_down;  // d x r, 1 x r
  Tensor w_up, b_up;      // r x d, 1 x d (zero-initialized)
  Tensor w_sim;           // d x d
};

struct TensorRef {
  std::string name;
  Tensor* tensor;
  bool backbone;  // true for trunk weights covered by the freeze flag
};

struct DenoiserParams {
  BackboneParams backbone;
  SimEncoderParams sim_encoder;
  std::vector<AdapterParams> adapters;  // 2 per layer when attached
  bool freeze_backbone = false;

  bool has_adapters() const { return !adapters.empty(); }
  std::vector<TensorRef> tensors();
  std::vector<const Tensor*> tensor_values() const;
  std::vector<TensorRef> trainable();  // excludes frozen backbone tensors
};

BackboneParams init_backbone(const BackboneConfig& cfg, std::uint64_t seed);

// Attaches a fresh Sim Encoder and 2*layers zero-initialized adapters.
void attach_adapters(DenoiserParams& params, std::uint64_t seed,
                     SimEncoderMode mode = SimEncoderMode::CONTINUOUS,
                     int n_categories = 1);

DenoiserParams make_zero_like(const DenoiserParams& params);

// Sinusoidal timestep features of width dim.
Eigen::RowVectorXd timestep_features(int t, int dim);

// Environment embedding (1 x d). Throws if the encoder is categorical.
Eigen::RowVectorXd sim_encode(const SimParams& phi,
                              const SimEncoderParams& enc);
// Categorical lookup path.
Eigen::RowVectorXd sim_encode_index(int index, const SimEncoderParams& enc);

// Tokenwise adapter application on an (n x d) hidden block.
Eigen::MatrixXd adapter_forward(const Eigen::MatrixXd& h,
                                const Eigen::RowVectorXd& e_sim, double alpha,
                                const AdapterParams& adapter);

// Cached activations of one denoiser forward pass; required by backward.
struct ForwardCache;
ForwardCache* cache_alloc();
void cache_free(ForwardCache*);

struct CacheHandle {
  CacheHandle() : ptr(cache_alloc()) {}
  ~CacheHandle() { cache_free(ptr); }
  CacheHandle(const CacheHandle&) = delete;
  CacheHandle& operator=(const CacheHandle&) = delete;
  ForwardCache* ptr;
};

// Noise prediction for a noisy sample at step t (>= 1). `cond` selects a
// class embedding; nullopt uses the learned null token. Adapters run when
// attached; a zero adapter scale or freshly attached adapters reproduce the
// backbone-only output bit for bit.
Eigen::MatrixXd denoise(const Eigen::MatrixXd& tau_t, int t,
                        std::optional<int> cond, const SimParams& phi,
                        double adapter_scale, const DenoiserParams& params);

// Forward pass that records activations. `dropout_rng` enables the config's
// dropout (training only).
Eigen::MatrixXd denoise_forward(const Eigen::MatrixXd& tau_t, int t,
                                std::optional<int> cond, const SimParams& phi,
                                double adapter_scale,
                                const DenoiserParams& params,
                                ForwardCache& cache,
                                Rng* dropout_rng = nullptr);

// Exact reverse-mode gradients for every parameter tensor given
// dL/d(eps_pred). Backbone gradients are identically zero when the params
// are frozen. Throws if the cache does not hold a forward pass.
DenoiserParams backward(const Eigen::MatrixXd& loss_grad,
                        const ForwardCache& cache,
                        const DenoiserParams& params);

// Per-coordinate affine whitening fitted on the training corpus; stored in
// checkpoints so sampling happens in the space the trunk was trained on.
struct Normalizer {
  Eigen::RowVectorXd mu;
  Eigen::RowVectorXd sigma;

  static Normalizer identity(int dim);
  static Normalizer fit(const std::vector<const Eigen::MatrixXd*>& data);
  Eigen::MatrixXd normalize(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd denormalize(const Eigen::MatrixXd& x) const;
};

}  // namespace simdiff
