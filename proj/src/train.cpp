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

#include "simdiff/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

namespace simdiff {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (iterations < 1) throw ParameterError("iterations must be >= 1");
  if (!(lr >= 0.0)) throw ParameterError("lr must be >= 0");
  if (cond_mask_prob < 0.0 || cond_mask_prob >= 1.0)
    throw ParameterError("cond_mask_prob must be in [0, 1)");
  if (T < 2) throw ParameterError("T must be >= 2");
  if (jobs < 1) throw ParameterError("jobs must be >= 1");
}

void Adam::step(const std::vector<TensorRef>& params,
                const std::vector<TensorRef>& grads) {
  if (params.size() != grads.size())
    throw ParameterError("adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.push_back(Tensor::Zero(p.tensor->rows(), p.tensor->cols()));
      v_.push_back(Tensor::Zero(p.tensor->rows(), p.tensor->cols()));
    }
  }
  if (m_.size() != params.size())
    throw ParameterError("adam: tensor set changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, t_);
  const double c2 = 1.0 - std::pow(b2_, t_);
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != grads[i].name)
      throw ParameterError("adam: tensor order mismatch at " + params[i].name);
    const Tensor& g = *grads[i].tensor;
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * g.cwiseProduct(g);
    params[i].tensor->array() -=
        lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

namespace {

struct Draw {
  int t = 1;
  bool mask = false;
  Eigen::MatrixXd eps;
  std::uint64_t dropout_seed = 0;
};

void check_batch(const std::vector<TrainItem>& batch) {
  if (batch.empty()) throw ParameterError("empty batch");
  const Eigen::Index F = batch.front().motion->rows();
  const Eigen::Index D = batch.front().motion->cols();
  for (const auto& item : batch) {
    if (!item.motion) throw ParameterError("null motion in batch");
    if (item.motion->rows() != F || item.motion->cols() != D)
      throw ParameterError("batch motions must share shape");
    if (!std::isfinite(item.phi.g_z) || !std::isfinite(item.phi.w_x) ||
        !std::isfinite(item.phi.w_y))
      throw ParameterError("non-finite phi in batch");
  }
}

std::vector<Draw> make_draws(const std::vector<TrainItem>& batch,
                             const NoiseSchedule& sched, Rng& rng,
                             double cond_mask_prob) {
  std::vector<Draw> draws(batch.size());
  const Eigen::Index F = batch.front().motion->rows();
  const Eigen::Index D = batch.front().motion->cols();
  for (size_t i = 0; i < batch.size(); ++i) {
    draws[i].t = 1 + static_cast<int>(rng.uniform_int(sched.T));
    draws[i].mask = rng.uniform() < cond_mask_prob;
    draws[i].eps = rng.normal_matrix(F, D);
    draws[i].dropout_seed = rng.engine()();
  }
  return draws;
}

void accumulate(DenoiserParams& dst, const DenoiserParams& src) {
  auto d = dst.tensors();
  auto s = const_cast<DenoiserParams&>(src).tensors();
  for (size_t i = 0; i < d.size(); ++i) *d[i].tensor += *s[i].tensor;
}

}  // namespace

LossAndGrads diffusion_loss(const std::vector<TrainItem>& batch,
                            const DenoiserParams& params,
                            const Normalizer& norm, const NoiseSchedule& sched,
                            Rng& rng, double cond_mask_prob,
                            double adapter_scale, int jobs,
                            bool train_dropout) {
  check_batch(batch);
  const auto draws = make_draws(batch, sched, rng, cond_mask_prob);
  const int B = static_cast<int>(batch.size());
  const double denom =
      double(B) * double(batch.front().motion->size());

  const int workers = std::max(1, std::min(jobs, B));
  std::vector<double> losses(workers, 0.0);
  std::vector<DenoiserParams> grads;
  grads.reserve(workers);
  for (int w = 0; w < workers; ++w) grads.push_back(make_zero_like(params));

  auto run_chunk = [&](int w, int lo, int hi) {
    CacheHandle cache;
    for (int i = lo; i < hi; ++i) {
      const TrainItem& item = batch[i];
      const Draw& dr = draws[i];
      const Eigen::MatrixXd x0 = norm.normalize(*item.motion);
      const Eigen::MatrixXd xt = q_sample(x0, dr.t, dr.eps, sched);
      const std::optional<int> cond =
          dr.mask ? std::nullopt : std::optional<int>(item.class_label);
      Rng drop_rng(dr.dropout_seed);
      Eigen::MatrixXd pred = denoise_forward(
          xt, dr.t, cond, item.phi, adapter_scale, params, *cache.ptr,
          train_dropout ? &drop_rng : nullptr);
      Eigen::MatrixXd diff = pred - dr.eps;
      losses[w] += diff.squaredNorm() / denom;
      Eigen::MatrixXd dloss = (2.0 / denom) * diff;
      accumulate(grads[w], backward(dloss, *cache.ptr, params));
    }
  };

  if (workers == 1) {
    run_chunk(0, 0, B);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      const int lo = B * w / workers;
      const int hi = B * (w + 1) / workers;
      pool.emplace_back(run_chunk, w, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  LossAndGrads out;
  out.grads = std::move(grads[0]);
  out.loss = losses[0];
  for (int w = 1; w < workers; ++w) {
    out.loss += losses[w];
    accumulate(out.grads, grads[w]);
  }
  return out;
}

double diffusion_loss_probe(const std::vector<TrainItem>& batch,
                            const ProbeFn& fn, const Normalizer& norm,
                            const NoiseSchedule& sched, Rng& rng,
                            double cond_mask_prob) {
  check_batch(batch);
  const auto draws = make_draws(batch, sched, rng, cond_mask_prob);
  const double denom =
      double(batch.size()) * double(batch.front().motion->size());
  double loss = 0.0;
  for (size_t i = 0; i < batch.size(); ++i) {
    const Draw& dr = draws[i];
    const Eigen::MatrixXd x0 = norm.normalize(*batch[i].motion);
    const Eigen::MatrixXd xt = q_sample(x0, dr.t, dr.eps, sched);
    const std::optional<int> cond =
        dr.mask ? std::nullopt : std::optional<int>(batch[i].class_label);
    loss += (fn(xt, dr.t, cond, batch[i].phi, dr.eps) - dr.eps).squaredNorm() /
            denom;
  }
  return loss;
}

namespace {

TrainResult train_loop(DenoiserParams params, const Normalizer& norm,
                       const std::vector<TrainItem>& items,
                       const TrainConfig& cfg, int T, double beta_start,
                       double beta_end, const std::string& phase) {
  const NoiseSchedule sched = make_schedule(T, beta_start, beta_end);
  Rng rng(derive_stream(cfg.seed, 0x7217));
  Adam adam(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  const int N = static_cast<int>(items.size());
  const bool use_dropout = params.backbone.cfg.dropout > 0.0;

  TrainResult result;
  result.loss_curve.reserve(cfg.iterations);
  for (int it = 1; it <= cfg.iterations; ++it) {
    std::vector<TrainItem> batch(cfg.batch_size);
    for (int b = 0; b < cfg.batch_size; ++b)
      batch[b] = items[static_cast<size_t>(rng.uniform_int(N))];
    LossAndGrads lg =
        diffusion_loss(batch, params, norm, sched, rng, cfg.cond_mask_prob,
                       cfg.phase == TrainPhase::ADAPTER ? cfg.adapter_train_scale
                                                        : 1.0,
                       cfg.jobs, use_dropout);
    if (!std::isfinite(lg.loss))
      throw NumericDivergence("training loss became non-finite", it);
    adam.step(params.trainable(), lg.grads.trainable());
    result.loss_curve.emplace_back(it, lg.loss);
    if (cfg.progress) cfg.progress(it, lg.loss);
    if (cfg.save_hook && cfg.checkpoint_every > 0 &&
        it % cfg.checkpoint_every == 0) {
      Checkpoint snap;
      snap.params = params;
      snap.norm = norm;
      snap.T = T;
      snap.beta_start = beta_start;
      snap.beta_end = beta_end;
      snap.phase = phase;
      cfg.save_hook(it, snap);
    }
  }

  result.checkpoint.params = std::move(params);
  result.checkpoint.norm = norm;
  result.checkpoint.T = T;
  result.checkpoint.beta_start = beta_start;
  result.checkpoint.beta_end = beta_end;
  result.checkpoint.phase = phase;
  return result;
}

std::vector<TrainItem> collect_items(const std::vector<MotionRecord>& corpus,
                                     RecordSource wanted) {
  std::vector<TrainItem> items;
  for (const auto& rec : corpus)
    if (rec.source == wanted)
      items.push_back({&rec.motion.frames, rec.class_label, rec.phi});
  return items;
}

}  // namespace

TrainResult train_backbone(const std::vector<MotionRecord>& corpus,
                           const TrainConfig& cfg) {
  cfg.validate();
  auto items = collect_items(corpus, RecordSource::REFERENCE);
  if (items.empty()) throw ParameterError("no reference records in corpus");

  std::vector<const Eigen::MatrixXd*> mats;
  mats.reserve(items.size());
  for (const auto& it : items) mats.push_back(it.motion);
  const Normalizer norm = Normalizer::fit(mats);

  BackboneConfig model = cfg.model;
  model.input_dim = static_cast<int>(items.front().motion->cols());
  model.max_frames =
      std::max(model.max_frames, static_cast<int>(items.front().motion->rows()));

  DenoiserParams params;
  params.backbone = init_backbone(model, cfg.seed);
  return train_loop(std::move(params), norm, items, cfg, cfg.T, cfg.beta_start,
                    cfg.beta_end, "backbone");
}

TrainResult train_adapters(const Checkpoint& backbone,
                           const std::vector<MotionRecord>& corpus,
                           const TrainConfig& cfg) {
  cfg.validate();
  auto items = collect_items(corpus, RecordSource::TRACKED);
  if (items.empty()) throw ParameterError("no tracked records in corpus");
  for (const auto& it : items)
    if (it.motion->cols() != backbone.params.backbone.cfg.input_dim)
      throw ParameterError("corpus width does not match the checkpoint");

  DenoiserParams params = backbone.params;
  attach_adapters(params, cfg.seed, SimEncoderMode::CONTINUOUS);
  params.freeze_backbone = true;

  TrainConfig adapter_cfg = cfg;
  adapter_cfg.phase = TrainPhase::ADAPTER;
  TrainResult result =
      train_loop(std::move(params), backbone.norm, items, adapter_cfg,
                 backbone.T, backbone.beta_start, backbone.beta_end, "adapter");
  return result;
}

void write_loss_csv(const std::vector<std::pair<int, double>>& curve,
                    const std::string& phase, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "iteration,loss,phase\n";
  char buf[64];
  for (const auto& [it, loss] : curve) {
    std::snprintf(buf, sizeof(buf), "%.17g", loss);
    out << it << ',' << buf << ',' << phase << '\n';
  }
}

}  // namespace simdiff
