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

#include "simdiff/model.hpp"

#include <cmath>

namespace simdiff {

namespace {

constexpr double kLnEps = 1e-5;

Eigen::MatrixXd silu(const Eigen::MatrixXd& x) {
  return x.array() / (1.0 + (-x.array()).exp());
}

// d/dx of x * sigmoid(x)
Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& x) {
  Eigen::ArrayXXd s = 1.0 / (1.0 + (-x.array()).exp());
  return (s * (1.0 + x.array() * (1.0 - s))).matrix();
}

struct LnCache {
  Eigen::MatrixXd xhat;     // n x d
  Eigen::VectorXd inv_std;  // n
};

Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Tensor& gamma,
                           const Tensor& beta, LnCache& c) {
  const Eigen::Index n = x.rows(), d = x.cols();
  c.xhat.resize(n, d);
  c.inv_std.resize(n);
  Eigen::MatrixXd y(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    c.inv_std[i] = inv;
    c.xhat.row(i) = (x.row(i).array() - mean) * inv;
    y.row(i) = c.xhat.row(i).cwiseProduct(gamma.row(0)) + beta.row(0);
  }
  return y;
}

// Accumulates dgamma/dbeta unless null (frozen trunk) and returns dx.
Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& dy,
                                    const LnCache& c, const Tensor& gamma,
                                    Tensor* dgamma, Tensor* dbeta) {
  const Eigen::Index n = dy.rows();
  Eigen::MatrixXd dx(n, dy.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::RowVectorXd dxhat = dy.row(i).cwiseProduct(gamma.row(0));
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(c.xhat.row(i)).mean();
    dx.row(i) =
        c.inv_std[i] * (dxhat.array() - m1 - c.xhat.row(i).array() * m2);
  }
  if (dgamma) {
    for (Eigen::Index i = 0; i < n; ++i) {
      dgamma->row(0) += dy.row(i).cwiseProduct(c.xhat.row(i));
      dbeta->row(0) += dy.row(i);
    }
  }
  return dx;
}

struct AdapterCache {
  Eigen::MatrixXd u;  // x + broadcast(e_sim * w_sim), n x d
  Eigen::MatrixXd p;  // bottleneck pre-activation, n x r
  Eigen::MatrixXd z;  // silu(p)
};

struct LayerCacheImpl {
  Eigen::MatrixXd x_in;
  LnCache ln1;
  Eigen::MatrixXd q, k, v;
  std::vector<Eigen::MatrixXd> attn;  // per-head row softmax, n x n
  Eigen::MatrixXd attn_concat;
  Eigen::MatrixXd attn_mask;  // dropout, empty when unused
  AdapterCache ad1;
  LnCache ln2;
  Eigen::MatrixXd x_mid;  // feed-forward block input
  Eigen::MatrixXd ff_p, ff_h;
  Eigen::MatrixXd ff_mask;
  AdapterCache ad2;
};

Eigen::MatrixXd adapter_apply(const Eigen::MatrixXd& x,
                              const Eigen::RowVectorXd& e_sim, double alpha,
                              const AdapterParams& a, AdapterCache* cache) {
  const Eigen::RowVectorXd shift = e_sim * a.w_sim;
  Eigen::MatrixXd u = x.rowwise() + shift;
  Eigen::MatrixXd p = (u * a.w_down).rowwise() + a.b_down.row(0);
  Eigen::MatrixXd z = silu(p);
  Eigen::MatrixXd out = x + alpha * ((z * a.w_up).rowwise() + a.b_up.row(0)).eval();
  if (cache) {
    cache->u = std::move(u);
    cache->p = std::move(p);
    cache->z = std::move(z);
  }
  return out;
}

// Returns dx; accumulates adapter gradients and the shared e_sim gradient.
Eigen::MatrixXd adapter_backprop(const Eigen::MatrixXd& dy,
                                 const AdapterCache& c, const AdapterParams& a,
                                 const Eigen::RowVectorXd& e_sim, double alpha,
                                 AdapterParams& grad,
                                 Eigen::RowVectorXd& de_sim) {
  grad.w_up += alpha * (c.z.transpose() * dy);
  grad.b_up.row(0) += alpha * dy.colwise().sum();
  Eigen::MatrixXd dz = alpha * (dy * a.w_up.transpose());
  Eigen::MatrixXd dp = dz.cwiseProduct(silu_grad(c.p));
  grad.w_down += c.u.transpose() * dp;
  grad.b_down.row(0) += dp.colwise().sum();
  Eigen::MatrixXd du = dp * a.w_down.transpose();
  const Eigen::RowVectorXd dshift = du.colwise().sum();
  grad.w_sim += e_sim.transpose() * dshift;
  de_sim += dshift * a.w_sim.transpose();
  return dy + du;
}

Eigen::MatrixXd dropout_mask(Rng& rng, Eigen::Index r, Eigen::Index c,
                             double p) {
  Eigen::MatrixXd m(r, c);
  const double keep = 1.0 - p;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j)
      m(i, j) = rng.uniform() < p ? 0.0 : 1.0 / keep;
  return m;
}

Tensor randn(Rng& rng, Eigen::Index r, Eigen::Index c, double scale) {
  return rng.normal_matrix(r, c) * scale;
}

}  // namespace

struct ForwardCache {
  bool valid = false;
  int F = 0, n = 0, t = 0, class_row = 0;
  double alpha = 1.0;
  bool adapters_active = false;
  Eigen::MatrixXd tau;
  Eigen::RowVectorXd t_feats;
  Eigen::RowVectorXd phi_row, enc_u1, enc_h1;
  Eigen::RowVectorXd e_sim;
  Eigen::MatrixXd x0;
  std::vector<LayerCacheImpl> layers;
  Eigen::MatrixXd x_final;
};

ForwardCache* cache_alloc() { return new ForwardCache; }
void cache_free(ForwardCache* c) { delete c; }

void BackboneConfig::validate() const {
  if (layers < 1 || hidden_dim < 2 || heads < 1 || ff_dim < 1 ||
      max_frames < 1 || num_classes < 1 || input_dim < 1)
    throw ParameterError("backbone config values must be positive");
  if (hidden_dim % heads != 0)
    throw ParameterError("hidden_dim must be divisible by heads");
  if (hidden_dim % 2 != 0) throw ParameterError("hidden_dim must be even");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ParameterError("dropout must be in [0, 1)");
}

BackboneParams init_backbone(const BackboneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(splitmix64(seed ^ 0xb0c0ull));
  const int d = cfg.hidden_dim;
  const double s = 1.0 / std::sqrt(double(d));
  BackboneParams p;
  p.cfg = cfg;
  p.w_in = randn(rng, cfg.input_dim, d, 1.0 / std::sqrt(double(cfg.input_dim)));
  p.b_in = Tensor::Zero(1, d);
  p.w_t = randn(rng, d, d, s);
  p.b_t = Tensor::Zero(1, d);
  p.class_emb = randn(rng, cfg.num_classes + 1, d, 0.02);
  p.pos_emb = randn(rng, cfg.max_frames + 1, d, 0.02);
  for (int l = 0; l < cfg.layers; ++l) {
    LayerParams lp;
    lp.ln1_g = Tensor::Ones(1, d);
    lp.ln1_b = Tensor::Zero(1, d);
    lp.wq = randn(rng, d, d, s);
    lp.wk = randn(rng, d, d, s);
    lp.wv = randn(rng, d, d, s);
    lp.wo = randn(rng, d, d, s);
    lp.bq = Tensor::Zero(1, d);
    lp.bk = Tensor::Zero(1, d);
    lp.bv = Tensor::Zero(1, d);
    lp.bo = Tensor::Zero(1, d);
    lp.ln2_g = Tensor::Ones(1, d);
    lp.ln2_b = Tensor::Zero(1, d);
    lp.w1 = randn(rng, d, cfg.ff_dim, s);
    lp.b1 = Tensor::Zero(1, cfg.ff_dim);
    lp.w2 = randn(rng, cfg.ff_dim, d, 1.0 / std::sqrt(double(cfg.ff_dim)));
    lp.b2 = Tensor::Zero(1, d);
    p.layers.push_back(std::move(lp));
  }
  p.w_out = randn(rng, d, cfg.input_dim, s);
  p.b_out = Tensor::Zero(1, cfg.input_dim);
  return p;
}

void attach_adapters(DenoiserParams& params, std::uint64_t seed,
                     SimEncoderMode mode, int n_categories) {
  const BackboneConfig& cfg = params.backbone.cfg;
  const int d = cfg.hidden_dim;
  const int r = cfg.adapter_rank();
  Rng rng(splitmix64(seed ^ 0xada7ull));

  SimEncoderParams enc;
  enc.mode = mode;
  if (mode == SimEncoderMode::CONTINUOUS) {
    // modest input scaling keeps raw gravity/wind magnitudes in SiLU's
    // responsive range
    enc.w1 = randn(rng, 3, 16, 0.06);
    enc.b1 = Tensor::Zero(1, 16);
  } else {
    if (n_categories < 1) throw ParameterError("need at least one category");
    enc.cat_emb = randn(rng, n_categories, 16, 0.25);
  }
  enc.w2 = randn(rng, 16, d, 0.25);
  enc.b2 = Tensor::Zero(1, d);
  params.sim_encoder = std::move(enc);

  params.adapters.clear();
  const double s = 1.0 / std::sqrt(double(d));
  for (int i = 0; i < 2 * cfg.layers; ++i) {
    AdapterParams a;
    a.w_down = randn(rng, d, r, s);
    a.b_down = Tensor::Zero(1, r);
    a.w_up = Tensor::Zero(r, d);
    a.b_up = Tensor::Zero(1, d);
    a.w_sim = randn(rng, d, d, s);
    params.adapters.push_back(std::move(a));
  }
}

std::vector<TensorRef> DenoiserParams::tensors() {
  std::vector<TensorRef> out;
  auto add = [&out](const std::string& name, Tensor& t, bool bb) {
    out.push_back({name, &t, bb});
  };
  add("backbone.w_in", backbone.w_in, true);
  add("backbone.b_in", backbone.b_in, true);
  add("backbone.w_t", backbone.w_t, true);
  add("backbone.b_t", backbone.b_t, true);
  add("backbone.class_emb", backbone.class_emb, true);
  add("backbone.pos_emb", backbone.pos_emb, true);
  for (size_t l = 0; l < backbone.layers.size(); ++l) {
    auto& lp = backbone.layers[l];
    const std::string base = "backbone.layer" + std::to_string(l) + ".";
    add(base + "ln1_g", lp.ln1_g, true);
    add(base + "ln1_b", lp.ln1_b, true);
    add(base + "wq", lp.wq, true);
    add(base + "bq", lp.bq, true);
    add(base + "wk", lp.wk, true);
    add(base + "bk", lp.bk, true);
    add(base + "wv", lp.wv, true);
    add(base + "bv", lp.bv, true);
    add(base + "wo", lp.wo, true);
    add(base + "bo", lp.bo, true);
    add(base + "ln2_g", lp.ln2_g, true);
    add(base + "ln2_b", lp.ln2_b, true);
    add(base + "w1", lp.w1, true);
    add(base + "b1", lp.b1, true);
    add(base + "w2", lp.w2, true);
    add(base + "b2", lp.b2, true);
  }
  add("backbone.w_out", backbone.w_out, true);
  add("backbone.b_out", backbone.b_out, true);
  if (has_adapters()) {
    if (sim_encoder.mode == SimEncoderMode::CONTINUOUS) {
      add("sim_encoder.w1", sim_encoder.w1, false);
      add("sim_encoder.b1", sim_encoder.b1, false);
    } else {
      add("sim_encoder.cat_emb", sim_encoder.cat_emb, false);
    }
    add("sim_encoder.w2", sim_encoder.w2, false);
    add("sim_encoder.b2", sim_encoder.b2, false);
    for (size_t i = 0; i < adapters.size(); ++i) {
      auto& a = adapters[i];
      const std::string base = "adapter" + std::to_string(i) + ".";
      add(base + "w_down", a.w_down, false);
      add(base + "b_down", a.b_down, false);
      add(base + "w_up", a.w_up, false);
      add(base + "b_up", a.b_up, false);
      add(base + "w_sim", a.w_sim, false);
    }
  }
  return out;
}

std::vector<const Tensor*> DenoiserParams::tensor_values() const {
  auto refs = const_cast<DenoiserParams*>(this)->tensors();
  std::vector<const Tensor*> out;
  out.reserve(refs.size());
  for (auto& r : refs) out.push_back(r.tensor);
  return out;
}

std::vector<TensorRef> DenoiserParams::trainable() {
  std::vector<TensorRef> out;
  for (auto& r : tensors())
    if (!(freeze_backbone && r.backbone)) out.push_back(r);
  return out;
}

DenoiserParams make_zero_like(const DenoiserParams& params) {
  DenoiserParams z = params;
  for (auto& ref : z.tensors()) ref.tensor->setZero();
  return z;
}

Eigen::RowVectorXd timestep_features(int t, int dim) {
  Eigen::RowVectorXd s(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -double(i) / half);
    s[2 * i] = std::sin(t * freq);
    s[2 * i + 1] = std::cos(t * freq);
  }
  return s;
}

Eigen::RowVectorXd sim_encode(const SimParams& phi,
                              const SimEncoderParams& enc) {
  if (enc.mode != SimEncoderMode::CONTINUOUS)
    throw ParameterError(
        "sim encoder is categorical; continuous phi not supported");
  Eigen::RowVectorXd p(3);
  p << phi.g_z, phi.w_x, phi.w_y;
  Eigen::RowVectorXd u1 = p * enc.w1 + enc.b1;
  Eigen::RowVectorXd h1 = silu(u1);
  return h1 * enc.w2 + enc.b2;
}

Eigen::RowVectorXd sim_encode_index(int index, const SimEncoderParams& enc) {
  if (enc.mode != SimEncoderMode::CATEGORICAL)
    throw ParameterError("sim encoder is continuous; index not supported");
  if (index < 0 || index >= enc.cat_emb.rows())
    throw ParameterError("category index out of range");
  return enc.cat_emb.row(index) * enc.w2 + enc.b2;
}

Eigen::MatrixXd adapter_forward(const Eigen::MatrixXd& h,
                                const Eigen::RowVectorXd& e_sim, double alpha,
                                const AdapterParams& adapter) {
  if (h.cols() != adapter.w_down.rows())
    throw ParameterError("adapter width mismatch");
  if (alpha < 0.0) throw ParameterError("adapter scale must be >= 0");
  return adapter_apply(h, e_sim, alpha, adapter, nullptr);
}

Eigen::MatrixXd denoise_forward(const Eigen::MatrixXd& tau_t, int t,
                                std::optional<int> cond, const SimParams& phi,
                                double adapter_scale,
                                const DenoiserParams& params,
                                ForwardCache& cache, Rng* dropout_rng) {
  const BackboneConfig& cfg = params.backbone.cfg;
  cfg.validate();
  const int F = static_cast<int>(tau_t.rows());
  const int d = cfg.hidden_dim;
  if (tau_t.cols() != cfg.input_dim)
    throw ParameterError("input width does not match the model");
  if (F < 1 || F > cfg.max_frames)
    throw ParameterError("frame count out of [1, max_frames]");
  if (t < 1) throw ParameterError("diffusion step must be >= 1");
  if (adapter_scale < 0.0) throw ParameterError("adapter scale must be >= 0");
  if (cond && (*cond < 0 || *cond >= cfg.num_classes))
    throw ParameterError("class label out of range");
  if (params.has_adapters() && params.adapters.size() != size_t(2 * cfg.layers))
    throw ParameterError("expected two adapters per layer");

  cache = ForwardCache{};
  cache.valid = true;
  cache.F = F;
  cache.n = F + 1;
  cache.t = t;
  cache.alpha = adapter_scale;
  cache.adapters_active = params.has_adapters();
  cache.tau = tau_t;
  cache.class_row = cond ? *cond : cfg.num_classes;

  const int n = F + 1;
  Eigen::MatrixXd x(n, d);
  cache.t_feats = timestep_features(t, d);
  x.row(0) = cache.t_feats * params.backbone.w_t + params.backbone.b_t +
             params.backbone.class_emb.row(cache.class_row);
  x.bottomRows(F) =
      (tau_t * params.backbone.w_in).rowwise() + params.backbone.b_in.row(0);
  x += params.backbone.pos_emb.topRows(n);
  cache.x0 = x;

  if (cache.adapters_active) {
    if (params.sim_encoder.mode == SimEncoderMode::CONTINUOUS) {
      Eigen::RowVectorXd p(3);
      p << phi.g_z, phi.w_x, phi.w_y;
      cache.phi_row = p;
      cache.enc_u1 = p * params.sim_encoder.w1 + params.sim_encoder.b1;
      cache.enc_h1 = silu(cache.enc_u1);
      cache.e_sim =
          cache.enc_h1 * params.sim_encoder.w2 + params.sim_encoder.b2;
    } else {
      cache.e_sim = sim_encode_index(0, params.sim_encoder);
    }
  }

  const int heads = cfg.heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(double(dh));
  const bool use_dropout = dropout_rng != nullptr && cfg.dropout > 0.0;

  cache.layers.resize(cfg.layers);
  for (int l = 0; l < cfg.layers; ++l) {
    const LayerParams& lp = params.backbone.layers[l];
    LayerCacheImpl& lc = cache.layers[l];
    lc.x_in = x;

    Eigen::MatrixXd y1 = layer_norm(x, lp.ln1_g, lp.ln1_b, lc.ln1);
    lc.q = (y1 * lp.wq).rowwise() + lp.bq.row(0);
    lc.k = (y1 * lp.wk).rowwise() + lp.bk.row(0);
    lc.v = (y1 * lp.wv).rowwise() + lp.bv.row(0);

    lc.attn.resize(heads);
    lc.attn_concat.resize(n, d);
    for (int h = 0; h < heads; ++h) {
      auto qh = lc.q.middleCols(h * dh, dh);
      auto kh = lc.k.middleCols(h * dh, dh);
      auto vh = lc.v.middleCols(h * dh, dh);
      Eigen::MatrixXd scores = scale * (qh * kh.transpose());
      Eigen::MatrixXd& A = lc.attn[h];
      A.resize(n, n);
      for (int i = 0; i < n; ++i) {
        Eigen::RowVectorXd row = scores.row(i);
        const double mx = row.maxCoeff();
        row = (row.array() - mx).exp();
        A.row(i) = row / row.sum();
      }
      lc.attn_concat.middleCols(h * dh, dh) = A * vh;
    }
    Eigen::MatrixXd proj = (lc.attn_concat * lp.wo).rowwise() + lp.bo.row(0);
    if (use_dropout) {
      lc.attn_mask = dropout_mask(*dropout_rng, n, d, cfg.dropout);
      proj = proj.cwiseProduct(lc.attn_mask);
    }
    x += proj;

    if (cache.adapters_active)
      x = adapter_apply(x, cache.e_sim, adapter_scale, params.adapters[2 * l],
                        &lc.ad1);

    lc.x_mid = x;
    Eigen::MatrixXd y2 = layer_norm(x, lp.ln2_g, lp.ln2_b, lc.ln2);
    lc.ff_p = (y2 * lp.w1).rowwise() + lp.b1.row(0);
    lc.ff_h = silu(lc.ff_p);
    Eigen::MatrixXd f = (lc.ff_h * lp.w2).rowwise() + lp.b2.row(0);
    if (use_dropout) {
      lc.ff_mask = dropout_mask(*dropout_rng, n, d, cfg.dropout);
      f = f.cwiseProduct(lc.ff_mask);
    }
    x += f;

    if (cache.adapters_active)
      x = adapter_apply(x, cache.e_sim, adapter_scale,
                        params.adapters[2 * l + 1], &lc.ad2);
  }

  cache.x_final = x;
  Eigen::MatrixXd eps = (x.bottomRows(F) * params.backbone.w_out).rowwise() +
                        params.backbone.b_out.row(0);
  if (!eps.allFinite())
    throw NumericDivergence("denoiser produced non-finite output", t);
  return eps;
}

Eigen::MatrixXd denoise(const Eigen::MatrixXd& tau_t, int t,
                        std::optional<int> cond, const SimParams& phi,
                        double adapter_scale, const DenoiserParams& params) {
  CacheHandle cache;
  return denoise_forward(tau_t, t, cond, phi, adapter_scale, params,
                         *cache.ptr, nullptr);
}

DenoiserParams backward(const Eigen::MatrixXd& loss_grad,
                        const ForwardCache& cache,
                        const DenoiserParams& params) {
  if (!cache.valid)
    throw ParameterError("backward requires a cached forward pass");
  const BackboneConfig& cfg = params.backbone.cfg;
  const int F = cache.F, n = cache.n;
  const int d = cfg.hidden_dim;
  const int heads = cfg.heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(double(dh));
  if (loss_grad.rows() != F || loss_grad.cols() != cfg.input_dim)
    throw ParameterError("loss gradient shape mismatch");

  DenoiserParams grads = make_zero_like(params);
  const bool frozen = params.freeze_backbone;
  BackboneParams& gb = grads.backbone;

  // output projection
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(n, d);
  if (!frozen) {
    gb.w_out += cache.x_final.bottomRows(F).transpose() * loss_grad;
    gb.b_out.row(0) += loss_grad.colwise().sum();
  }
  dx.bottomRows(F) = loss_grad * params.backbone.w_out.transpose();

  Eigen::RowVectorXd de_sim = Eigen::RowVectorXd::Zero(d);

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const LayerParams& lp = params.backbone.layers[l];
    LayerParams& gl = gb.layers[l];
    const LayerCacheImpl& lc = cache.layers[l];

    if (cache.adapters_active)
      dx = adapter_backprop(dx, lc.ad2, params.adapters[2 * l + 1],
                            cache.e_sim, cache.alpha,
                            grads.adapters[2 * l + 1], de_sim);

    // feed-forward block
    Eigen::MatrixXd df = dx;
    if (lc.ff_mask.size() > 0) df = df.cwiseProduct(lc.ff_mask);
    Eigen::MatrixXd dh_ff = df * lp.w2.transpose();
    Eigen::MatrixXd dp_ff = dh_ff.cwiseProduct(silu_grad(lc.ff_p));
    Eigen::MatrixXd dy2 = dp_ff * lp.w1.transpose();
    if (!frozen) {
      gl.b2.row(0) += df.colwise().sum();
      gl.w2 += lc.ff_h.transpose() * df;
      gl.b1.row(0) += dp_ff.colwise().sum();
      // w1 needs the LN output; rebuild it from the cached normalized rows
      Eigen::MatrixXd y2 =
          (lc.ln2.xhat.array().rowwise() * lp.ln2_g.row(0).array()).matrix()
              .rowwise() +
          lp.ln2_b.row(0);
      gl.w1 += y2.transpose() * dp_ff;
    }
    dx += layer_norm_backward(dy2, lc.ln2, lp.ln2_g, frozen ? nullptr : &gl.ln2_g,
                              frozen ? nullptr : &gl.ln2_b);

    if (cache.adapters_active)
      dx = adapter_backprop(dx, lc.ad1, params.adapters[2 * l], cache.e_sim,
                            cache.alpha, grads.adapters[2 * l], de_sim);

    // attention block
    Eigen::MatrixXd dproj = dx;
    if (lc.attn_mask.size() > 0) dproj = dproj.cwiseProduct(lc.attn_mask);
    Eigen::MatrixXd dconcat = dproj * lp.wo.transpose();
    if (!frozen) {
      gl.wo += lc.attn_concat.transpose() * dproj;
      gl.bo.row(0) += dproj.colwise().sum();
    }
    Eigen::MatrixXd dq(n, d), dk(n, d), dv(n, d);
    for (int h = 0; h < heads; ++h) {
      const Eigen::MatrixXd& A = lc.attn[h];
      auto kh = lc.k.middleCols(h * dh, dh);
      auto vh = lc.v.middleCols(h * dh, dh);
      auto qh = lc.q.middleCols(h * dh, dh);
      Eigen::MatrixXd dOh = dconcat.middleCols(h * dh, dh);
      Eigen::MatrixXd dA = dOh * vh.transpose();
      dv.middleCols(h * dh, dh) = A.transpose() * dOh;
      // softmax backward, rowwise
      Eigen::MatrixXd dS(n, n);
      for (int i = 0; i < n; ++i) {
        const double dot = dA.row(i).dot(A.row(i));
        dS.row(i) =
            A.row(i).array() * (dA.row(i).array() - dot);
      }
      dq.middleCols(h * dh, dh) = scale * (dS * kh);
      dk.middleCols(h * dh, dh) = scale * (dS.transpose() * qh);
    }
    Eigen::MatrixXd dy1 = dq * lp.wq.transpose() + dk * lp.wk.transpose() +
                          dv * lp.wv.transpose();
    if (!frozen) {
      Eigen::MatrixXd y1 =
          (lc.ln1.xhat.array().rowwise() * lp.ln1_g.row(0).array()).matrix()
              .rowwise() +
          lp.ln1_b.row(0);
      gl.wq += y1.transpose() * dq;
      gl.wk += y1.transpose() * dk;
      gl.wv += y1.transpose() * dv;
      gl.bq.row(0) += dq.colwise().sum();
      gl.bk.row(0) += dk.colwise().sum();
      gl.bv.row(0) += dv.colwise().sum();
    }
    dx += layer_norm_backward(dy1, lc.ln1, lp.ln1_g, frozen ? nullptr : &gl.ln1_g,
                              frozen ? nullptr : &gl.ln1_b);
  }

  // embeddings
  if (!frozen) {
    gb.pos_emb.topRows(n) += dx;
    gb.class_emb.row(cache.class_row) += dx.row(0);
    gb.w_t += cache.t_feats.transpose() * dx.row(0);
    gb.b_t.row(0) += dx.row(0);
    gb.w_in += cache.tau.transpose() * dx.bottomRows(F);
    gb.b_in.row(0) += dx.bottomRows(F).colwise().sum();
  }

  // environment encoder
  if (cache.adapters_active) {
    SimEncoderParams& ge = grads.sim_encoder;
    const SimEncoderParams& enc = params.sim_encoder;
    if (enc.mode == SimEncoderMode::CONTINUOUS) {
      ge.w2 += cache.enc_h1.transpose() * de_sim;
      ge.b2.row(0) += de_sim;
      Eigen::RowVectorXd dh1 = de_sim * enc.w2.transpose();
      Eigen::RowVectorXd du1 = dh1.cwiseProduct(
          Eigen::RowVectorXd(silu_grad(cache.enc_u1)));
      ge.w1 += cache.phi_row.transpose() * du1;
      ge.b1.row(0) += du1;
    } else {
      ge.w2 += enc.cat_emb.row(0).transpose() * de_sim;
      ge.b2.row(0) += de_sim;
      ge.cat_emb.row(0) += de_sim * enc.w2.transpose();
    }
  }

  if (frozen) {
    for (auto& ref : grads.tensors())
      if (ref.backbone) ref.tensor->setZero();
  }
  return grads;
}

Normalizer Normalizer::identity(int dim) {
  Normalizer n;
  n.mu = Eigen::RowVectorXd::Zero(dim);
  n.sigma = Eigen::RowVectorXd::Ones(dim);
  return n;
}

Normalizer Normalizer::fit(const std::vector<const Eigen::MatrixXd*>& data) {
  if (data.empty()) throw ParameterError("normalizer needs data");
  const Eigen::Index dim = data.front()->cols();
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(dim);
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(dim);
  double count = 0.0;
  for (const auto* m : data) {
    if (m->cols() != dim) throw ParameterError("inconsistent widths");
    sum += m->colwise().sum();
    sq += m->array().square().colwise().sum().matrix();
    count += double(m->rows());
  }
  Normalizer n;
  n.mu = sum / count;
  Eigen::RowVectorXd var = sq / count - n.mu.cwiseProduct(n.mu);
  n.sigma = var.cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-6);
  return n;
}

Eigen::MatrixXd Normalizer::normalize(const Eigen::MatrixXd& x) const {
  return ((x.rowwise() - mu).array().rowwise() / sigma.array()).matrix();
}

Eigen::MatrixXd Normalizer::denormalize(const Eigen::MatrixXd& x) const {
  return (x.array().rowwise() * sigma.array()).matrix().rowwise() + mu;
}

}  // namespace simdiff
