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

#include "simdiff/evalsuite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "simdiff/rng.hpp"

namespace simdiff {

namespace {

std::string fmt(double v, const char* spec = "%.9g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

Eigen::MatrixXd covariance(const std::vector<Eigen::RowVectorXd>& set,
                           Eigen::RowVectorXd& mean) {
  const int n = static_cast<int>(set.size());
  const Eigen::Index d = set.front().size();
  mean = Eigen::RowVectorXd::Zero(d);
  for (const auto& r : set) mean += r;
  mean /= double(n);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& r : set) {
    const Eigen::RowVectorXd c = r - mean;
    cov += c.transpose() * c;
  }
  cov /= double(n - 1);
  return cov;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      0.5 * (m + m.transpose()));
  Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * vals.asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace

Eigen::RowVectorXd motion_features(const Motion& m) {
  if (m.frames.cols() != kFrameDim)
    throw ParameterError("features need the figure joint layout");
  const int F = m.num_frames();
  if (F < 2) throw ParameterError("features need at least 2 frames");

  double mean_z = 0.0, apex = m.frames(0, 2), contact = 0.0;
  for (int f = 0; f < F; ++f) {
    const double rz = m.frames(f, 2);
    mean_z += rz;
    apex = std::max(apex, rz);
    const double low = std::min(m.joint_z(f, kLeftFoot),
                                m.joint_z(f, kRightFoot));
    if (low <= kContactMetricTol) contact += 1.0;
  }
  mean_z /= F;
  contact /= F;

  const double disp = std::hypot(m.frames(F - 1, 0) - m.frames(0, 0),
                                 m.frames(F - 1, 1) - m.frames(0, 1));
  double speed = 0.0;
  for (int f = 0; f + 1 < F; ++f)
    speed += (m.frames.row(f + 1).head<3>() - m.frames.row(f).head<3>()).norm();
  speed = speed / (F - 1) * m.frame_rate;

  Eigen::RowVectorXd feat(kFeatureDim);
  feat << mean_z, apex, disp, speed, contact;
  return feat;
}

double apex_height(const Motion& m) {
  double apex = m.frames(0, 2);
  for (int f = 1; f < m.num_frames(); ++f)
    apex = std::max(apex, m.frames(f, 2));
  return apex;
}

double signed_drift(const Motion& m, int axis) {
  if (axis < 0 || axis > 1) throw ParameterError("drift axis must be 0 or 1");
  const int F = m.num_frames();
  double acc = 0.0;
  for (int f = 0; f < F; ++f) acc += m.frames(f, axis) - m.frames(0, axis);
  return acc / F;
}

FrechetResult feature_frechet(const std::vector<Eigen::RowVectorXd>& a,
                              const std::vector<Eigen::RowVectorXd>& b) {
  if (a.empty() || b.empty()) throw ParameterError("empty feature set");
  const Eigen::Index d = a.front().size();
  if (b.front().size() != d) throw ParameterError("feature width mismatch");
  if (static_cast<Eigen::Index>(a.size()) < d + 1 ||
      static_cast<Eigen::Index>(b.size()) < d + 1)
    throw ParameterError("need at least dim+1 samples per set");

  Eigen::RowVectorXd mu_a, mu_b;
  Eigen::MatrixXd ca = covariance(a, mu_a);
  Eigen::MatrixXd cb = covariance(b, mu_b);

  FrechetResult res;
  auto min_eig = [](const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
        0.5 * (m + m.transpose()));
    return eig.eigenvalues().minCoeff();
  };
  if (min_eig(ca) < 1e-10 || min_eig(cb) < 1e-10) {
    res.regularized = true;
    ca += 1e-6 * Eigen::MatrixXd::Identity(d, d);
    cb += 1e-6 * Eigen::MatrixXd::Identity(d, d);
  }

  const Eigen::MatrixXd sa = psd_sqrt(ca);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      0.5 * ((sa * cb * sa) + (sa * cb * sa).transpose()));
  const double tr_sqrt = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double val = (mu_a - mu_b).squaredNorm() + ca.trace() + cb.trace() -
                     2.0 * tr_sqrt;
  res.value = std::max(0.0, val);
  return res;
}

double diversity(const std::vector<Eigen::RowVectorXd>& a, int n_pairs,
                 std::uint64_t seed) {
  const int n = static_cast<int>(a.size());
  if (n < 2) throw ParameterError("diversity needs at least 2 samples");
  if (n_pairs == 0) {
    double acc = 0.0;
    int cnt = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        acc += (a[i] - a[j]).norm();
        ++cnt;
      }
    return acc / cnt;
  }
  Rng rng(derive_stream(seed, 0xd1));
  double acc = 0.0;
  for (int p = 0; p < n_pairs; ++p) {
    const int i = static_cast<int>(rng.uniform_int(n));
    int j = static_cast<int>(rng.uniform_int(n - 1));
    if (j >= i) ++j;
    acc += (a[i] - a[j]).norm();
  }
  return acc / n_pairs;
}

namespace {
std::vector<double> ranks(const std::vector<double>& v) {
  const int n = static_cast<int>(v.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int i, int j) { return v[i] < v[j]; });
  std::vector<double> r(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * (i + j) + 1.0;
    for (int k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}
}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ParameterError("spearman needs two equal-length vectors, n >= 2");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const int n = static_cast<int>(x.size());
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

ComplianceCurve compliance_sweep(const Checkpoint& ckpt, SweepAxis axis,
                                 const std::vector<double>& values,
                                 int n_samples, int class_label,
                                 const SampleOptions& opt) {
  if (values.empty()) throw ParameterError("sweep needs values");
  if (n_samples < 1) throw ParameterError("sweep needs samples");

  ComplianceCurve curve;
  curve.axis = axis;
  curve.values = values;
  std::vector<double> magnitudes;
  for (size_t vi = 0; vi < values.size(); ++vi) {
    SimParams phi;
    switch (axis) {
      case SweepAxis::GRAVITY: phi.g_z = values[vi]; break;
      case SweepAxis::WIND_X: phi.w_x = values[vi]; break;
      case SweepAxis::WIND_Y: phi.w_y = values[vi]; break;
    }
    SampleOptions o = opt;
    o.seed = derive_stream(opt.seed, vi);
    const auto samples = generate_batch(ckpt, class_label, phi, o, n_samples);
    std::vector<double> responses;
    responses.reserve(samples.size());
    for (const auto& m : samples) {
      if (axis == SweepAxis::GRAVITY)
        responses.push_back(apex_height(m));
      else
        responses.push_back(signed_drift(m, axis == SweepAxis::WIND_X ? 0 : 1));
    }
    double mean = 0.0;
    for (double r : responses) mean += r;
    curve.response.push_back(mean / responses.size());
    curve.per_sample.push_back(std::move(responses));
    magnitudes.push_back(axis == SweepAxis::GRAVITY ? std::abs(values[vi])
                                                    : values[vi]);
  }
  curve.spearman_vs_magnitude = spearman(magnitudes, curve.response);
  return curve;
}

std::vector<TimingRow> timing_bench(const Checkpoint& backbone,
                                    const Checkpoint& adapted,
                                    const SampleOptions& base, int n) {
  std::vector<TimingRow> rows;
  if (n == 0) return rows;
  if (n < 0) throw ParameterError("timing runs must be >= 0");

  struct Variant {
    std::string method;
    std::string sampler;
    const Checkpoint* ckpt;
    SamplerKind kind;
    bool project;
  };
  const std::vector<Variant> variants = {
      {"backbone_ddpm", "ddpm", &backbone, SamplerKind::DDPM, false},
      {"simdiff_ddpm", "ddpm", &adapted, SamplerKind::DDPM, false},
      {"simdiff_ddim", "ddim", &adapted, SamplerKind::DDIM, false},
      {"projected_ddpm", "ddpm", &backbone, SamplerKind::DDPM, true},
      {"projected_ddim", "ddim", &backbone, SamplerKind::DDIM, true},
  };

  const SimParams phi{};  // Earth, no wind
  for (const auto& v : variants) {
    SampleOptions opt = base;
    opt.sampler = v.kind;
    opt.project = v.project;
    opt.jobs = 1;  // batch size 1, single chain at a time
    std::vector<double> secs;
    secs.reserve(n);
    for (int i = 0; i < n; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      generate_motion(*v.ckpt, 0, phi, opt, i);
      const auto t1 = std::chrono::steady_clock::now();
      secs.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::sort(secs.begin(), secs.end());
    const double median = (n % 2 == 1)
                              ? secs[n / 2]
                              : 0.5 * (secs[n / 2 - 1] + secs[n / 2]);
    rows.push_back({v.method, v.sampler, median, n});
  }
  return rows;
}

EvalRow evaluate_set(const std::string& method, const std::string& sampler,
                     double s_cfg, double adapter_scale,
                     const std::vector<Motion>& samples,
                     const std::vector<Eigen::RowVectorXd>& ref_features,
                     std::uint64_t seed) {
  if (samples.empty()) throw ParameterError("empty sample set");
  EvalRow row;
  row.method = method;
  row.sampler = sampler;
  row.s_cfg = s_cfg;
  row.adapter_scale = adapter_scale;
  row.n = static_cast<int>(samples.size());

  auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= v.size();
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(acc / (v.size() - 1)) : 0.0;
  };

  std::vector<double> pen, flo, sli;
  std::vector<Eigen::RowVectorXd> feats;
  for (const auto& m : samples) {
    pen.push_back(penetration(m));
    flo.push_back(floating(m));
    sli.push_back(sliding(m));
    feats.push_back(motion_features(m));
  }
  mean_std(pen, row.penetration_mm, row.penetration_std);
  mean_std(flo, row.floating_mm, row.floating_std);
  mean_std(sli, row.sliding_mm, row.sliding_std);

  if (!ref_features.empty()) {
    const auto fr = feature_frechet(feats, ref_features);
    row.ffd = fr.value;
    row.ffd_regularized = fr.regularized;
  } else {
    row.ffd = std::numeric_limits<double>::quiet_NaN();
  }
  row.diversity =
      feats.size() > 1 ? diversity(feats, feats.size() > 64 ? 1000 : 0, seed)
                       : 0.0;
  return row;
}

void emit_report(const EvalReport& report, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);

  std::ofstream csv(out_dir + "/report.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write report.csv");
  csv << "method,sampler,s_cfg,adapter_scale,penetration_mm,floating_mm,"
         "sliding_mm,ffd,diversity,secs_per_sample,n\n";
  for (const auto& r : report.rows) {
    csv << r.method << ',' << r.sampler << ',' << fmt(r.s_cfg) << ','
        << fmt(r.adapter_scale) << ',' << fmt(r.penetration_mm) << ','
        << fmt(r.floating_mm) << ',' << fmt(r.sliding_mm) << ','
        << (std::isnan(r.ffd) ? "" : fmt(r.ffd)) << ',' << fmt(r.diversity)
        << ','
        << (std::isnan(r.secs_per_sample) ? "" : fmt(r.secs_per_sample)) << ','
        << r.n << '\n';
  }
  csv.close();

  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json row;
    row["method"] = r.method;
    row["sampler"] = r.sampler;
    row["s_cfg"] = r.s_cfg;
    row["adapter_scale"] = r.adapter_scale;
    row["penetration_mm"] = r.penetration_mm;
    row["penetration_std"] = r.penetration_std;
    row["floating_mm"] = r.floating_mm;
    row["floating_std"] = r.floating_std;
    row["sliding_mm"] = r.sliding_mm;
    row["sliding_std"] = r.sliding_std;
    if (!std::isnan(r.ffd)) {
      row["ffd"] = r.ffd;
      row["ffd_regularized"] = r.ffd_regularized;
    }
    row["diversity"] = r.diversity;
    if (!std::isnan(r.class_consistency))
      row["class_consistency"] = r.class_consistency;
    if (!std::isnan(r.secs_per_sample))
      row["secs_per_sample"] = r.secs_per_sample;
    row["n"] = r.n;
    j["rows"].push_back(std::move(row));
  }
  if (!report.meta_json.empty())
    j["meta"] = nlohmann::ordered_json::parse(report.meta_json);

  std::ofstream js(out_dir + "/report.json", std::ios::binary);
  if (!js) throw std::runtime_error("cannot write report.json");
  js << j.dump(2) << '\n';
}

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<ChartSeries>& series) {
  if (series.empty()) throw ParameterError("chart needs at least one series");
  constexpr int W = 640, H = 420, ML = 70, MR = 20, MT = 40, MB = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || s.x.empty())
      throw ParameterError("chart series must be non-empty and aligned");
    for (double v : s.x) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) {
    return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR);
  };
  auto py = [&](double y) {
    return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB);
  };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H
      << "\">\n"
      << "<rect width=\"" << W << "\" height=\"" << H
      << "\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">"
      << title << "</text>\n";
  // axes
  out << "<line x1=\"" << ML << "\" y1=\"" << (H - MB) << "\" x2=\""
      << (W - MR) << "\" y2=\"" << (H - MB)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n"
      << "<line x1=\"" << ML << "\" y1=\"" << MT << "\" x2=\"" << ML
      << "\" y2=\"" << (H - MB) << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    out << "<text x=\"" << fmt(px(xv), "%.1f") << "\" y=\"" << (H - MB + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(xv, "%.3g") << "</text>\n";
    out << "<text x=\"" << (ML - 8) << "\" y=\"" << fmt(py(yv) + 4, "%.1f")
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(yv, "%.3g") << "</text>\n";
  }
  out << "<text x=\"" << (ML + (W - ML - MR) / 2) << "\" y=\"" << (H - 12)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\">"
      << x_label << "</text>\n";
  out << "<text x=\"16\" y=\"" << (MT + (H - MT - MB) / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\" transform=\"rotate(-90 16 "
      << (MT + (H - MT - MB) / 2) << ")\">" << y_label << "</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kColors[si % 4];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i)
      out << fmt(px(s.x[i]), "%.2f") << ',' << fmt(py(s.y[i]), "%.2f") << ' ';
    out << "\"/>\n";
    for (size_t i = 0; i < s.x.size(); ++i)
      out << "<circle cx=\"" << fmt(px(s.x[i]), "%.2f") << "\" cy=\""
          << fmt(py(s.y[i]), "%.2f") << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    out << "<text x=\"" << (W - MR - 6) << "\" y=\"" << (MT + 16 * (si + 1))
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" "
           "fill=\""
        << color << "\">" << s.label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace simdiff
