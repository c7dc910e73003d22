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

#include "simdiff/datagen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "simdiff/errors.hpp"
#include "simdiff/rng.hpp"

namespace simdiff {

namespace {

constexpr double kEarthG = 9.81;

struct Tracks {
  std::vector<double> root_x, root_y, root_z;
  std::vector<double> foot_x[2], foot_z[2];

  explicit Tracks(int F) {
    root_x.assign(F, 0.0);
    root_y.assign(F, 0.0);
    root_z.assign(F, kStandHeight);
    for (int s = 0; s < 2; ++s) {
      foot_x[s].assign(F, 0.0);
      foot_z[s].assign(F, 0.0);
    }
  }
};

// Single ballistic arc with a crouch, push-off, and landing recovery.
void build_jump(Tracks& tr, int F, double fps, Rng& rng) {
  const double t0 = rng.uniform(0.25, 0.40);
  const double depth = rng.uniform(0.10, 0.14);
  const double v0 = rng.uniform(2.2, 2.6);
  const double crouch_dur = 0.25;
  const double accel = v0 * v0 / (2.0 * depth);
  const double t1 = t0 + crouch_dur;
  const double t2 = t1 + v0 / accel;        // takeoff
  const double t_fl = 2.0 * v0 / kEarthG;   // Earth-shaped arc
  const double t3 = t2 + t_fl;              // landing

  for (int f = 0; f < F; ++f) {
    const double t = f / fps;
    double z = kStandHeight;
    double foot = 0.0;
    if (t < t0) {
      z = kStandHeight;
    } else if (t < t1) {
      z = kStandHeight - depth * 0.5 * (1.0 - std::cos(M_PI * (t - t0) / crouch_dur));
    } else if (t < t2) {
      z = kStandHeight - depth + 0.5 * accel * (t - t1) * (t - t1);
    } else if (t < t3) {
      const double tau = t - t2;
      z = kStandHeight + v0 * tau - 0.5 * kEarthG * tau * tau;
      foot = std::max(0.0, z - kStandHeight) + 0.15 * std::sin(M_PI * tau / t_fl);
    } else if (t < t3 + 0.25) {
      z = kStandHeight - 0.05 * std::sin(M_PI * (t - t3) / 0.25);
    }
    tr.root_z[f] = z;
    tr.foot_z[0][f] = tr.foot_z[1][f] = foot;
  }
}

// Sinusoidal gait: the root translates at constant speed while the feet
// alternate planted and swing phases.
void build_walk(Tracks& tr, int F, double fps, Rng& rng) {
  const double speed = rng.uniform(0.6, 1.0);
  const double f_step = rng.uniform(1.4, 1.8);
  const double cycle = 2.0 / f_step;
  const double stride = speed * cycle;
  const double swing_frac = 0.35;
  const double step_h = rng.uniform(0.04, 0.07);

  for (int f = 0; f < F; ++f) {
    const double t = f / fps;
    tr.root_x[f] = speed * t;
    tr.root_y[f] = 0.012 * std::sin(2.0 * M_PI * t / cycle);
    tr.root_z[f] = kStandHeight - 0.012 + 0.012 * std::cos(4.0 * M_PI * t / cycle);
    for (int s = 0; s < 2; ++s) {
      const double phase_off = (s == 0) ? 0.0 : 0.5;
      const double p_raw = t / cycle + phase_off;
      const double k = std::floor(p_raw);
      const double p = p_raw - k;
      const double plant = stride * (k + phase_off) - 0.5 * stride;
      if (p < 1.0 - swing_frac) {
        tr.foot_x[s][f] = plant;
        tr.foot_z[s][f] = 0.0;
      } else {
        const double q = (p - (1.0 - swing_frac)) / swing_frac;
        const double smooth = 0.5 * (1.0 - std::cos(M_PI * q));
        tr.foot_x[s][f] = plant + stride * smooth;
        tr.foot_z[s][f] = step_h * std::sin(M_PI * q);
      }
    }
  }
}

// Repeated small in-place arcs separated by short pauses.
void build_hop(Tracks& tr, int F, double fps, Rng& rng) {
  const double v0 = rng.uniform(1.0, 1.4);
  const double depth = 0.05;
  const double crouch_dur = 0.12;
  const double accel = v0 * v0 / (2.0 * depth);
  const double push_dur = v0 / accel;
  const double t_fl = 2.0 * v0 / kEarthG;
  const double pause = rng.uniform(0.15, 0.22);
  const double duration = F / fps;

  struct Arc { double t1, t2, t3; };  // push start, takeoff, landing
  std::vector<Arc> arcs;
  double t = rng.uniform(0.25, 0.35);
  while (t + crouch_dur + push_dur + t_fl + 0.2 < duration) {
    arcs.push_back({t + crouch_dur, t + crouch_dur + push_dur,
                    t + crouch_dur + push_dur + t_fl});
    t += crouch_dur + push_dur + t_fl + pause;
  }

  for (int f = 0; f < F; ++f) {
    const double tf = f / fps;
    double z = kStandHeight;
    double foot = 0.0;
    for (const Arc& a : arcs) {
      const double tc = a.t1 - crouch_dur;
      if (tf >= tc && tf < a.t1) {
        z = kStandHeight - depth * 0.5 * (1.0 - std::cos(M_PI * (tf - tc) / crouch_dur));
      } else if (tf >= a.t1 && tf < a.t2) {
        z = kStandHeight - depth + 0.5 * accel * (tf - a.t1) * (tf - a.t1);
      } else if (tf >= a.t2 && tf < a.t3) {
        const double tau = tf - a.t2;
        z = kStandHeight + v0 * tau - 0.5 * kEarthG * tau * tau;
        foot = std::max(0.0, z - kStandHeight) + 0.06 * std::sin(M_PI * tau / t_fl);
      }
    }
    tr.root_z[f] = z;
    tr.foot_z[0][f] = tr.foot_z[1][f] = foot;
  }
}

// Horizontal skate injected into each planted run of each foot, then a
// uniform vertical offset for the whole clip.
void apply_artifacts(Tracks& tr, std::vector<double> foot_y[2], int F,
                     const ArtifactConfig& art, Rng& rng) {
  for (int s = 0; s < 2; ++s) {
    int f = 0;
    while (f < F) {
      if (tr.foot_z[s][f] > 1e-12) {
        ++f;
        continue;
      }
      int end = f;
      while (end < F && tr.foot_z[s][end] <= 1e-12) ++end;
      const double mag = rng.uniform(0.0, art.skate_max);
      const double theta = rng.uniform(0.0, 2.0 * M_PI);
      const int len = end - f;
      if (len > 1) {
        for (int i = f; i < end; ++i) {
          const double prog = double(i - f) / double(len - 1);
          tr.foot_x[s][i] += mag * prog * std::cos(theta);
          foot_y[s][i] += mag * prog * std::sin(theta);
        }
      }
      f = end;
    }
  }
  const double dz = rng.uniform(art.z_offset_lo, art.z_offset_hi);
  for (int f = 0; f < F; ++f) {
    tr.root_z[f] += dz;
    tr.foot_z[0][f] += dz;
    tr.foot_z[1][f] += dz;
  }
}

}  // namespace

void RandomizationSpec::validate() const {
  if (!(gravity_range[0] <= gravity_range[1]) || !(gravity_range[1] < 0.0))
    throw ParameterError("gravity range must be ordered and negative");
  if (!(wind_range[0] <= wind_range[1]))
    throw ParameterError("wind range must be ordered");
}

Motion gen_reference(int class_label, std::uint64_t seed,
                     const ArtifactConfig& artifacts, int frames,
                     int frame_rate) {
  if (class_label < 0 || class_label >= kNumClasses)
    throw ParameterError("unknown motion class");
  if (frames < 2) throw ParameterError("need at least 2 frames");
  if (artifacts.z_offset_lo > artifacts.z_offset_hi || artifacts.skate_max < 0)
    throw ParameterError("bad artifact ranges");

  Rng rng(splitmix64(seed ^ (0x5bd1e995u + static_cast<std::uint64_t>(class_label))));
  const double fps = frame_rate;
  Tracks tr(frames);
  switch (class_label) {
    case 0: build_jump(tr, frames, fps, rng); break;
    case 1: build_walk(tr, frames, fps, rng); break;
    default: build_hop(tr, frames, fps, rng); break;
  }

  std::vector<double> foot_y[2] = {
      std::vector<double>(frames, kFootLateral),
      std::vector<double>(frames, -kFootLateral)};
  apply_artifacts(tr, foot_y, frames, artifacts, rng);

  Motion m;
  m.frame_rate = frame_rate;
  m.frames.resize(frames, kFrameDim);
  for (int f = 0; f < frames; ++f) {
    m.frames(f, 0) = tr.root_x[f];
    m.frames(f, 1) = tr.root_y[f];
    m.frames(f, 2) = tr.root_z[f];
    for (int s = 0; s < 2; ++s) {
      const int j = kLeftFoot + s;
      m.frames(f, j * 3 + 0) = tr.foot_x[s][f];
      m.frames(f, j * 3 + 1) = foot_y[s][f];
      m.frames(f, j * 3 + 2) = tr.foot_z[s][f];
    }
    m.frames(f, kHead * 3 + 0) = tr.root_x[f];
    m.frames(f, kHead * 3 + 1) = tr.root_y[f];
    m.frames(f, kHead * 3 + 2) = tr.root_z[f] + kHeadOffset;
  }
  return m;
}

SimParams sample_phi(const RandomizationSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (spec.mode == RandomizationMode::FIXED_EARTH) return {-9.8, 0.0, 0.0};

  Rng rng(seed);
  SimParams phi;  // defaults: Earth gravity, no wind
  const int axis = static_cast<int>(rng.uniform_int(3));
  switch (axis) {
    case 0:
      phi.g_z = rng.uniform(spec.gravity_range[0], spec.gravity_range[1]);
      break;
    case 1:
      phi.w_x = rng.uniform(spec.wind_range[0], spec.wind_range[1]);
      break;
    default:
      phi.w_y = rng.uniform(spec.wind_range[0], spec.wind_range[1]);
      break;
  }
  return phi;
}

double d_l2(const Motion& ref, const Motion& trk) {
  if (ref.frames.rows() != trk.frames.rows() ||
      ref.frames.cols() != trk.frames.cols())
    throw ParameterError("d_l2 shape mismatch");
  const int F = ref.num_frames();
  double total = 0.0;
  for (int f = 0; f < F; ++f)
    total += (ref.frames.row(f) - trk.frames.row(f)).norm();
  return total / F;
}

namespace {

struct ClipResult {
  MotionRecord ref;
  std::optional<MotionRecord> tracked;
  bool tracking_failed = false;
};

ClipResult make_clip(int index, const RandomizationSpec& spec, double threshold,
                     std::uint64_t seed, const CorpusOptions& opt) {
  ClipResult r;
  const int cls = index % kNumClasses;
  const std::uint64_t ref_seed = derive_stream(seed, 2 * index);
  const std::uint64_t phi_seed = derive_stream(seed, 2 * index + 1);

  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip%05d", index);

  r.ref.id = std::string(buf) + "_ref";
  r.ref.class_label = cls;
  r.ref.phi = SimParams{};
  r.ref.motion = gen_reference(cls, ref_seed, opt.artifacts, opt.frames,
                               opt.frame_rate);
  r.ref.source = RecordSource::REFERENCE;

  const SimParams phi = sample_phi(spec, phi_seed);
  try {
    Motion trk = project(r.ref.motion, phi, opt.world);
    const double d = d_l2(r.ref.motion, trk);
    if (d <= threshold) {
      MotionRecord t;
      t.id = std::string(buf) + "_trk";
      t.class_label = cls;
      t.phi = phi;
      t.motion = std::move(trk);
      t.source = RecordSource::TRACKED;
      t.d_l2 = d;
      r.tracked = std::move(t);
    }
  } catch (const TrackingFailure&) {
    r.tracking_failed = true;
  }
  return r;
}

int histogram_bin(double v, double lo, double hi) {
  const int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * 8.0));
  return std::clamp(b, 0, 7);
}

}  // namespace

std::pair<std::vector<MotionRecord>, GenerationReport> build_corpus(
    int n_clips, const RandomizationSpec& spec, double threshold,
    std::uint64_t seed, const CorpusOptions& options) {
  if (n_clips < 1) throw ParameterError("n_clips must be >= 1");
  if (!(threshold > 0.0)) throw ParameterError("threshold must be > 0");
  spec.validate();

  std::vector<ClipResult> results(n_clips);
  const int jobs = std::max(1, options.jobs);
  if (jobs == 1) {
    for (int i = 0; i < n_clips; ++i)
      results[i] = make_clip(i, spec, threshold, seed, options);
  } else {
    std::atomic<int> next{0};
    auto worker = [&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n_clips) return;
        results[i] = make_clip(i, spec, threshold, seed, options);
      }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<MotionRecord> records;
  GenerationReport report;
  report.n_clips = n_clips;
  report.threshold = threshold;
  double d_sum = 0.0;
  for (auto& r : results) {
    records.push_back(std::move(r.ref));
    if (r.tracking_failed) {
      ++report.n_tracking_failed;
    } else if (!r.tracked) {
      ++report.n_filtered;
    } else {
      ++report.n_retained;
      d_sum += *r.tracked->d_l2;
      const SimParams& phi = r.tracked->phi;
      report.phi_histograms[0][histogram_bin(phi.g_z, spec.gravity_range[0],
                                             spec.gravity_range[1])]++;
      report.phi_histograms[1][histogram_bin(phi.w_x, spec.wind_range[0],
                                             spec.wind_range[1])]++;
      report.phi_histograms[2][histogram_bin(phi.w_y, spec.wind_range[0],
                                             spec.wind_range[1])]++;
      records.push_back(std::move(*r.tracked));
    }
  }
  if (report.n_retained == 0)
    throw EmptyCorpusError("no tracked clip passed the filter");
  report.retention_rate = double(report.n_retained) / n_clips;
  report.mean_d_l2 = d_sum / report.n_retained;
  return {std::move(records), report};
}

double calibrate_threshold(const RandomizationSpec& spec, int n_clips,
                           std::uint64_t seed, const CorpusOptions& options) {
  if (n_clips < 10) throw ParameterError("calibration needs >= 10 clips");
  spec.validate();
  CorpusOptions opt = options;
  opt.artifacts = ArtifactConfig::clean();

  std::vector<double> ds;
  for (int i = 0; i < n_clips; ++i) {
    const int cls = i % kNumClasses;
    const Motion ref = gen_reference(cls, derive_stream(seed, 2 * i),
                                     opt.artifacts, opt.frames, opt.frame_rate);
    const SimParams phi = sample_phi(spec, derive_stream(seed, 2 * i + 1));
    try {
      ds.push_back(d_l2(ref, project(ref, phi, opt.world)));
    } catch (const TrackingFailure&) {
      // untrackable under this phi; calibration uses successful rollouts
    }
  }
  if (ds.size() < 5) throw EmptyCorpusError("calibration tracked too few clips");
  std::sort(ds.begin(), ds.end());
  const size_t idx = static_cast<size_t>(
      std::ceil(0.9 * static_cast<double>(ds.size()))) - 1;
  return ds[std::min(idx, ds.size() - 1)];
}

std::string GenerationReport::to_json() const {
  nlohmann::ordered_json j;
  j["n_clips"] = n_clips;
  j["n_tracking_failed"] = n_tracking_failed;
  j["n_filtered"] = n_filtered;
  j["n_retained"] = n_retained;
  j["retention_rate"] = retention_rate;
  j["threshold"] = threshold;
  j["mean_d_l2"] = mean_d_l2;
  j["phi_histograms"] = {{"g_z", phi_histograms[0]},
                         {"w_x", phi_histograms[1]},
                         {"w_y", phi_histograms[2]}};
  return j.dump(2);
}

void write_corpus(const std::vector<MotionRecord>& records,
                  const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& rec : records) {
    nlohmann::ordered_json j;
    j["id"] = rec.id;
    j["class"] = rec.class_label;
    j["phi"] = {rec.phi.g_z, rec.phi.w_x, rec.phi.w_y};
    j["frame_rate"] = rec.motion.frame_rate;
    nlohmann::ordered_json frames = nlohmann::ordered_json::array();
    for (int f = 0; f < rec.motion.num_frames(); ++f) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (int c = 0; c < rec.motion.frames.cols(); ++c)
        row.push_back(rec.motion.frames(f, c));
      frames.push_back(std::move(row));
    }
    j["frames"] = std::move(frames);
    j["source"] = rec.source == RecordSource::REFERENCE ? "ref" : "tracked";
    if (rec.d_l2)
      j["d_l2"] = *rec.d_l2;
    else
      j["d_l2"] = nullptr;
    j["schema"] = 1;
    out << j.dump() << '\n';
  }
}

std::vector<MotionRecord> read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<MotionRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      MotionRecord rec;
      rec.id = j.at("id").get<std::string>();
      rec.class_label = j.at("class").get<int>();
      if (rec.class_label < 0) throw ParseError("negative class", lineno);
      const auto& phi = j.at("phi");
      if (!phi.is_array() || phi.size() != 3)
        throw ParseError("phi must be a 3-array", lineno);
      rec.phi = {phi[0].get<double>(), phi[1].get<double>(), phi[2].get<double>()};
      rec.motion.frame_rate = j.at("frame_rate").get<int>();
      const auto& frames = j.at("frames");
      if (!frames.is_array() || frames.empty())
        throw ParseError("frames must be a non-empty array", lineno);
      const size_t cols = frames[0].size();
      if (cols == 0) throw ParseError("empty frame row", lineno);
      rec.motion.frames.resize(frames.size(), cols);
      for (size_t f = 0; f < frames.size(); ++f) {
        if (frames[f].size() != cols)
          throw ParseError("ragged frame rows", lineno);
        for (size_t c = 0; c < cols; ++c)
          rec.motion.frames(f, c) = frames[f][c].get<double>();
      }
      const std::string source = j.at("source").get<std::string>();
      if (source == "ref") {
        rec.source = RecordSource::REFERENCE;
      } else if (source == "tracked") {
        rec.source = RecordSource::TRACKED;
      } else {
        throw ParseError("unknown source '" + source + "'", lineno);
      }
      if (!j.at("d_l2").is_null()) rec.d_l2 = j.at("d_l2").get<double>();
      if (j.at("schema").get<int>() != 1)
        throw ParseError("unsupported schema version", lineno);
      records.push_back(std::move(rec));
    } catch (const ParseError&) {
      throw;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("corpus line ") + std::to_string(lineno) +
                           ": " + e.what(),
                       lineno);
    }
  }
  return records;
}

}  // namespace simdiff
