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

#include "simdiff/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "simdiff/errors.hpp"

namespace simdiff {

namespace {

constexpr char kMagic[4] = {'S', 'D', 'C', 'K'};

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_tensor(std::ofstream& out, const std::string& name,
                  const Tensor& t) {
  write_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(out, static_cast<std::uint32_t>(t.rows()));
  write_u32(out, static_cast<std::uint32_t>(t.cols()));
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    out.write(reinterpret_cast<const char*>(t.row(i).eval().data()),
              static_cast<std::streamsize>(sizeof(double) * t.cols()));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");

  const BackboneConfig& cfg = ckpt.params.backbone.cfg;
  nlohmann::ordered_json j;
  j["schema"] = kCheckpointSchema;
  j["phase"] = ckpt.phase;
  j["T"] = ckpt.T;
  j["beta_start"] = ckpt.beta_start;
  j["beta_end"] = ckpt.beta_end;
  j["backbone"] = {{"layers", cfg.layers},       {"hidden_dim", cfg.hidden_dim},
                   {"heads", cfg.heads},         {"ff_dim", cfg.ff_dim},
                   {"max_frames", cfg.max_frames}, {"num_classes", cfg.num_classes},
                   {"input_dim", cfg.input_dim}, {"dropout", cfg.dropout}};
  j["freeze_backbone"] = ckpt.params.freeze_backbone;
  j["has_adapters"] = ckpt.params.has_adapters();
  j["encoder_mode"] =
      ckpt.params.sim_encoder.mode == SimEncoderMode::CATEGORICAL ? "categorical"
                                                                  : "continuous";
  j["n_categories"] = ckpt.n_categories;
  const std::string header = j.dump();

  out.write(kMagic, 4);
  write_u32(out, kCheckpointSchema);
  write_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  auto refs = const_cast<DenoiserParams&>(ckpt.params).tensors();
  write_u64(out, refs.size() + 2);
  for (const auto& r : refs) write_tensor(out, r.name, *r.tensor);
  write_tensor(out, "norm.mu", ckpt.norm.mu);
  write_tensor(out, "norm.sigma", ckpt.norm.sigma);
  if (!out) throw std::runtime_error("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("not a checkpoint file: " + path, 0);
  const std::uint32_t schema = read_u32(in);
  if (schema != kCheckpointSchema)
    throw ParseError("unsupported checkpoint schema", 0);
  const std::uint64_t hlen = read_u64(in);
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw ParseError("truncated checkpoint header", 0);

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint header: ") + e.what(), 0);
  }

  Checkpoint ckpt;
  ckpt.phase = j.at("phase").get<std::string>();
  ckpt.T = j.at("T").get<int>();
  ckpt.beta_start = j.at("beta_start").get<double>();
  ckpt.beta_end = j.at("beta_end").get<double>();
  ckpt.n_categories = j.at("n_categories").get<int>();

  BackboneConfig cfg;
  const auto& bb = j.at("backbone");
  cfg.layers = bb.at("layers").get<int>();
  cfg.hidden_dim = bb.at("hidden_dim").get<int>();
  cfg.heads = bb.at("heads").get<int>();
  cfg.ff_dim = bb.at("ff_dim").get<int>();
  cfg.max_frames = bb.at("max_frames").get<int>();
  cfg.num_classes = bb.at("num_classes").get<int>();
  cfg.input_dim = bb.at("input_dim").get<int>();
  cfg.dropout = bb.at("dropout").get<double>();

  ckpt.params.backbone = init_backbone(cfg, 0);
  if (j.at("has_adapters").get<bool>()) {
    const auto mode = j.at("encoder_mode").get<std::string>() == "categorical"
                          ? SimEncoderMode::CATEGORICAL
                          : SimEncoderMode::CONTINUOUS;
    attach_adapters(ckpt.params, 0, mode, ckpt.n_categories);
  }
  ckpt.params.freeze_backbone = j.at("freeze_backbone").get<bool>();

  std::map<std::string, Tensor*> by_name;
  for (auto& r : ckpt.params.tensors()) by_name[r.name] = r.tensor;

  const std::uint64_t n_tensors = read_u64(in);
  std::size_t filled = 0;
  bool have_mu = false, have_sigma = false;
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rows = read_u32(in);
    const std::uint32_t cols = read_u32(in);
    if (!in) throw ParseError("truncated checkpoint tensor header", 0);
    Tensor t(rows, cols);
    std::vector<double> row(cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      in.read(reinterpret_cast<char*>(row.data()),
              static_cast<std::streamsize>(sizeof(double) * cols));
      for (std::uint32_t c = 0; c < cols; ++c) t(r, c) = row[c];
    }
    if (!in) throw ParseError("truncated tensor payload for " + name, 0);
    if (name == "norm.mu") {
      ckpt.norm.mu = t.row(0);
      have_mu = true;
    } else if (name == "norm.sigma") {
      ckpt.norm.sigma = t.row(0);
      have_sigma = true;
    } else {
      auto it = by_name.find(name);
      if (it == by_name.end())
        throw ParseError("unexpected tensor '" + name + "' in checkpoint", 0);
      if (it->second->rows() != t.rows() || it->second->cols() != t.cols())
        throw ParseError("tensor shape mismatch for " + name, 0);
      *it->second = std::move(t);
      ++filled;
    }
  }
  if (!have_mu || !have_sigma || filled != by_name.size())
    throw ParseError("checkpoint is missing tensors", 0);
  return ckpt;
}

}  // namespace simdiff
