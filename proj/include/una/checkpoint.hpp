// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "una/common.hpp"
#include "una/nn.hpp"
#include "una/tensor.hpp"

// Versioned checkpoint container shared by every trainable network: a JSON
// header (kind tag, step, config, fingerprints, tensor index) followed by raw
// little-endian doubles for parameters and Adam moments.
namespace una::ckpt {

constexpr char kMagic[9] = "UNACKPT1";

inline std::string config_fingerprint(const nlohmann::json& cfg) {
  return hex64(fnv1a64(cfg.dump()));
}

struct Checkpoint;
inline std::string content_fingerprint(const Checkpoint& c);

struct Checkpoint {
  std::string kind;
  int64_t step = 0;
  nlohmann::json config;
  std::string config_fingerprint;
  std::string parent_fingerprint;  // set when derived from another checkpoint
  std::string provenance;          // e.g. "baseline" / "adapted" for SE models
  std::vector<std::pair<std::string, Tensor>> tensors;
  bool has_optimizer = false;
  int64_t optimizer_step = 0;
  std::vector<Tensor> opt_m, opt_v;

  int64_t total_size() const {
    int64_t n = 0;
    for (const auto& [name, t] : tensors) n += t.numel();
    return n;
  }
};

// Identity of a concrete trained state: kind, config and parameter bytes.
inline std::string content_fingerprint(const Checkpoint& c) {
  uint64_t h = fnv1a64(c.kind + "|" + c.config_fingerprint + "|" + std::to_string(c.step));
  for (const auto& [name, t] : c.tensors) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(t.data(), static_cast<size_t>(t.numel()) * sizeof(double), h);
  }
  return hex64(h);
}

inline Checkpoint snapshot(const std::string& kind, const nlohmann::json& config,
                           const nn::ParamSet& params, const nn::Adam* opt, int64_t step,
                           const std::string& provenance = "",
                           const std::string& parent_fingerprint = "") {
  Checkpoint c;
  c.kind = kind;
  c.step = step;
  c.config = config;
  c.config_fingerprint = ckpt::config_fingerprint(config);
  c.parent_fingerprint = parent_fingerprint;
  c.provenance = provenance;
  for (const auto& [name, v] : params.items()) c.tensors.emplace_back(name, v->val);
  if (opt) {
    c.has_optimizer = true;
    c.optimizer_step = opt->step_count();
    c.opt_m = opt->moments_m();
    c.opt_v = opt->moments_v();
  }
  return c;
}

// Copies checkpoint tensors into an existing parameter set (matched by name,
// shape-checked). Throws IncompatibleCheckpoint on any mismatch.
inline void restore_params(const Checkpoint& c, nn::ParamSet& params) {
  if (c.tensors.size() != params.items().size())
    throw IncompatibleCheckpoint("parameter count mismatch");
  for (const auto& [name, t] : c.tensors) {
    auto v = params.find(name);
    if (!v) throw IncompatibleCheckpoint("missing parameter: " + name);
    if (v->val.shape() != t.shape())
      throw IncompatibleCheckpoint("shape mismatch for " + name + ": " + v->val.shape_str() +
                                   " vs " + t.shape_str());
    v->val = t;
  }
}

inline void restore_optimizer(const Checkpoint& c, nn::Adam& opt) {
  if (!c.has_optimizer) return;
  if (c.opt_m.size() != opt.moments_m().size())
    throw IncompatibleCheckpoint("optimizer state size mismatch");
  opt.set_step_count(c.optimizer_step);
  opt.moments_m() = c.opt_m;
  opt.moments_v() = c.opt_v;
}

namespace detail {

inline void write_doubles(std::string& out, const Tensor& t) {
  const size_t bytes = static_cast<size_t>(t.numel()) * sizeof(double);
  const size_t off = out.size();
  out.resize(off + bytes);
  std::memcpy(out.data() + off, t.data(), bytes);
}

inline Tensor read_doubles(const std::vector<char>& buf, size_t& pos, std::vector<int64_t> shape) {
  Tensor t(std::move(shape));
  const size_t bytes = static_cast<size_t>(t.numel()) * sizeof(double);
  if (pos + bytes > buf.size()) throw IncompatibleCheckpoint("truncated checkpoint payload");
  std::memcpy(t.data(), buf.data() + pos, bytes);
  pos += bytes;
  return t;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  nlohmann::json header;
  header["format_version"] = 1;
  header["kind"] = c.kind;
  header["step"] = c.step;
  header["config"] = c.config;
  header["config_fingerprint"] = c.config_fingerprint;
  if (!c.parent_fingerprint.empty()) header["parent_fingerprint"] = c.parent_fingerprint;
  if (!c.provenance.empty()) header["provenance"] = c.provenance;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& [name, t] : c.tensors) index.push_back({{"name", name}, {"shape", t.shape()}});
  header["tensors"] = index;
  header["optimizer"] = {{"present", c.has_optimizer}, {"step", c.optimizer_step}};

  std::string out;
  out.append(kMagic, 8);
  const std::string hj = header.dump();
  uint64_t len = hj.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += hj;
  for (const auto& [name, t] : c.tensors) detail::write_doubles(out, t);
  if (c.has_optimizer) {
    for (const auto& t : c.opt_m) detail::write_doubles(out, t);
    for (const auto& t : c.opt_v) detail::write_doubles(out, t);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short checkpoint write: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 16 || std::memcmp(buf.data(), kMagic, 8) != 0)
    throw IncompatibleCheckpoint("bad checkpoint magic: " + path);
  uint64_t len = 0;
  for (int i = 0; i < 8; ++i)
    len |= static_cast<uint64_t>(static_cast<unsigned char>(buf[8 + static_cast<size_t>(i)])) << (8 * i);
  if (16 + len > buf.size()) throw IncompatibleCheckpoint("truncated checkpoint header");
  nlohmann::json header = nlohmann::json::parse(std::string(buf.data() + 16, len));
  if (header.value("format_version", 0) != 1)
    throw IncompatibleCheckpoint("unsupported checkpoint format version");

  Checkpoint c;
  c.kind = header.at("kind").get<std::string>();
  c.step = header.at("step").get<int64_t>();
  c.config = header.at("config");
  c.config_fingerprint = header.at("config_fingerprint").get<std::string>();
  c.parent_fingerprint = header.value("parent_fingerprint", "");
  c.provenance = header.value("provenance", "");
  c.has_optimizer = header.at("optimizer").at("present").get<bool>();
  c.optimizer_step = header.at("optimizer").at("step").get<int64_t>();

  size_t pos = 16 + len;
  for (const auto& e : header.at("tensors")) {
    auto shape = e.at("shape").get<std::vector<int64_t>>();
    c.tensors.emplace_back(e.at("name").get<std::string>(),
                           detail::read_doubles(buf, pos, std::move(shape)));
  }
  if (c.has_optimizer) {
    for (const auto& [name, t] : c.tensors) c.opt_m.push_back(detail::read_doubles(buf, pos, t.shape()));
    for (const auto& [name, t] : c.tensors) c.opt_v.push_back(detail::read_doubles(buf, pos, t.shape()));
  }
  return c;
}

}  // namespace una::ckpt
