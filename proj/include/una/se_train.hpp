// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "una/checkpoint.hpp"
#include "una/senet.hpp"

namespace una::senet {

struct SeTrainConfig {
  SeConfig net;
  double lr = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int batch_size = 4;
  double clip_norm = 5.0;       // global gradient-norm clip; <= 0 disables
  double excerpt_seconds = 1.0;  // random training excerpt length
  int64_t steps = 2000;
  int64_t checkpoint_interval = 0;

  void validate() const {
    net.validate();
    if (lr <= 0.0) throw InvalidConfig("learning rate must be positive");
    if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
    if (excerpt_seconds <= 0.0) throw InvalidConfig("excerpt_seconds must be positive");
    if (steps < 0) throw InvalidConfig("steps must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"net", net.to_json()},         {"lr", lr},
            {"adam_beta1", adam_beta1},     {"adam_beta2", adam_beta2},
            {"batch_size", batch_size},     {"clip_norm", clip_norm},
            {"excerpt_seconds", excerpt_seconds}, {"steps", steps},
            {"checkpoint_interval", checkpoint_interval}};
  }
};

// One supervised pair of full utterances at a shared sample rate.
struct SePair {
  std::vector<double> noisy;
  std::vector<double> clean;
  int sample_rate = 16000;
  std::string id;
};

struct SeStepLoss {
  int64_t step = 0;
  double loss = 0.0;  // batch-mean of -SI-SDR(enhanced, clean), dB

  bool finite() const { return std::isfinite(loss); }
};

struct SeTrainResult {
  ckpt::Checkpoint checkpoint;
  std::vector<SeStepLoss> history;
  bool aborted = false;
  int64_t completed_steps = 0;
};

inline void write_se_history(const std::string& path, const std::vector<SeStepLoss>& history) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot write loss history: " + path);
  std::fprintf(f, "step,neg_si_sdr\n");
  for (const auto& h : history)
    std::fprintf(f, "%lld,%.17g\n", static_cast<long long>(h.step), h.loss);
  std::fclose(f);
}

namespace detail {

inline Tensor excerpt(const std::vector<double>& v, int64_t start, int64_t len) {
  Tensor t({len});
  for (int64_t i = 0; i < len; ++i) t[i] = v[static_cast<size_t>(start + i)];
  return t;
}

inline SeTrainResult run_training(SeNetwork& net, const std::vector<SePair>& pairs,
                                  const SeTrainConfig& cfg, uint64_t seed,
                                  const std::string& provenance, const std::string& parent) {
  if (pairs.empty()) throw EmptyPool("no training pairs");
  for (const auto& p : pairs) {
    if (p.noisy.size() != p.clean.size())
      throw LengthMismatch("pair " + p.id + ": noisy/clean lengths differ");
    if (static_cast<int>(p.noisy.size()) < cfg.net.encoder_kernel)
      throw InputTooShort("pair " + p.id + " shorter than the encoder kernel");
  }
  nn::Adam adam(net.params().values(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2);
  Rng rng(derive_seed(seed, "se-train"));
  SeTrainResult result;

  for (int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<ad::Value> estimates;
    std::vector<Tensor> references;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& pair = pairs[rng.uniform_int(pairs.size())];
      const int64_t full = static_cast<int64_t>(pair.noisy.size());
      const int64_t want = static_cast<int64_t>(cfg.excerpt_seconds * pair.sample_rate);
      const int64_t len = std::min<int64_t>(full, std::max<int64_t>(want, cfg.net.encoder_kernel));
      const int64_t start = full > len ? static_cast<int64_t>(rng.uniform_int(full - len + 1)) : 0;
      auto noisy = detail::excerpt(pair.noisy, start, len);
      references.push_back(detail::excerpt(pair.clean, start, len));
      estimates.push_back(net.forward(ad::constant(std::move(noisy))));
    }
    auto loss = si_sdr_loss_batch(estimates, references);
    SeStepLoss rec;
    rec.step = step;
    rec.loss = ad::item(loss);
    if (!rec.finite()) {
      result.aborted = true;
      break;
    }
    adam.zero_grad();
    ad::backward(loss);
    adam.clip_global_norm(cfg.clip_norm);
    adam.step();
    result.history.push_back(rec);
    result.completed_steps = step + 1;
    if (cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0)
      result.checkpoint = ckpt::snapshot("senet", cfg.net.to_json(), net.params(), &adam,
                                         step + 1, provenance, parent);
  }
  result.checkpoint = ckpt::snapshot("senet", cfg.net.to_json(), net.params(), &adam,
                                     result.completed_steps, provenance, parent);
  return result;
}

}  // namespace detail

// Baseline supervised training on source-domain pairs.
inline SeTrainResult train_se(const std::vector<SePair>& pairs, const SeTrainConfig& cfg,
                              uint64_t seed) {
  cfg.validate();
  SeNetwork net(cfg.net, derive_seed(seed, "senet"));
  return detail::run_training(net, pairs, cfg, seed, "baseline", "");
}

// Adaptation: resume from a baseline checkpoint and train on (simulated)
// pairs. The baseline's configuration fingerprint must match the requested
// config; the result records provenance and the parent checkpoint.
inline SeTrainResult finetune_se(const ckpt::Checkpoint& baseline, const std::vector<SePair>& pairs,
                                 const SeTrainConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (baseline.kind != "senet") throw IncompatibleCheckpoint("expected a senet checkpoint");
  const std::string want = ckpt::config_fingerprint(cfg.net.to_json());
  if (baseline.config_fingerprint != want)
    throw IncompatibleCheckpoint("baseline fingerprint " + baseline.config_fingerprint +
                                 " does not match config " + want);
  SeNetwork net(cfg.net, derive_seed(seed, "senet"));
  ckpt::restore_params(baseline, net.params());
  const std::string parent = ckpt::content_fingerprint(baseline);
  if (cfg.steps == 0) {
    // Explicit no-op: parameters stay bit-identical to the baseline.
    SeTrainResult result;
    result.checkpoint =
        ckpt::snapshot("senet", cfg.net.to_json(), net.params(), nullptr, 0, "adapted", parent);
    return result;
  }
  return detail::run_training(net, pairs, cfg, seed, "adapted", parent);
}

// Rebuilds a network from a checkpoint for inference.
inline SeNetwork load_se_network(const ckpt::Checkpoint& c) {
  if (c.kind != "senet") throw IncompatibleCheckpoint("expected a senet checkpoint");
  SeNetwork net(SeConfig::from_json(c.config), 0);
  ckpt::restore_params(c, net.params());
  return net;
}

// Convenience: enhance a waveform with a frozen network (no graph).
inline dsp::Waveform enhance(const SeNetwork& net, const dsp::Waveform& noisy) {
  ad::NoGradGuard guard;
  Tensor in({static_cast<int64_t>(noisy.samples.size())});
  for (size_t i = 0; i < noisy.samples.size(); ++i) in[static_cast<int64_t>(i)] = noisy.samples[i];
  auto out = net.forward(ad::constant(std::move(in)));
  dsp::Waveform w;
  w.sample_rate = noisy.sample_rate;
  w.samples = out->val.vec();
  return w;
}

}  // namespace una::senet
