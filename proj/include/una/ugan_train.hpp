// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "una/checkpoint.hpp"
#include "una/gan_losses.hpp"

namespace una::ugan {

struct UganTrainConfig {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  NceConfig nce;
  UnaLossWeights weights;
  std::string adv_mode = "minimax";
  double lr = 0.002;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int batch_size = 8;
  int64_t steps = 2000;
  int64_t checkpoint_interval = 0;  // 0: final snapshot only

  void validate() const {
    generator.validate();
    discriminator.validate();
    nce.validate();
    weights.validate();
    adv_mode_from_name(adv_mode);
    if (lr <= 0.0) throw InvalidConfig("learning rate must be positive");
    if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
    if (steps < 0) throw InvalidConfig("steps must be >= 0");
    if (generator.input_height != discriminator.input_height)
      throw InvalidConfig("generator and discriminator disagree on input height");
  }

  nlohmann::json to_json() const {
    return {{"generator", generator.to_json()},
            {"discriminator", discriminator.to_json()},
            {"nce", nce.to_json()},
            {"alpha", weights.alpha},
            {"beta", weights.beta},
            {"adv_mode", adv_mode},
            {"lr", lr},
            {"adam_beta1", adam_beta1},
            {"adam_beta2", adam_beta2},
            {"batch_size", batch_size},
            {"steps", steps},
            {"checkpoint_interval", checkpoint_interval}};
  }
};

struct UganStepLoss {
  int64_t step = 0;
  double adv_d = 0.0, adv_g = 0.0, nce_y = 0.0, nce_x = 0.0, total_g = 0.0;

  bool finite() const {
    return std::isfinite(adv_d) && std::isfinite(adv_g) && std::isfinite(nce_y) &&
           std::isfinite(nce_x) && std::isfinite(total_g);
  }
};

using UnpairedBatchFn = std::function<UnaBatch(int64_t step, Rng& rng)>;

struct UganTrainResult {
  ckpt::Checkpoint generator;
  ckpt::Checkpoint discriminator;
  ckpt::Checkpoint projector;
  std::vector<UganStepLoss> history;
  bool aborted = false;
  int64_t completed_steps = 0;
};

inline void write_ugan_history(const std::string& path, const std::vector<UganStepLoss>& history) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot write loss history: " + path);
  std::fprintf(f, "step,adv_d,adv_g,nce_y,nce_x,total_g\n");
  for (const auto& h : history)
    std::fprintf(f, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(h.step), h.adv_d,
                 h.adv_g, h.nce_y, h.nce_x, h.total_g);
  std::fclose(f);
}

// Adversarial training: per batch, one discriminator update on (real target
// segments, detached simulated segments), then one generator+projection update
// against the refreshed discriminator. Single-threaded and reproducible under
// a fixed seed; aborts on the first non-finite loss, returning the parameters
// from before the failing update.
inline UganTrainResult train_una_gan(const UnpairedBatchFn& next_batch, const UganTrainConfig& cfg,
                                     uint64_t seed, const std::string& checkpoint_dir = "") {
  cfg.validate();
  Generator gen(cfg.generator, derive_seed(seed, "ugan-generator"));
  Discriminator disc(cfg.discriminator, derive_seed(seed, "ugan-discriminator"));
  NceProjector projector(cfg.generator, cfg.nce, derive_seed(seed, "ugan-projector"));
  const AdvMode mode = adv_mode_from_name(cfg.adv_mode);
  const auto& layers = cfg.nce.nce_layers;
  const double tau = cfg.nce.temperature;

  std::vector<ad::Value> g_params = gen.params().values();
  for (const auto& v : projector.params().values()) g_params.push_back(v);
  nn::Adam adam_g(g_params, cfg.lr, cfg.adam_beta1, cfg.adam_beta2);
  nn::Adam adam_d(disc.params().values(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2);

  Rng rng(derive_seed(seed, "ugan-train"));
  UganTrainResult result;

  nlohmann::json proj_cfg = {{"nce", cfg.nce.to_json()}, {"generator", cfg.generator.to_json()}};
  auto snapshot_all = [&](int64_t step) {
    result.generator = ckpt::snapshot("generator", cfg.generator.to_json(), gen.params(), &adam_g, step);
    result.discriminator =
        ckpt::snapshot("discriminator", cfg.discriminator.to_json(), disc.params(), &adam_d, step);
    result.projector = ckpt::snapshot("nce_projector", proj_cfg, projector.params(), nullptr, step);
    if (!checkpoint_dir.empty()) {
      namespace fs = std::filesystem;
      fs::create_directories(checkpoint_dir);
      ckpt::save_checkpoint((fs::path(checkpoint_dir) / "generator.ckpt").string(), result.generator);
      ckpt::save_checkpoint((fs::path(checkpoint_dir) / "discriminator.ckpt").string(),
                            result.discriminator);
      ckpt::save_checkpoint((fs::path(checkpoint_dir) / "nce_projector.ckpt").string(),
                            result.projector);
    }
  };

  for (int64_t step = 0; step < cfg.steps; ++step) {
    UnaBatch batch = next_batch(step, rng);
    if (batch.clean.empty() || batch.target.empty()) throw EmptyPool("unpaired batch is empty");

    // Generator pass on clean segments, shared by both phases.
    std::vector<ad::Value> fakes;
    std::vector<std::vector<std::pair<std::string, ad::Value>>> feat_keys;
    for (const auto& y : batch.clean) {
      auto res = gen.run(ad::constant(y), &layers, /*need_output=*/true, /*training=*/true, &rng);
      fakes.push_back(res.output);
      feat_keys.push_back(std::move(res.features));
    }

    // Discriminator update.
    std::vector<ad::Value> real_logits, fake_logits_detached;
    for (const auto& x : batch.target) real_logits.push_back(disc.forward(ad::constant(x)));
    for (const auto& f : fakes) fake_logits_detached.push_back(disc.forward(detach(f)));
    ad::Value d_loss = mode == AdvMode::Minimax
                           ? adversarial_loss_d(real_logits, fake_logits_detached)
                           : ls_loss_d(real_logits, fake_logits_detached);
    UganStepLoss rec;
    rec.step = step;
    rec.adv_d = ad::item(d_loss);
    if (!std::isfinite(rec.adv_d)) {
      result.aborted = true;
      break;
    }
    adam_d.zero_grad();
    ad::backward(d_loss);
    adam_d.step();

    // Generator + projection-head update against the refreshed discriminator.
    disc.params().set_requires_grad(false);
    std::vector<ad::Value> fake_logits;
    std::vector<ad::Value> nce_y_terms, nce_x_terms;
    for (size_t i = 0; i < fakes.size(); ++i) {
      fake_logits.push_back(disc.forward(fakes[i]));
      auto feat_q = gen.features(fakes[i], layers, /*training=*/true, &rng);
      nce_y_terms.push_back(patch_nce_loss(projector.sample_patch_set(feat_q, feat_keys[i], rng), tau));
    }
    for (const auto& x : batch.target) {
      auto res = gen.run(ad::constant(x), &layers, /*need_output=*/true, /*training=*/true, &rng);
      auto feat_q = gen.features(res.output, layers, /*training=*/true, &rng);
      nce_x_terms.push_back(patch_nce_loss(projector.sample_patch_set(feat_q, res.features, rng), tau));
    }
    ad::Value adv_g = mode == AdvMode::Minimax ? adversarial_loss_g(fake_logits) : ls_loss_g(fake_logits);
    ad::Value nce_y = lossdet::mean_over(nce_y_terms);
    ad::Value nce_x = lossdet::mean_over(nce_x_terms);
    ad::Value g_loss =
        ad::add(adv_g, ad::add(ad::scale(nce_y, cfg.weights.alpha), ad::scale(nce_x, cfg.weights.beta)));
    rec.adv_g = ad::item(adv_g);
    rec.nce_y = ad::item(nce_y);
    rec.nce_x = ad::item(nce_x);
    rec.total_g = ad::item(g_loss);
    if (!rec.finite()) {
      disc.params().set_requires_grad(true);
      result.aborted = true;
      break;
    }
    adam_g.zero_grad();
    ad::backward(g_loss);
    adam_g.step();
    disc.params().set_requires_grad(true);

    result.history.push_back(rec);
    result.completed_steps = step + 1;
    if (cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0)
      snapshot_all(step + 1);
  }

  snapshot_all(result.completed_steps);
  return result;
}

// Rebuilds a generator from its checkpoint for inference or resumed use.
inline Generator load_generator(const ckpt::Checkpoint& c) {
  if (c.kind != "generator") throw IncompatibleCheckpoint("expected a generator checkpoint");
  Generator gen(GeneratorConfig::from_json(c.config), 0);
  ckpt::restore_params(c, gen.params());
  return gen;
}

}  // namespace una::ugan
