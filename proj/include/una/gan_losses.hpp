// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include "una/discriminator.hpp"
#include "una/generator.hpp"
#include "una/nce.hpp"

namespace una::ugan {

inline ad::Value detach(const ad::Value& v) { return ad::constant(v->val); }

namespace lossdet {

inline ad::Value mean_over(const std::vector<ad::Value>& items) {
  if (items.empty()) throw EmptyPool("loss over empty logit set");
  ad::Value acc;
  for (const auto& v : items) acc = acc ? ad::add(acc, v) : v;
  return ad::scale(acc, 1.0 / static_cast<double>(items.size()));
}

}  // namespace lossdet

// The adversarial objective value E[log D(x)] + E[log(1 - D(G(y)))], with D a
// logistic squashing of the patch logits. Maximized by the discriminator; its
// maximum is 0, and D == 1/2 everywhere gives -2 ln 2.
inline ad::Value adversarial_value(const std::vector<ad::Value>& real_logits,
                                   const std::vector<ad::Value>& fake_logits) {
  std::vector<ad::Value> real_terms, fake_terms;
  real_terms.reserve(real_logits.size());
  fake_terms.reserve(fake_logits.size());
  for (const auto& r : real_logits) real_terms.push_back(ad::mean_log_sigmoid(r));
  for (const auto& f : fake_logits) fake_terms.push_back(ad::mean_log_sigmoid(ad::neg(f)));
  return ad::add(lossdet::mean_over(real_terms), lossdet::mean_over(fake_terms));
}

// Negation of the objective value, for a minimizing optimizer.
inline ad::Value adversarial_loss_d(const std::vector<ad::Value>& real_logits,
                                    const std::vector<ad::Value>& fake_logits) {
  return ad::neg(adversarial_value(real_logits, fake_logits));
}

// Non-saturating generator objective: -E[log D(G(y))].
inline ad::Value adversarial_loss_g(const std::vector<ad::Value>& fake_logits) {
  std::vector<ad::Value> terms;
  terms.reserve(fake_logits.size());
  for (const auto& f : fake_logits) terms.push_back(ad::mean_log_sigmoid(f));
  return ad::neg(lossdet::mean_over(terms));
}

// Least-squares alternative (config flag), operating on raw logits.
inline ad::Value ls_loss_d(const std::vector<ad::Value>& real_logits,
                           const std::vector<ad::Value>& fake_logits) {
  std::vector<ad::Value> terms;
  for (const auto& r : real_logits) terms.push_back(ad::mean(ad::square(ad::add_const(r, -1.0))));
  std::vector<ad::Value> fterms;
  for (const auto& f : fake_logits) fterms.push_back(ad::mean(ad::square(f)));
  return ad::scale(ad::add(lossdet::mean_over(terms), lossdet::mean_over(fterms)), 0.5);
}

inline ad::Value ls_loss_g(const std::vector<ad::Value>& fake_logits) {
  std::vector<ad::Value> terms;
  for (const auto& f : fake_logits) terms.push_back(ad::mean(ad::square(ad::add_const(f, -1.0))));
  return ad::scale(lossdet::mean_over(terms), 0.5);
}

struct UnaLossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  void validate() const {
    if (alpha < 0.0 || beta < 0.0) throw InvalidConfig("loss weights must be nonnegative");
  }
};

enum class AdvMode { Minimax, LeastSquares };

inline AdvMode adv_mode_from_name(const std::string& s) {
  if (s == "minimax") return AdvMode::Minimax;
  if (s == "least_squares") return AdvMode::LeastSquares;
  throw InvalidConfig("unknown adversarial mode: " + s);
}

struct UnaBatch {
  std::vector<Tensor> clean;   // Y^S magnitude segments
  std::vector<Tensor> target;  // X^T magnitude segments
};

struct UnaLossParts {
  ad::Value g_loss;  // adv_g + alpha * nce_y + beta * nce_x
  ad::Value d_loss;  // discriminator loss on (real target, detached fakes)
  double adv_d = 0.0, adv_g = 0.0, nce_y = 0.0, nce_x = 0.0, g_total = 0.0, d_total = 0.0;
};

// One-shot evaluation of the full objective for a batch, with per-component
// diagnostics. The discriminator side sees detached simulated magnitudes.
// L_cl(G, Y) contrasts G(y) against y; L_cl(G, X) contrasts G(x) against x
// (the identity term that discourages unnecessary changes).
inline UnaLossParts total_una_loss(const Generator& gen, const Discriminator& disc,
                                   const NceProjector& projector, const UnaBatch& batch,
                                   const UnaLossWeights& weights, AdvMode mode, bool training,
                                   Rng& rng) {
  weights.validate();
  if (batch.clean.empty() || batch.target.empty())
    throw EmptyPool("batch needs clean and target segments");
  const auto& layers = projector.config().nce_layers;
  const double tau = projector.config().temperature;

  std::vector<ad::Value> real_logits, fake_logits, fake_logits_detached;
  std::vector<ad::Value> nce_y_terms, nce_x_terms;

  for (const auto& y : batch.clean) {
    auto y_in = ad::constant(y);
    auto res = gen.run(y_in, &layers, /*need_output=*/true, training, &rng);
    auto fake = res.output;
    auto feat_q = gen.features(fake, layers, training, &rng);
    auto patches = projector.sample_patch_set(feat_q, res.features, rng);
    nce_y_terms.push_back(patch_nce_loss(patches, tau));
    fake_logits.push_back(disc.forward(fake));
    fake_logits_detached.push_back(disc.forward(detach(fake)));
  }
  for (const auto& x : batch.target) {
    auto x_in = ad::constant(x);
    real_logits.push_back(disc.forward(x_in));
    auto res = gen.run(x_in, &layers, /*need_output=*/true, training, &rng);
    auto feat_q = gen.features(res.output, layers, training, &rng);
    auto patches = projector.sample_patch_set(feat_q, res.features, rng);
    nce_x_terms.push_back(patch_nce_loss(patches, tau));
  }

  UnaLossParts parts;
  ad::Value adv_g = mode == AdvMode::Minimax ? adversarial_loss_g(fake_logits) : ls_loss_g(fake_logits);
  ad::Value nce_y = lossdet::mean_over(nce_y_terms);
  ad::Value nce_x = lossdet::mean_over(nce_x_terms);
  parts.g_loss = ad::add(adv_g, ad::add(ad::scale(nce_y, weights.alpha), ad::scale(nce_x, weights.beta)));
  parts.d_loss = mode == AdvMode::Minimax ? adversarial_loss_d(real_logits, fake_logits_detached)
                                          : ls_loss_d(real_logits, fake_logits_detached);
  parts.adv_g = ad::item(adv_g);
  parts.nce_y = ad::item(nce_y);
  parts.nce_x = ad::item(nce_x);
  parts.g_total = ad::item(parts.g_loss);
  parts.d_total = ad::item(parts.d_loss);
  parts.adv_d = parts.d_total;
  return parts;
}

}  // namespace una::ugan
