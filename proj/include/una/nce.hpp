// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "una/generator.hpp"
#include "una/nn.hpp"

namespace una::ugan {

struct NceConfig {
  int n_patches = 256;
  double temperature = 0.07;
  std::vector<std::string> nce_layers = {"input", "downsample-1", "downsample-2", "resblock-1",
                                         "resblock-5"};
  int projection_width = 256;
  bool normalize_embeddings = true;

  void validate() const {
    if (n_patches < 2) throw InvalidConfig("n_patches must be >= 2");
    if (temperature <= 0.0) throw InvalidConfig("temperature must be positive");
    if (nce_layers.empty()) throw InvalidConfig("nce_layers must not be empty");
    if (projection_width < 1) throw InvalidConfig("projection_width must be positive");
  }

  nlohmann::json to_json() const {
    return {{"n_patches", n_patches},
            {"temperature", temperature},
            {"nce_layers", nce_layers},
            {"projection_width", projection_width},
            {"normalize_embeddings", normalize_embeddings}};
  }
  static NceConfig from_json(const nlohmann::json& j) {
    NceConfig c;
    c.n_patches = j.value("n_patches", c.n_patches);
    c.temperature = j.value("temperature", c.temperature);
    c.nce_layers = j.value("nce_layers", c.nce_layers);
    c.projection_width = j.value("projection_width", c.projection_width);
    c.normalize_embeddings = j.value("normalize_embeddings", c.normalize_embeddings);
    return c;
  }
};

// Embedded patch pairs for one feature layer. Row i of query and key come
// from the same spatial site.
struct LayerPatches {
  std::string layer;
  std::vector<int64_t> sites;
  bool with_replacement = false;
  ad::Value query_embeddings;  // [n_patches, projection_width]
  ad::Value key_embeddings;
};

struct PatchSet {
  std::vector<LayerPatches> layers;
};

// Two-affine-map projection head per NCE layer (widths differ across layers),
// rectifier after the first map, optional unit-norm output rows.
class NceProjector {
 public:
  NceProjector(const GeneratorConfig& gen_cfg, NceConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Generator probe(gen_cfg, 0);  // layer-name validation and channel lookup
    Rng rng(derive_seed(seed, "nce-projector-init"));
    const int W = cfg_.projection_width;
    for (const auto& layer : cfg_.nce_layers) {
      const int64_t in_dim = probe.channels_for_layer(layer);
      Head h;
      h.layer = layer;
      h.w1 = params_.create("head." + layer + ".w1", nn::normal_init({in_dim, W}, rng));
      h.b1 = params_.create("head." + layer + ".b1", nn::zeros_init({W}));
      h.w2 = params_.create("head." + layer + ".w2", nn::normal_init({W, W}, rng));
      h.b2 = params_.create("head." + layer + ".b2", nn::zeros_init({W}));
      heads_.push_back(h);
    }
  }

  const NceConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  // Draws one site set per layer (shared between query and key maps, so
  // positives correspond spatially) and embeds both sides. Sampling is
  // without replacement when the map has at least n_patches sites.
  PatchSet sample_patch_set(const std::vector<std::pair<std::string, ad::Value>>& features_query,
                            const std::vector<std::pair<std::string, ad::Value>>& features_key,
                            Rng& rng) const {
    if (features_query.size() != heads_.size() || features_key.size() != heads_.size())
      throw ConfigError("feature list does not match configured NCE layers");
    PatchSet out;
    for (size_t li = 0; li < heads_.size(); ++li) {
      const auto& [qname, qfeat] = features_query[li];
      const auto& [kname, kfeat] = features_key[li];
      if (qname != heads_[li].layer || kname != heads_[li].layer)
        throw ConfigError("feature order mismatch: expected " + heads_[li].layer);
      if (!qfeat->val.same_shape(kfeat->val))
        throw ShapeError("query/key feature maps differ in shape at " + qname);

      const int64_t C = qfeat->val.dim(0);
      const int64_t sites_total = qfeat->val.numel() / C;
      const int64_t n = cfg_.n_patches;
      LayerPatches lp;
      lp.layer = heads_[li].layer;
      if (sites_total >= n) {
        auto idx = rng.sample_without_replacement(static_cast<size_t>(sites_total),
                                                  static_cast<size_t>(n));
        lp.sites.assign(idx.begin(), idx.end());
      } else {
        lp.with_replacement = true;
        lp.sites.resize(static_cast<size_t>(n));
        for (auto& s : lp.sites)
          s = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(sites_total)));
      }
      lp.query_embeddings = embed(li, ad::gather_sites(qfeat, lp.sites));
      lp.key_embeddings = embed(li, ad::gather_sites(kfeat, lp.sites));
      out.layers.push_back(std::move(lp));
    }
    return out;
  }

 private:
  struct Head {
    std::string layer;
    ad::Value w1, b1, w2, b2;
  };

  ad::Value embed(size_t li, const ad::Value& patches) const {
    const Head& h = heads_[li];
    auto z = ad::relu(ad::add_rowvec(ad::matmul(patches, h.w1), h.b1));
    z = ad::add_rowvec(ad::matmul(z, h.w2), h.b2);
    if (cfg_.normalize_embeddings) z = ad::l2_normalize_rows(z);
    return z;
  }

  NceConfig cfg_;
  nn::ParamSet params_;
  std::vector<Head> heads_;
};

// Mean over layers (and queries within each layer) of the InfoNCE
// cross-entropy; negatives are the other sampled patches of the same layer.
inline ad::Value patch_nce_loss(const PatchSet& set, double tau) {
  if (set.layers.empty()) throw DegenerateNce("empty patch set");
  ad::Value acc;
  for (const auto& lp : set.layers) {
    auto l = ad::nce_loss(lp.query_embeddings, lp.key_embeddings, tau);
    acc = acc ? ad::add(acc, l) : l;
  }
  return ad::scale(acc, 1.0 / static_cast<double>(set.layers.size()));
}

}  // namespace una::ugan
