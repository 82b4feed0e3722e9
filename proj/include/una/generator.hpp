// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "una/nn.hpp"
#include "una/nn_ops.hpp"

namespace una::ugan {

// Clean-magnitude -> noisy-magnitude translator. Fully convolutional:
// 7x7 ingress, n_downsample stride-2 3x3 stages (channels double each time),
// a stack of ResNet blocks, self-attention layers at the bottleneck, mirrored
// transposed-conv upsampling (cropped back to the recorded odd sizes), and a
// zero-initialized 7x7 egress added onto the input through a global skip, so
// a fresh generator is an exact passthrough.
struct GeneratorConfig {
  int n_resnet_blocks = 9;
  int n_attention_layers = 3;
  int n_downsample = 2;
  int base_channels = 64;
  double dropout_rate = 0.5;
  std::string norm = "instance";
  int input_height = 129;

  void validate() const {
    if (n_resnet_blocks < 2)
      throw InvalidConfig("generator needs at least 2 ResNet blocks (a first and a medium)");
    if (n_attention_layers < 0) throw InvalidConfig("negative attention layer count");
    if (n_downsample < 1) throw InvalidConfig("need at least one downsampling stage");
    if (base_channels < 1) throw InvalidConfig("base_channels must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw InvalidConfig("dropout_rate in [0,1)");
    if (norm != "instance") throw InvalidConfig("unsupported norm: " + norm);
    if (input_height < 4) throw InvalidConfig("input_height too small");
  }

  int bottleneck_channels() const { return base_channels << n_downsample; }
  int min_width() const { return 4 << n_downsample; }

  nlohmann::json to_json() const {
    return {{"n_resnet_blocks", n_resnet_blocks},
            {"n_attention_layers", n_attention_layers},
            {"n_downsample", n_downsample},
            {"base_channels", base_channels},
            {"dropout_rate", dropout_rate},
            {"norm", norm},
            {"input_height", input_height}};
  }
  static GeneratorConfig from_json(const nlohmann::json& j) {
    GeneratorConfig c;
    c.n_resnet_blocks = j.value("n_resnet_blocks", c.n_resnet_blocks);
    c.n_attention_layers = j.value("n_attention_layers", c.n_attention_layers);
    c.n_downsample = j.value("n_downsample", c.n_downsample);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.norm = j.value("norm", c.norm);
    c.input_height = j.value("input_height", c.input_height);
    return c;
  }
};

class Generator {
 public:
  Generator(GeneratorConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, "generator-init"));
    const int B = cfg_.base_channels;

    ingress_w_ = params_.create("ingress.w", nn::normal_init({B, 1, 7, 7}, rng));
    ingress_b_ = params_.create("ingress.b", nn::zeros_init({B}));
    ingress_ng_ = params_.create("ingress.norm.gain", nn::ones_init({B}));
    ingress_nb_ = params_.create("ingress.norm.bias", nn::zeros_init({B}));

    for (int i = 1; i <= cfg_.n_downsample; ++i) {
      const int cin = B << (i - 1), cout = B << i;
      const std::string p = "down" + std::to_string(i);
      down_w_.push_back(params_.create(p + ".w", nn::normal_init({cout, cin, 3, 3}, rng)));
      down_b_.push_back(params_.create(p + ".b", nn::zeros_init({cout})));
      down_ng_.push_back(params_.create(p + ".norm.gain", nn::ones_init({cout})));
      down_nb_.push_back(params_.create(p + ".norm.bias", nn::zeros_init({cout})));
    }

    const int C = cfg_.bottleneck_channels();
    for (int j = 1; j <= cfg_.n_resnet_blocks; ++j) {
      const std::string p = "res" + std::to_string(j);
      ResBlock blk;
      blk.w1 = params_.create(p + ".conv1.w", nn::normal_init({C, C, 3, 3}, rng));
      blk.b1 = params_.create(p + ".conv1.b", nn::zeros_init({C}));
      blk.ng1 = params_.create(p + ".norm1.gain", nn::ones_init({C}));
      blk.nb1 = params_.create(p + ".norm1.bias", nn::zeros_init({C}));
      blk.w2 = params_.create(p + ".conv2.w", nn::normal_init({C, C, 3, 3}, rng));
      blk.b2 = params_.create(p + ".conv2.b", nn::zeros_init({C}));
      blk.ng2 = params_.create(p + ".norm2.gain", nn::ones_init({C}));
      blk.nb2 = params_.create(p + ".norm2.bias", nn::zeros_init({C}));
      res_.push_back(blk);
    }

    const int cq = std::max(C / 8, 1);
    const int cv = std::max(C / 2, 1);
    for (int a = 1; a <= cfg_.n_attention_layers; ++a) {
      const std::string p = "attn" + std::to_string(a);
      Attention at;
      at.wq = params_.create(p + ".wq", nn::normal_init({cq, C, 1, 1}, rng));
      at.wk = params_.create(p + ".wk", nn::normal_init({cq, C, 1, 1}, rng));
      at.wv = params_.create(p + ".wv", nn::normal_init({cv, C, 1, 1}, rng));
      at.wo = params_.create(p + ".wo", nn::normal_init({C, cv, 1, 1}, rng));
      at.gamma = params_.create(p + ".gamma", nn::zeros_init({1}));
      attn_.push_back(at);
    }

    for (int i = cfg_.n_downsample; i >= 1; --i) {
      const int cin = B << i, cout = B << (i - 1);
      const std::string p = "up" + std::to_string(i);
      up_w_.push_back(params_.create(p + ".w", nn::normal_init({cin, cout, 3, 3}, rng)));
      up_b_.push_back(params_.create(p + ".b", nn::zeros_init({cout})));
      up_ng_.push_back(params_.create(p + ".norm.gain", nn::ones_init({cout})));
      up_nb_.push_back(params_.create(p + ".norm.bias", nn::zeros_init({cout})));
    }

    // Identity-initialized egress: zero weights plus the global skip make the
    // untrained generator pass magnitudes through unchanged.
    egress_w_ = params_.create("egress.w", nn::zeros_init({1, B, 7, 7}));
    egress_b_ = params_.create("egress.b", nn::zeros_init({1}));
  }

  const GeneratorConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  // Valid feature-layer identifiers: "input", "downsample-<i>", "resblock-<j>".
  int64_t channels_for_layer(const std::string& name) const {
    if (name == "input") return 1;
    if (name.rfind("downsample-", 0) == 0) {
      const int i = parse_index(name, "downsample-", cfg_.n_downsample);
      return static_cast<int64_t>(cfg_.base_channels) << i;
    }
    if (name.rfind("resblock-", 0) == 0) {
      parse_index(name, "resblock-", cfg_.n_resnet_blocks);
      return cfg_.bottleneck_channels();
    }
    throw ConfigError("unknown generator feature layer: " + name);
  }

  void validate_layers(const std::vector<std::string>& layers) const {
    if (layers.empty()) throw ConfigError("feature layer list must not be empty");
    for (const auto& l : layers) channels_for_layer(l);
  }

  struct RunResult {
    ad::Value output;  // null when only features were requested
    std::vector<std::pair<std::string, ad::Value>> features;
  };

  ad::Value forward(const ad::Value& x, bool training = false, Rng* rng = nullptr) const {
    return run(x, nullptr, true, training, rng).output;
  }

  std::vector<std::pair<std::string, ad::Value>> features(const ad::Value& x,
                                                          const std::vector<std::string>& layers,
                                                          bool training = false,
                                                          Rng* rng = nullptr) const {
    return run(x, &layers, false, training, rng).features;
  }

  // Single pass that optionally records named activations and optionally runs
  // to the output. When the output is not needed the pass stops after the
  // deepest requested layer.
  RunResult run(const ad::Value& input, const std::vector<std::string>* layers, bool need_output,
                bool training, Rng* rng) const {
    if (training && cfg_.dropout_rate > 0.0 && rng == nullptr)
      throw InvalidConfig("training-mode forward requires an RNG for dropout");
    ad::Value x = input;
    if (x->val.rank() == 2) x = ad::reshape(x, {1, x->val.dim(0), x->val.dim(1)});
    if (x->val.rank() != 3 || x->val.dim(0) != 1)
      throw ShapeError("generator expects a single-channel magnitude [1, H, W]");
    const int64_t H = x->val.dim(1), W = x->val.dim(2);
    if (H != cfg_.input_height)
      throw ShapeError("generator input height " + std::to_string(H) + " does not match config " +
                       std::to_string(cfg_.input_height));
    if (W < cfg_.min_width())
      throw ShapeError("generator input width " + std::to_string(W) + " below minimum " +
                       std::to_string(cfg_.min_width()));

    RunResult out;
    std::map<std::string, bool> wanted;
    int deepest = -1;  // stage order: input=0, downsample-i=i, resblock-j=n_downsample+j
    if (layers) {
      validate_layers(*layers);
      for (const auto& l : *layers) {
        wanted[l] = true;
        deepest = std::max(deepest, stage_of(l));
      }
    }
    auto record = [&](const std::string& name, const ad::Value& v) {
      if (layers && wanted.count(name)) out.features.emplace_back(name, v);
    };
    auto done_at = [&](int stage) { return !need_output && deepest >= 0 && stage >= deepest; };

    record("input", x);
    if (done_at(0)) return reorder(out, layers);

    ad::Value h = ad::relu(ad::instance_norm2d(ad::conv2d(x, ingress_w_, ingress_b_, 1, 3),
                                               ingress_ng_, ingress_nb_));
    std::vector<std::pair<int64_t, int64_t>> sizes;  // pre-downsample sizes, for upsampling
    for (int i = 1; i <= cfg_.n_downsample; ++i) {
      sizes.emplace_back(h->val.dim(1), h->val.dim(2));
      h = ad::relu(ad::instance_norm2d(
          ad::conv2d(h, down_w_[static_cast<size_t>(i - 1)], down_b_[static_cast<size_t>(i - 1)], 2, 1),
          down_ng_[static_cast<size_t>(i - 1)], down_nb_[static_cast<size_t>(i - 1)]));
      record("downsample-" + std::to_string(i), h);
      if (done_at(i)) return reorder(out, layers);
    }

    for (int j = 1; j <= cfg_.n_resnet_blocks; ++j) {
      const ResBlock& blk = res_[static_cast<size_t>(j - 1)];
      ad::Value r = ad::relu(ad::instance_norm2d(ad::conv2d(h, blk.w1, blk.b1, 1, 1), blk.ng1, blk.nb1));
      r = ad::instance_norm2d(ad::conv2d(r, blk.w2, blk.b2, 1, 1), blk.ng2, blk.nb2);
      if (training && cfg_.dropout_rate > 0.0) r = nn::dropout(r, cfg_.dropout_rate, true, *rng);
      h = ad::add(h, r);
      record("resblock-" + std::to_string(j), h);
      if (done_at(cfg_.n_downsample + j)) return reorder(out, layers);
    }

    for (const auto& at : attn_) h = attention(h, at);

    for (int i = cfg_.n_downsample; i >= 1; --i) {
      const size_t idx = static_cast<size_t>(cfg_.n_downsample - i);
      const auto [oh, ow] = sizes[static_cast<size_t>(i - 1)];
      h = ad::relu(ad::instance_norm2d(
          ad::conv_transpose2d(h, up_w_[idx], up_b_[idx], 2, 1, oh, ow), up_ng_[idx], up_nb_[idx]));
    }

    ad::Value delta = ad::conv2d(h, egress_w_, egress_b_, 1, 3);
    out.output = ad::relu(ad::add(x, delta));
    return reorder(out, layers);
  }

 private:
  struct ResBlock {
    ad::Value w1, b1, ng1, nb1, w2, b2, ng2, nb2;
  };
  struct Attention {
    ad::Value wq, wk, wv, wo, gamma;
  };

  static int parse_index(const std::string& name, const std::string& prefix, int max) {
    const std::string tail = name.substr(prefix.size());
    if (tail.empty() || tail.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("bad feature layer name: " + name);
    const int idx = std::stoi(tail);
    if (idx < 1 || idx > max)
      throw ConfigError("feature layer out of range: " + name + " (max " + std::to_string(max) + ")");
    return idx;
  }

  int stage_of(const std::string& name) const {
    if (name == "input") return 0;
    if (name.rfind("downsample-", 0) == 0) return parse_index(name, "downsample-", cfg_.n_downsample);
    return cfg_.n_downsample + parse_index(name, "resblock-", cfg_.n_resnet_blocks);
  }

  // Features are returned in the caller's requested order.
  RunResult reorder(RunResult& r, const std::vector<std::string>* layers) const {
    if (!layers) return std::move(r);
    std::vector<std::pair<std::string, ad::Value>> ordered;
    for (const auto& want : *layers) {
      for (auto& [name, v] : r.features)
        if (name == want) {
          ordered.emplace_back(name, v);
          break;
        }
    }
    if (ordered.size() != layers->size()) throw ConfigError("internal: feature collection incomplete");
    r.features = std::move(ordered);
    return std::move(r);
  }

  // Non-local single-head attention over all spatial sites, with a learned
  // residual gain initialized at zero.
  ad::Value attention(const ad::Value& h, const Attention& at) const {
    const int64_t Hh = h->val.dim(1), Ww = h->val.dim(2);
    const int64_t N = Hh * Ww;
    auto q = ad::reshape(ad::conv2d(h, at.wq, nullptr, 1, 0), {at.wq->val.dim(0), N});
    auto k = ad::reshape(ad::conv2d(h, at.wk, nullptr, 1, 0), {at.wk->val.dim(0), N});
    auto v = ad::reshape(ad::conv2d(h, at.wv, nullptr, 1, 0), {at.wv->val.dim(0), N});
    auto scores = ad::matmul(ad::transpose2d(q), k);            // [N, N]
    auto weights = ad::softmax_rows(scores);                    // over key sites
    auto mixed = ad::matmul(v, ad::transpose2d(weights));       // [Cv, N]
    auto o = ad::conv2d(ad::reshape(mixed, {v->val.dim(0), Hh, Ww}), at.wo, nullptr, 1, 0);
    return ad::add(h, ad::mul(o, at.gamma));
  }

  GeneratorConfig cfg_;
  nn::ParamSet params_;
  ad::Value ingress_w_, ingress_b_, ingress_ng_, ingress_nb_;
  std::vector<ad::Value> down_w_, down_b_, down_ng_, down_nb_;
  std::vector<ResBlock> res_;
  std::vector<Attention> attn_;
  std::vector<ad::Value> up_w_, up_b_, up_ng_, up_nb_;
  ad::Value egress_w_, egress_b_;
};

}  // namespace una::ugan
