// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "una/nn.hpp"
#include "una/nn_ops.hpp"

namespace una::ugan {

// Patch discriminator: five 4x4 convolutions (strides 2,2,2,1,1) with
// LeakyReLU between them and a raw single-channel logit map at the end. No
// normalization layers, so each logit depends on exactly its 70x70 receptive
// field.
struct DiscriminatorConfig {
  int n_layers = 5;        // fixed
  int kernel = 4;          // fixed
  int base_channels = 64;
  double leaky_slope = 0.2;
  int input_height = 129;

  static const std::vector<int>& strides() {
    static const std::vector<int> s{2, 2, 2, 1, 1};
    return s;
  }

  void validate() const {
    if (n_layers != 5) throw InvalidConfig("discriminator layer count is fixed at 5");
    if (kernel != 4) throw InvalidConfig("discriminator kernel is fixed at 4x4");
    if (base_channels < 1) throw InvalidConfig("base_channels must be positive");
    if (leaky_slope <= 0.0 || leaky_slope >= 1.0) throw InvalidConfig("leaky_slope in (0,1)");
  }

  // Receptive field of one output logit, from the kernel/stride recurrence.
  static int receptive_field() {
    int rf = 1, jump = 1;
    for (int s : strides()) {
      rf += 3 * jump;
      jump *= s;
    }
    return rf;
  }

  // Output-to-input index map along one axis: input span of logit o is
  // [o*jump - offset, o*jump - offset + rf - 1], padding included.
  static int total_jump() {
    int j = 1;
    for (int s : strides()) j *= s;
    return j;
  }
  static int pad_offset() {
    int off = 0, jump = 1;
    for (int s : strides()) {
      off += jump;  // each layer pads by 1
      jump *= s;
    }
    return off;
  }

  nlohmann::json to_json() const {
    return {{"n_layers", n_layers},
            {"kernel", kernel},
            {"base_channels", base_channels},
            {"leaky_slope", leaky_slope},
            {"input_height", input_height}};
  }
  static DiscriminatorConfig from_json(const nlohmann::json& j) {
    DiscriminatorConfig c;
    c.n_layers = j.value("n_layers", c.n_layers);
    c.kernel = j.value("kernel", c.kernel);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.input_height = j.value("input_height", c.input_height);
    return c;
  }
};

class Discriminator {
 public:
  Discriminator(DiscriminatorConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, "discriminator-init"));
    const int B = cfg_.base_channels;
    const int chans[6] = {1, B, 2 * B, 4 * B, 8 * B, 1};
    for (int l = 0; l < 5; ++l) {
      const std::string p = "layer" + std::to_string(l + 1);
      w_.push_back(params_.create(p + ".w", nn::normal_init({chans[l + 1], chans[l], 4, 4}, rng)));
      b_.push_back(params_.create(p + ".b", nn::zeros_init({chans[l + 1]})));
    }
  }

  const DiscriminatorConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  // x: [1, H, W] magnitude; returns the [1, oh, ow] logit map.
  ad::Value forward(const ad::Value& input) const {
    ad::Value x = input;
    if (x->val.rank() == 2) x = ad::reshape(x, {1, x->val.dim(0), x->val.dim(1)});
    if (x->val.rank() != 3 || x->val.dim(0) != 1)
      throw ShapeError("discriminator expects a single-channel magnitude [1, H, W]");
    if (x->val.dim(1) != cfg_.input_height)
      throw ShapeError("discriminator input height " + std::to_string(x->val.dim(1)) +
                       " does not match config " + std::to_string(cfg_.input_height));
    const auto& strides = DiscriminatorConfig::strides();
    ad::Value h = x;
    for (size_t l = 0; l < 5; ++l) {
      h = ad::conv2d(h, w_[l], b_[l], strides[l], 1);
      if (l + 1 < 5) h = ad::leaky_relu(h, cfg_.leaky_slope);
    }
    return h;
  }

 private:
  DiscriminatorConfig cfg_;
  nn::ParamSet params_;
  std::vector<ad::Value> w_, b_;
};

}  // namespace una::ugan
