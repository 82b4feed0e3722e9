// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "una/dsp.hpp"
#include "una/nn.hpp"
#include "una/nn_ops.hpp"

namespace una::senet {

// Mask-based time-domain enhancement network: 1-D conv encoder, a stack of
// dilated TCN blocks producing a sigmoid mask over the encoder output, and a
// transposed-conv decoder back to the waveform. Dilation of block i is 2^(i-1).
struct SeConfig {
  int encoder_filters = 256;
  int encoder_kernel = 16;
  int encoder_stride = 8;
  int n_tcn_blocks = 4;
  int tcn_hidden = 256;
  int tcn_bottleneck = 128;
  int tcn_kernel = 3;
  std::string mask_activation = "sigmoid";

  void validate() const {
    if (encoder_filters < 1 || encoder_kernel < 1) throw InvalidConfig("bad encoder dimensions");
    if (encoder_stride < 1 || encoder_stride > encoder_kernel)
      throw InvalidConfig("encoder_stride must satisfy 1 <= stride <= kernel");
    if (n_tcn_blocks < 1) throw InvalidConfig("need at least one TCN block");
    if (tcn_hidden < 1 || tcn_bottleneck < 1) throw InvalidConfig("bad TCN widths");
    if (tcn_kernel < 3 || tcn_kernel % 2 == 0) throw InvalidConfig("tcn_kernel must be odd and >= 3");
    if (mask_activation != "sigmoid") throw InvalidConfig("unsupported mask activation");
  }

  int dilation(int block_index_1based) const { return 1 << (block_index_1based - 1); }

  // Receptive field of the TCN stack in encoder frames:
  // 1 + (k-1) * sum_i 2^(i-1) = 1 + (k-1) * (2^m - 1).
  int64_t tcn_receptive_frames() const {
    return 1 + static_cast<int64_t>(tcn_kernel - 1) * ((1LL << n_tcn_blocks) - 1);
  }

  nlohmann::json to_json() const {
    return {{"encoder_filters", encoder_filters},
            {"encoder_kernel", encoder_kernel},
            {"encoder_stride", encoder_stride},
            {"n_tcn_blocks", n_tcn_blocks},
            {"tcn_hidden", tcn_hidden},
            {"tcn_bottleneck", tcn_bottleneck},
            {"tcn_kernel", tcn_kernel},
            {"mask_activation", mask_activation}};
  }
  static SeConfig from_json(const nlohmann::json& j) {
    SeConfig c;
    c.encoder_filters = j.value("encoder_filters", c.encoder_filters);
    c.encoder_kernel = j.value("encoder_kernel", c.encoder_kernel);
    c.encoder_stride = j.value("encoder_stride", c.encoder_stride);
    c.n_tcn_blocks = j.value("n_tcn_blocks", c.n_tcn_blocks);
    c.tcn_hidden = j.value("tcn_hidden", c.tcn_hidden);
    c.tcn_bottleneck = j.value("tcn_bottleneck", c.tcn_bottleneck);
    c.tcn_kernel = j.value("tcn_kernel", c.tcn_kernel);
    c.mask_activation = j.value("mask_activation", c.mask_activation);
    return c;
  }
};

class SeNetwork {
 public:
  SeNetwork(SeConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, "senet-init"));
    const int N = cfg_.encoder_filters, B = cfg_.tcn_bottleneck, H = cfg_.tcn_hidden;
    const int K = cfg_.encoder_kernel, k = cfg_.tcn_kernel;

    auto kaiming = [&](std::vector<int64_t> shape, int64_t fan_in) {
      return nn::normal_init(std::move(shape), rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
    };

    enc_w_ = params_.create("encoder.w", kaiming({N, 1, K}, K));
    enc_b_ = params_.create("encoder.b", nn::zeros_init({N}));
    in_ng_ = params_.create("input_norm.gain", nn::ones_init({N}));
    in_nb_ = params_.create("input_norm.bias", nn::zeros_init({N}));
    entry_w_ = params_.create("entry.w", kaiming({B, N, 1}, N));
    entry_b_ = params_.create("entry.b", nn::zeros_init({B}));

    for (int i = 1; i <= cfg_.n_tcn_blocks; ++i) {
      const std::string p = "tcn" + std::to_string(i);
      Block blk;
      blk.pw1_w = params_.create(p + ".pw1.w", kaiming({H, B, 1}, B));
      blk.pw1_b = params_.create(p + ".pw1.b", nn::zeros_init({H}));
      blk.ng1 = params_.create(p + ".norm1.gain", nn::ones_init({H}));
      blk.nb1 = params_.create(p + ".norm1.bias", nn::zeros_init({H}));
      blk.dw_w = params_.create(p + ".dw.w", kaiming({H, k}, k));
      blk.dw_b = params_.create(p + ".dw.b", nn::zeros_init({H}));
      blk.ng2 = params_.create(p + ".norm2.gain", nn::ones_init({H}));
      blk.nb2 = params_.create(p + ".norm2.bias", nn::zeros_init({H}));
      blk.pw2_w = params_.create(p + ".pw2.w", kaiming({B, H, 1}, H));
      blk.pw2_b = params_.create(p + ".pw2.b", nn::zeros_init({B}));
      blocks_.push_back(blk);
    }

    mask_w_ = params_.create("mask.w", kaiming({N, B, 1}, B));
    mask_b_ = params_.create("mask.b", nn::zeros_init({N}));
    dec_w_ = params_.create("decoder.w", kaiming({N, 1, K}, N * K / cfg_.encoder_stride));
    dec_b_ = params_.create("decoder.b", nn::zeros_init({1}));
  }

  const SeConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  // waveform [T] (or [1, T]) -> enhanced [1, T]; output length equals input
  // length. identity_mask is a test hook that bypasses the TCN mask (pure
  // encoder/decoder path).
  ad::Value forward(const ad::Value& input, bool identity_mask = false) const {
    ad::Value x = input;
    if (x->val.rank() == 1) x = ad::reshape(x, {1, x->val.dim(0)});
    if (x->val.rank() != 2 || x->val.dim(0) != 1)
      throw ShapeError("se network expects a mono waveform [1, T]");
    const int64_t T = x->val.dim(1);
    const int64_t K = cfg_.encoder_kernel, S = cfg_.encoder_stride;
    if (T < K) throw InputTooShort("waveform shorter than the encoder kernel");

    // Right-pad so the frame grid covers the signal, then trim after decoding.
    const int64_t frames = (T - K + S - 1) / S + 1;
    const int64_t padded = (frames - 1) * S + K;
    ad::Value xp = padded > T ? ad::pad_cols_right(x, padded - T) : x;

    ad::Value latent = ad::conv1d(xp, enc_w_, enc_b_, S, 0);  // [N, frames]
    ad::Value masked = identity_mask ? latent : ad::mul(compute_mask(latent), latent);
    ad::Value out = ad::conv_transpose1d(masked, dec_w_, dec_b_, S, 0, padded);
    if (padded > T) out = ad::slice_cols(out, 0, T);
    return out;
  }

  // The mask alone, for range checks. [N, frames] in [0, 1].
  ad::Value mask_for(const ad::Value& input) const {
    ad::Value x = input;
    if (x->val.rank() == 1) x = ad::reshape(x, {1, x->val.dim(0)});
    const int64_t T = x->val.dim(1);
    const int64_t K = cfg_.encoder_kernel, S = cfg_.encoder_stride;
    if (T < K) throw InputTooShort("waveform shorter than the encoder kernel");
    const int64_t frames = (T - K + S - 1) / S + 1;
    const int64_t padded = (frames - 1) * S + K;
    ad::Value xp = padded > T ? ad::pad_cols_right(x, padded - T) : x;
    return compute_mask(ad::conv1d(xp, enc_w_, enc_b_, S, 0));
  }

 private:
  struct Block {
    ad::Value pw1_w, pw1_b, ng1, nb1, dw_w, dw_b, ng2, nb2, pw2_w, pw2_b;
  };

  ad::Value compute_mask(const ad::Value& latent) const {
    ad::Value h = ad::frame_norm1d(latent, in_ng_, in_nb_);
    h = ad::conv1d(h, entry_w_, entry_b_, 1, 0);  // [B, frames]
    for (int i = 1; i <= cfg_.n_tcn_blocks; ++i) {
      const Block& blk = blocks_[static_cast<size_t>(i - 1)];
      const int64_t dil = cfg_.dilation(i);
      ad::Value r = ad::conv1d(h, blk.pw1_w, blk.pw1_b, 1, 0);
      r = ad::frame_norm1d(ad::relu(r), blk.ng1, blk.nb1);
      r = ad::conv1d_depthwise(r, blk.dw_w, blk.dw_b, dil * (cfg_.tcn_kernel - 1) / 2, dil);
      r = ad::frame_norm1d(ad::relu(r), blk.ng2, blk.nb2);
      r = ad::conv1d(r, blk.pw2_w, blk.pw2_b, 1, 0);
      h = ad::add(h, r);
    }
    return ad::sigmoid(ad::conv1d(h, mask_w_, mask_b_, 1, 0));
  }

  SeConfig cfg_;
  nn::ParamSet params_;
  ad::Value enc_w_, enc_b_, in_ng_, in_nb_, entry_w_, entry_b_;
  std::vector<Block> blocks_;
  ad::Value mask_w_, mask_b_, dec_w_, dec_b_;
};

// Differentiable -SI-SDR of an estimate against a fixed reference. The value
// path mirrors dsp::si_sdr operation for operation (same guards, same cap), so
// -si_sdr_loss(e, r) == dsp::si_sdr(e, r) for all inputs.
inline ad::Value si_sdr_loss(const ad::Value& estimate, const Tensor& reference,
                             bool zero_mean = false) {
  ad::Value e = estimate;
  if (e->val.rank() == 2 && e->val.dim(0) == 1) e = ad::reshape(e, {e->val.dim(1)});
  if (e->val.rank() != 1) throw ShapeError("si_sdr_loss expects a 1-D estimate");
  if (reference.rank() != 1 || reference.numel() != e->val.numel())
    throw LengthMismatch("estimate and reference differ in length");
  auto r = ad::constant(reference);
  if (zero_mean) {
    e = ad::sub(e, ad::mean(e));
    r = ad::sub(r, ad::mean(r));
  }
  auto dot_rr = ad::dot(r, r);
  if (ad::item(dot_rr) <= 1e-300) throw ZeroReference("reference has zero energy");
  auto alpha = ad::div(ad::dot(e, r), dot_rr);
  auto target = ad::mul(r, alpha);
  auto resid = ad::sub(target, e);
  auto ratio = ad::div(ad::dot(target, target), ad::add_const(ad::dot(resid, resid), 1e-300));
  auto val = ad::scale(ad::log10_guarded(ad::add_const(ratio, 1e-300)), 10.0);
  return ad::neg(ad::clamp(val, -dsp::kSiSdrCapDb, dsp::kSiSdrCapDb));
}

inline ad::Value si_sdr_loss_batch(const std::vector<ad::Value>& estimates,
                                   const std::vector<Tensor>& references, bool zero_mean = false) {
  if (estimates.empty() || estimates.size() != references.size())
    throw LengthMismatch("batch size mismatch in si_sdr_loss_batch");
  ad::Value acc;
  for (size_t i = 0; i < estimates.size(); ++i) {
    auto l = si_sdr_loss(estimates[i], references[i], zero_mean);
    acc = acc ? ad::add(acc, l) : l;
  }
  return ad::scale(acc, 1.0 / static_cast<double>(estimates.size()));
}

}  // namespace una::senet
