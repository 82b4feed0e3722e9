// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fd_check.hpp"
#include "una/se_train.hpp"

using namespace una;
using namespace una::senet;

namespace {

SeConfig mini_config() {
  SeConfig c;
  c.encoder_filters = 16;
  c.encoder_kernel = 16;
  c.encoder_stride = 8;
  c.n_tcn_blocks = 2;
  c.tcn_hidden = 12;
  c.tcn_bottleneck = 8;
  return c;
}

Tensor random_wave_tensor(int64_t n, uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  Tensor t({n});
  for (auto& v : t.vec()) v = rng.normal(0.0, scale);
  return t;
}

std::vector<double> to_vec(const Tensor& t) { return t.vec(); }

}  // namespace

TEST_CASE("se network: output length equals input length") {
  SeNetwork net(mini_config(), 5);
  ad::NoGradGuard guard;
  for (int64_t n : {1024LL, 16000LL, 16001LL}) {
    auto y = net.forward(ad::constant(random_wave_tensor(n, 7)));
    REQUIRE(y->val.shape() == std::vector<int64_t>{1, n});
  }
}

TEST_CASE("se network: too-short input is rejected") {
  SeNetwork net(mini_config(), 5);
  REQUIRE_THROWS_AS(net.forward(ad::constant(random_wave_tensor(8, 1))), InputTooShort);
}

TEST_CASE("se network: mask values lie in [0, 1]") {
  SeNetwork net(mini_config(), 6);
  ad::NoGradGuard guard;
  auto mask = net.mask_for(ad::constant(random_wave_tensor(4000, 9)));
  REQUIRE(mask->val.dim(0) == 16);
  for (double v : mask->val.vec()) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
}

TEST_CASE("si_sdr_loss mirrors the plain metric exactly") {
  for (uint64_t seed : {1u, 2u, 3u, 4u}) {
    auto est = random_wave_tensor(500, seed);
    auto ref = random_wave_tensor(500, seed + 100);
    for (bool zm : {false, true}) {
      const double metric = dsp::si_sdr(to_vec(est), to_vec(ref), zm);
      const double loss = ad::item(si_sdr_loss(ad::constant(est), ref, zm));
      REQUIRE(-loss == metric);  // same arithmetic, bit for bit
    }
  }
  SECTION("cap cases") {
    auto ref = random_wave_tensor(300, 11);
    Tensor scaled = ref;
    for (auto& v : scaled.vec()) v *= 3.0;
    REQUIRE(ad::item(si_sdr_loss(ad::constant(ref), ref)) == -dsp::kSiSdrCapDb);
    REQUIRE(ad::item(si_sdr_loss(ad::constant(scaled), ref)) == -dsp::kSiSdrCapDb);
  }
  SECTION("hand case: s=[1,0], shat=[1,1] gives loss 0") {
    Tensor ref({2}, {1.0, 0.0});
    Tensor est({2}, {1.0, 1.0});
    REQUIRE(ad::item(si_sdr_loss(ad::constant(est), ref)) == Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("error contracts") {
    Tensor ref({3});
    REQUIRE_THROWS_AS(si_sdr_loss(ad::constant(random_wave_tensor(3, 1)), ref), ZeroReference);
    REQUIRE_THROWS_AS(
        si_sdr_loss(ad::constant(random_wave_tensor(4, 1)), random_wave_tensor(3, 2)),
        LengthMismatch);
  }
}

TEST_CASE("si_sdr_loss gradients through the full miniature network") {
  SeConfig cfg;
  cfg.encoder_filters = 8;
  cfg.encoder_kernel = 16;
  cfg.encoder_stride = 8;
  cfg.n_tcn_blocks = 1;
  cfg.tcn_hidden = 8;
  cfg.tcn_bottleneck = 8;
  SeNetwork net(cfg, 17);
  auto noisy = ad::constant(random_wave_tensor(400, 21));
  auto clean = random_wave_tensor(400, 22);

  auto loss = [&] { return si_sdr_loss(net.forward(noisy), clean); };
  Rng pick(3);
  auto report = testutil::fd_check_sampled(net.params().values(), loss, pick, 16, 1e-6, 1e-3);
  INFO("checked " << report.checked << " params, worst rel " << report.worst_rel);
  REQUIRE(report.checked >= 200);
  REQUIRE(report.failures == 0);
}

TEST_CASE("tcn receptive field matches the closed form via gradient footprint") {
  SeConfig cfg = mini_config();
  cfg.n_tcn_blocks = 4;
  // Closed form: 1 + (k-1) * (2^m - 1) frames.
  REQUIRE(cfg.tcn_receptive_frames() == 31);
  cfg.n_tcn_blocks = 2;
  REQUIRE(cfg.tcn_receptive_frames() == 7);

  cfg.n_tcn_blocks = 4;
  SeNetwork net(cfg, 23);
  const int64_t T = 1024;
  auto x = ad::param(random_wave_tensor(T, 31));
  auto mask = net.mask_for(x);
  const int64_t frames = mask->val.dim(1);
  const int64_t t0 = frames / 2;
  Tensor pick(mask->val.shape());
  pick.at(0, t0) = 1.0;
  auto scalar = ad::dot(mask, ad::constant(pick));
  x->grad_alloc = false;
  ad::backward(scalar);

  // Frame t covers samples [8t, 8t+15]; the mask frame t0 sees latent frames
  // [t0-15, t0+15], hence exactly (31-1)*8 + 16 = 256 samples.
  int64_t lo = T, hi = -1;
  for (int64_t i = 0; i < T; ++i)
    if (x->grad[i] != 0.0) {
      lo = std::min(lo, i);
      hi = std::max(hi, i);
    }
  REQUIRE(lo == (t0 - 15) * 8);
  REQUIRE(hi == (t0 + 15) * 8 + 15);
  REQUIRE(hi - lo + 1 == (cfg.tcn_receptive_frames() - 1) * 8 + 16);
}

TEST_CASE("identity-mask path reconstructs after brief autoencoder pretraining") {
  SeConfig cfg;
  cfg.encoder_filters = 32;
  cfg.encoder_kernel = 16;
  cfg.encoder_stride = 8;
  cfg.n_tcn_blocks = 1;
  cfg.tcn_hidden = 8;
  cfg.tcn_bottleneck = 8;
  SeNetwork net(cfg, 29);

  std::vector<Tensor> fixture;
  for (uint64_t s : {1u, 2u}) fixture.push_back(random_wave_tensor(4000, s));

  std::vector<ad::Value> enc_dec = {net.params().find("encoder.w"), net.params().find("encoder.b"),
                                    net.params().find("decoder.w"), net.params().find("decoder.b")};
  nn::Adam adam(enc_dec, 2e-3);
  Rng rng(31);
  for (int step = 0; step < 300; ++step) {
    const auto& wav = fixture[rng.uniform_int(fixture.size())];
    adam.zero_grad();
    auto loss = si_sdr_loss(net.forward(ad::constant(wav), /*identity_mask=*/true), wav);
    ad::backward(loss);
    adam.step();
  }
  double worst = 1e9;
  for (const auto& wav : fixture) {
    ad::NoGradGuard guard;
    auto rec = net.forward(ad::constant(wav), true);
    worst = std::min(worst, dsp::si_sdr(rec->val.vec(), wav.vec()));
  }
  INFO("autoencoder reconstruction SI-SDR " << worst << " dB");
  REQUIRE(worst > 10.0);
}

TEST_CASE("train_se: deterministic histories, empty pool rejected") {
  SeTrainConfig cfg;
  cfg.net = mini_config();
  cfg.steps = 12;
  cfg.batch_size = 2;
  cfg.excerpt_seconds = 0.05;  // 800 samples at 16 kHz

  std::vector<SePair> pairs;
  Rng rng(41);
  for (int i = 0; i < 3; ++i) {
    SePair p;
    p.id = "pair-" + std::to_string(i);
    p.clean.resize(2400);
    p.noisy.resize(2400);
    for (size_t j = 0; j < p.clean.size(); ++j) {
      p.clean[j] = 0.3 * std::sin(2.0 * M_PI * 220.0 * (i + 1) * static_cast<double>(j) / 16000.0);
      p.noisy[j] = p.clean[j] + 0.2 * rng.normal();
    }
    pairs.push_back(p);
  }

  auto r1 = train_se(pairs, cfg, 99);
  auto r2 = train_se(pairs, cfg, 99);
  REQUIRE(r1.completed_steps == 12);
  REQUIRE_FALSE(r1.aborted);
  REQUIRE(r1.history.size() == 12);
  for (size_t i = 0; i < r1.history.size(); ++i) {
    REQUIRE(std::isfinite(r1.history[i].loss));
    REQUIRE(r1.history[i].loss == r2.history[i].loss);
  }
  REQUIRE(r1.checkpoint.kind == "senet");
  REQUIRE(r1.checkpoint.provenance == "baseline");
  REQUIRE(r1.checkpoint.step == 12);

  REQUIRE_THROWS_AS(train_se({}, cfg, 1), EmptyPool);

  SECTION("finetune: zero steps is a parameter no-op with recorded parentage") {
    SeTrainConfig ft = cfg;
    ft.steps = 0;
    auto adapted = finetune_se(r1.checkpoint, pairs, ft, 7);
    REQUIRE(adapted.checkpoint.provenance == "adapted");
    REQUIRE(adapted.checkpoint.parent_fingerprint == ckpt::content_fingerprint(r1.checkpoint));
    REQUIRE(adapted.checkpoint.tensors.size() == r1.checkpoint.tensors.size());
    for (size_t i = 0; i < adapted.checkpoint.tensors.size(); ++i)
      REQUIRE(adapted.checkpoint.tensors[i].second.vec() == r1.checkpoint.tensors[i].second.vec());
  }
  SECTION("finetune: mismatched config is rejected") {
    SeTrainConfig other = cfg;
    other.net.tcn_hidden = 24;
    REQUIRE_THROWS_AS(finetune_se(r1.checkpoint, pairs, other, 7), IncompatibleCheckpoint);
  }
  SECTION("finetune on the same pairs keeps training healthy") {
    SeTrainConfig ft = cfg;
    ft.steps = 8;
    auto adapted = finetune_se(r1.checkpoint, pairs, ft, 7);
    REQUIRE(adapted.completed_steps == 8);
    for (const auto& h : adapted.history) REQUIRE(std::isfinite(h.loss));
  }
  SECTION("enhance helper preserves length and rate") {
    auto net = load_se_network(r1.checkpoint);
    dsp::Waveform w;
    w.sample_rate = 16000;
    w.samples.assign(1600, 0.0);
    for (size_t i = 0; i < w.samples.size(); ++i)
      w.samples[i] = 0.2 * std::sin(2.0 * M_PI * 300.0 * static_cast<double>(i) / 16000.0);
    auto out = senet::enhance(net, w);
    REQUIRE(out.samples.size() == w.samples.size());
    REQUIRE(out.sample_rate == 16000);
  }
}
