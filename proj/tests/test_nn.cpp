// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "una/checkpoint.hpp"
#include "una/nn.hpp"

using namespace una;

TEST_CASE("param set rejects duplicates and finds by name") {
  nn::ParamSet ps;
  auto a = ps.create("a", Tensor::scalar(1.0));
  REQUIRE_THROWS_AS(ps.create("a", Tensor::scalar(2.0)), ConfigError);
  REQUIRE(ps.find("a") == a);
  REQUIRE(ps.find("b") == nullptr);
  REQUIRE(ps.total_size() == 1);
}

TEST_CASE("adam minimizes a quadratic") {
  auto x = ad::param(Tensor({3}, {5.0, -4.0, 2.5}));
  nn::Adam adam({x}, 0.1);
  for (int i = 0; i < 400; ++i) {
    adam.zero_grad();
    auto loss = ad::dot(x, x);
    ad::backward(loss);
    adam.step();
  }
  for (double v : x->val.vec()) REQUIRE(std::abs(v) < 1e-3);
}

TEST_CASE("gradient clipping caps the global norm") {
  auto x = ad::param(Tensor({2}, {3.0, 4.0}));
  nn::Adam adam({x}, 0.1);
  adam.zero_grad();
  auto loss = ad::scale(ad::dot(x, x), 10.0);  // grad = 20x, norm = 100
  ad::backward(loss);
  const double pre = adam.clip_global_norm(5.0);
  REQUIRE(pre == Catch::Approx(100.0).epsilon(1e-9));
  double sq = 0.0;
  for (double g : x->grad.vec()) sq += g * g;
  REQUIRE(std::sqrt(sq) == Catch::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("dropout scales by keep probability and is identity in eval mode") {
  Rng rng(7);
  auto x = ad::constant(Tensor::full({1000}, 1.0));
  auto y = nn::dropout(x, 0.5, true, rng);
  int64_t kept = 0;
  for (double v : y->val.vec()) {
    REQUIRE((v == 0.0 || v == 2.0));
    if (v != 0.0) ++kept;
  }
  REQUIRE(kept > 400);
  REQUIRE(kept < 600);
  auto z = nn::dropout(x, 0.5, false, rng);
  REQUIRE(z == x);
}

TEST_CASE("checkpoint container round-trips bit-exactly") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "una_test_ckpt";
  fs::create_directories(dir);
  const auto path = (dir / "net.ckpt").string();

  nn::ParamSet ps;
  Rng rng(3);
  ps.create("w", nn::normal_init({4, 3}, rng, 1.0));
  ps.create("b", nn::normal_init({3}, rng, 1.0));
  nn::Adam adam(ps.values(), 0.01);
  // Take one step so the moments are nonzero.
  adam.zero_grad();
  auto loss = ad::sum(ad::square(ps.find("w")));
  ad::backward(loss);
  adam.step();

  nlohmann::json cfg = {{"width", 3}, {"depth", 4}};
  auto snap = ckpt::snapshot("senet", cfg, ps, &adam, 17, "baseline");
  ckpt::save_checkpoint(path, snap);
  auto loaded = ckpt::load_checkpoint(path);

  REQUIRE(loaded.kind == "senet");
  REQUIRE(loaded.step == 17);
  REQUIRE(loaded.provenance == "baseline");
  REQUIRE(loaded.config == cfg);
  REQUIRE(loaded.config_fingerprint == ckpt::config_fingerprint(cfg));
  REQUIRE(loaded.tensors.size() == 2);
  for (size_t i = 0; i < snap.tensors.size(); ++i) {
    REQUIRE(loaded.tensors[i].first == snap.tensors[i].first);
    REQUIRE(loaded.tensors[i].second.vec() == snap.tensors[i].second.vec());
  }
  REQUIRE(loaded.has_optimizer);
  REQUIRE(loaded.optimizer_step == 1);
  for (size_t i = 0; i < snap.opt_m.size(); ++i) {
    REQUIRE(loaded.opt_m[i].vec() == snap.opt_m[i].vec());
    REQUIRE(loaded.opt_v[i].vec() == snap.opt_v[i].vec());
  }
  REQUIRE(ckpt::content_fingerprint(loaded) == ckpt::content_fingerprint(snap));

  SECTION("restore places values back into a fresh set") {
    nn::ParamSet fresh;
    Rng rng2(99);
    fresh.create("w", nn::normal_init({4, 3}, rng2, 1.0));
    fresh.create("b", nn::normal_init({3}, rng2, 1.0));
    ckpt::restore_params(loaded, fresh);
    REQUIRE(fresh.find("w")->val.vec() == ps.find("w")->val.vec());
  }
  SECTION("shape mismatch is rejected") {
    nn::ParamSet wrong;
    wrong.create("w", Tensor({4, 2}));
    wrong.create("b", Tensor({3}));
    REQUIRE_THROWS_AS(ckpt::restore_params(loaded, wrong), IncompatibleCheckpoint);
  }
  SECTION("missing parameter is rejected") {
    nn::ParamSet wrong;
    wrong.create("w2", Tensor({4, 3}));
    wrong.create("b", Tensor({3}));
    REQUIRE_THROWS_AS(ckpt::restore_params(loaded, wrong), IncompatibleCheckpoint);
  }
  fs::remove_all(dir);
}

TEST_CASE("checkpoint loader rejects garbage") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "una_test_ckpt2";
  fs::create_directories(dir);
  const auto path = (dir / "bad.ckpt").string();
  std::FILE* f = std::fopen(path.c_str(), "wb");
  std::fputs("definitely not a checkpoint", f);
  std::fclose(f);
  REQUIRE_THROWS_AS(ckpt::load_checkpoint(path), IncompatibleCheckpoint);
  fs::remove_all(dir);
}
