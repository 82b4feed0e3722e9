// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string cli_bin() {
  const char* env = std::getenv("UNA_CLI_BIN");
  REQUIRE(env != nullptr);
  return env;
}

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = cli_bin() + " " + args + " 2>&1";
  std::FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[512];
  while (std::fgets(buf, sizeof(buf), pipe)) r.output += buf;
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

json toy_config(const fs::path& ws) {
  json cfg;
  cfg["corpus"]["manifest"] = (ws / "corpus" / "manifest.jsonl").string();
  cfg["corpus"]["target_eval"] = (ws / "corpus" / "eval_target.jsonl").string();
  cfg["corpus"]["source_eval"] = (ws / "corpus" / "eval_source.jsonl").string();
  cfg["corpus"]["synth"] = {{"n_source_clean", 3}, {"n_target", 3},      {"n_target_test", 2},
                            {"n_source_test", 1}, {"duration_s", 0.25}};
  cfg["stft"] = {{"fft_size", 64}, {"hop", 16}};
  cfg["ugan"] = {{"base_channels", 6},
                 {"n_resnet_blocks", 2},
                 {"n_attention_layers", 1},
                 {"disc_base_channels", 6},
                 {"n_patches", 8},
                 {"projection_width", 12},
                 {"nce_layers", json::array({"input", "downsample-1", "resblock-1"})},
                 {"steps", 5},
                 {"batch_size", 2},
                 {"segment_width", 32}};
  cfg["senet"] = {{"encoder_filters", 16}, {"tcn_hidden", 12},  {"tcn_bottleneck", 8},
                  {"n_tcn_blocks", 2},     {"steps", 8},        {"finetune_steps", 6},
                  {"excerpt_seconds", 0.1}};
  cfg["pipeline"] = {{"n_t", 2}};
  return cfg;
}

}  // namespace

TEST_CASE("cli: synthetic corpus generation and determinism of adapt") {
  TempDir tmp("una_cli_adapt");
  const auto ws1 = tmp.path / "ws1";
  const auto cfg_path = (tmp.path / "toy.json").string();
  {
    auto cfg = toy_config(ws1);
    std::ofstream(cfg_path) << cfg.dump(2);
  }

  auto synth = run_cli("--config " + cfg_path + " --workspace " + ws1.string() +
                       " --seed 7 synth-corpus");
  INFO(synth.output);
  REQUIRE(synth.exit_code == 0);
  REQUIRE(fs::exists(ws1 / "corpus" / "manifest.jsonl"));
  REQUIRE(fs::exists(ws1 / "resolved_config.json"));

  auto adapt1 = run_cli("--config " + cfg_path + " --workspace " + ws1.string() +
                        " --seed 7 --threads 1 adapt");
  INFO(adapt1.output);
  REQUIRE(adapt1.exit_code == 0);

  // Second run in a fresh workspace, same corpus and seed: identical loss
  // histories and identical report metrics.
  const auto ws2 = tmp.path / "ws2";
  fs::create_directories(ws2);
  auto adapt2 = run_cli("--config " + cfg_path + " --workspace " + ws2.string() +
                        " --seed 7 --threads 1 adapt");
  INFO(adapt2.output);
  REQUIRE(adapt2.exit_code == 0);

  REQUIRE(file_bytes((ws1 / "history" / "ugan.csv").string()) ==
          file_bytes((ws2 / "history" / "ugan.csv").string()));
  REQUIRE(file_bytes((ws1 / "history" / "se_baseline.csv").string()) ==
          file_bytes((ws2 / "history" / "se_baseline.csv").string()));

  auto r1 = json::parse(std::ifstream((ws1 / "reports" / "adaptation_report.json").string()));
  auto r2 = json::parse(std::ifstream((ws2 / "reports" / "adaptation_report.json").string()));
  for (const auto& key : {"baseline_si_sdri", "adapted_si_sdri", "unprocessed_si_sdr"})
    REQUIRE(r1.at(key).get<double>() == r2.at(key).get<double>());

  SECTION("resume skips the training stages") {
    auto resumed = run_cli("--config " + cfg_path + " --workspace " + ws1.string() +
                           " --seed 7 --threads 1 --resume adapt");
    REQUIRE(resumed.exit_code == 0);
    REQUIRE(resumed.output.find("baseline       skipped") != std::string::npos);
    REQUIRE(resumed.output.find("evaluate       ran") != std::string::npos);
  }
}

TEST_CASE("cli: mix subcommand emits the cross product") {
  TempDir tmp("una_cli_mix");
  const auto ws = tmp.path / "ws";
  const auto cfg_path = (tmp.path / "mix.json").string();
  {
    auto cfg = toy_config(ws);
    cfg["corpus"]["synth"]["n_source_clean"] = 2;
    std::ofstream(cfg_path) << cfg.dump(2);
  }
  REQUIRE(run_cli("--config " + cfg_path + " --workspace " + ws.string() + " synth-corpus")
              .exit_code == 0);

  // Noise sources: reuse two generated audio files; 2 cleans x 2 noises x 1
  // SNR = 4 outputs.
  json cfg = json::parse(std::ifstream(cfg_path));
  cfg["corpus"]["mix"] = {
      {"noise_types", json::array({"nA", "nB"})},
      {"noise_paths",
       {{"nA", "audio/tgt_noisy_000__rotor.wav"}, {"nB", "audio/tgt_noisy_001__rotor.wav"}}},
      {"snr_grid", json::array({0.0})},
      {"domain", "source"},
      {"out_dir", "mixed"}};
  const auto cfg2_path = (tmp.path / "mix2.json").string();
  std::ofstream(cfg2_path) << cfg.dump(2);

  auto mix = run_cli("--config " + cfg2_path + " --workspace " + ws.string() + " --seed 3 mix");
  INFO(mix.output);
  REQUIRE(mix.exit_code == 0);
  int wavs = 0;
  for (const auto& e : fs::directory_iterator(ws / "mixed"))
    if (e.path().extension() == ".wav") ++wavs;
  REQUIRE(wavs == 4);
  REQUIRE(fs::exists(ws / "mixed" / "manifest.jsonl"));
  REQUIRE(fs::exists(ws / "mixed" / "mix_report.txt"));
}

TEST_CASE("cli: exit codes and error categories") {
  TempDir tmp("una_cli_errors");
  const auto ws = tmp.path / "ws";

  SECTION("unknown config key exits 2 naming the dotted path") {
    const auto cfg_path = (tmp.path / "bad.json").string();
    std::ofstream(cfg_path) << R"({"ugan": {"alpa": 1}})";
    auto r = run_cli("--config " + cfg_path + " --workspace " + ws.string() + " train-gan");
    REQUIRE(r.exit_code == 2);
    REQUIRE(r.output.find("ugan.alpa") != std::string::npos);
    REQUIRE(r.output.find("ConfigError") != std::string::npos);
  }
  SECTION("missing inputs exit 3") {
    auto r = run_cli("--workspace " + ws.string() + " train-se");
    REQUIRE(r.exit_code == 3);
    REQUIRE(r.output.find("IngestError") != std::string::npos);
  }
  SECTION("missing checkpoint exits 3") {
    auto r = run_cli("--workspace " + ws.string() + " evaluate --checkpoint /nope.ckpt " +
                     "--eval-manifest /nope.jsonl");
    REQUIRE(r.exit_code == 3);
  }
}

TEST_CASE("cli: plot renders a composite figure") {
  TempDir tmp("una_cli_plot");
  const auto ws = tmp.path / "ws";
  const auto cfg_path = (tmp.path / "toy.json").string();
  std::ofstream(cfg_path) << toy_config(ws).dump(2);
  REQUIRE(run_cli("--config " + cfg_path + " --workspace " + ws.string() + " synth-corpus")
              .exit_code == 0);
  auto r = run_cli("--config " + cfg_path + " --workspace " + ws.string() +
                   " plot " + (ws / "corpus" / "audio" / "src_clean_000.wav").string() + " " +
                   (ws / "corpus" / "audio" / "tgt_noisy_000__rotor.wav").string() +
                   " --labels clean,target");
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  REQUIRE(fs::exists(ws / "figures" / "spectrogram.ppm"));
  std::ifstream f((ws / "figures" / "spectrogram.ppm").string(), std::ios::binary);
  std::string magic;
  f >> magic;
  REQUIRE(magic == "P6");
}
