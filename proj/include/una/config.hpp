// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "una/pipeline.hpp"
#include "una/synth.hpp"

namespace una::cli {

// Declarative run configuration: one JSON document with per-stage sections.
// Every field is optional and defaults to the published configuration
// (129x128 segments, 9 ResNet blocks, 3 attention layers, alpha = beta = 1,
// learning rates 0.002 / 0.001, 4 TCN blocks). Unknown keys are rejected with
// their dotted path; the resolved document is echoed into the workspace.
class RunConfig {
 public:
  static nlohmann::json defaults() {
    return {
        {"corpus",
         {{"manifest", ""},
          {"target_eval", ""},
          {"source_eval", ""},
          {"labeled_target", ""},
          {"synth",
           {{"n_source_clean", 8},
            {"n_target", 4},
            {"n_target_test", 4},
            {"n_source_test", 2},
            {"duration_s", 1.0},
            {"sample_rate", 16000},
            {"source_noises", nlohmann::json::array({"white"})},
            {"target_noises", nlohmann::json::array({"rotor"})},
            {"source_snr_grid", nlohmann::json::array({0.0, 6.0})},
            {"target_snr_grid", nlohmann::json::array({-3.0})}}},
          {"mix",
           {{"clean_manifest", ""},
            {"noise_paths", nlohmann::json::object()},
            {"noise_types", nlohmann::json::array()},
            {"snr_grid", nlohmann::json::array({-6.0, 0.0, 6.0, 12.0})},
            {"domain", "source"},
            {"out_dir", "mixed"}}}}},
        {"stft",
         {{"fft_size", 256}, {"hop", 64}, {"window", "hann"}, {"center_padding", true}}},
        {"ugan",
         {{"n_resnet_blocks", 9},
          {"n_attention_layers", 3},
          {"n_downsample", 2},
          {"base_channels", 64},
          {"dropout_rate", 0.5},
          {"norm", "instance"},
          {"disc_base_channels", 64},
          {"leaky_slope", 0.2},
          {"n_patches", 256},
          {"temperature", 0.07},
          {"nce_layers",
           nlohmann::json::array({"input", "downsample-1", "downsample-2", "resblock-1",
                                  "resblock-5"})},
          {"projection_width", 256},
          {"normalize_embeddings", true},
          {"alpha", 1.0},
          {"beta", 1.0},
          {"adv_mode", "minimax"},
          {"lr", 0.002},
          {"adam_beta1", 0.5},
          {"adam_beta2", 0.999},
          {"batch_size", 8},
          {"steps", 2000},
          {"checkpoint_interval", 0},
          {"segment_width", 128}}},
        {"senet",
         {{"encoder_filters", 256},
          {"encoder_kernel", 16},
          {"encoder_stride", 8},
          {"n_tcn_blocks", 4},
          {"tcn_hidden", 256},
          {"tcn_bottleneck", 128},
          {"tcn_kernel", 3},
          {"mask_activation", "sigmoid"},
          {"lr", 0.001},
          {"adam_beta1", 0.9},
          {"adam_beta2", 0.999},
          {"batch_size", 4},
          {"clip_norm", 5.0},
          {"excerpt_seconds", 1.0},
          {"steps", 2000},
          {"finetune_steps", 2000},
          {"finetune_lr", 0.001},
          {"checkpoint_interval", 0}}},
        {"pipeline",
         {{"n_t", 4}, {"phase_policy", "reuse-clean-phase"}, {"griffin_lim_iters", 32}}},
        {"eval", {{"pesq_command", ""}, {"pesq_tool_label", ""}}}};
  }

  // Deep-merges `user` over the defaults; any key absent from the defaults is
  // a config error reported with its dotted path. A default that is an empty
  // object (e.g. mix.noise_paths) accepts arbitrary keys.
  static RunConfig from_json(const nlohmann::json& user) {
    RunConfig cfg;
    cfg.resolved_ = defaults();
    merge(cfg.resolved_, user, "");
    return cfg;
  }

  static RunConfig load(const std::string& path) {
    if (path.empty()) return from_json(nlohmann::json::object());
    std::ifstream f(path);
    if (!f) throw IngestError("cannot open config file: " + path);
    nlohmann::json user = nlohmann::json::parse(f, nullptr, false);
    if (user.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
    return from_json(user);
  }

  const nlohmann::json& resolved() const { return resolved_; }

  void echo_to(const std::string& workspace) const {
    namespace fs = std::filesystem;
    fs::create_directories(workspace);
    std::ofstream f((fs::path(workspace) / "resolved_config.json").string(), std::ios::trunc);
    if (!f) throw IoError("cannot echo resolved config into workspace");
    f << resolved_.dump(2) << "\n";
  }

  dsp::StftConfig stft() const {
    const auto& s = resolved_.at("stft");
    dsp::StftConfig c;
    c.fft_size = s.at("fft_size").get<int>();
    c.hop = s.at("hop").get<int>();
    c.window = dsp::window_from_name(s.at("window").get<std::string>());
    c.center_padding = s.at("center_padding").get<bool>();
    c.validate();
    return c;
  }

  ugan::UganTrainConfig ugan_train() const {
    const auto& u = resolved_.at("ugan");
    ugan::UganTrainConfig c;
    c.generator.n_resnet_blocks = u.at("n_resnet_blocks").get<int>();
    c.generator.n_attention_layers = u.at("n_attention_layers").get<int>();
    c.generator.n_downsample = u.at("n_downsample").get<int>();
    c.generator.base_channels = u.at("base_channels").get<int>();
    c.generator.dropout_rate = u.at("dropout_rate").get<double>();
    c.generator.norm = u.at("norm").get<std::string>();
    c.generator.input_height = stft().bins();
    c.discriminator.base_channels = u.at("disc_base_channels").get<int>();
    c.discriminator.leaky_slope = u.at("leaky_slope").get<double>();
    c.discriminator.input_height = c.generator.input_height;
    c.nce.n_patches = u.at("n_patches").get<int>();
    c.nce.temperature = u.at("temperature").get<double>();
    c.nce.nce_layers = u.at("nce_layers").get<std::vector<std::string>>();
    c.nce.projection_width = u.at("projection_width").get<int>();
    c.nce.normalize_embeddings = u.at("normalize_embeddings").get<bool>();
    c.weights.alpha = u.at("alpha").get<double>();
    c.weights.beta = u.at("beta").get<double>();
    c.adv_mode = u.at("adv_mode").get<std::string>();
    c.lr = u.at("lr").get<double>();
    c.adam_beta1 = u.at("adam_beta1").get<double>();
    c.adam_beta2 = u.at("adam_beta2").get<double>();
    c.batch_size = u.at("batch_size").get<int>();
    c.steps = u.at("steps").get<int64_t>();
    c.checkpoint_interval = u.at("checkpoint_interval").get<int64_t>();
    return c;
  }

  int64_t segment_width() const { return resolved_.at("ugan").at("segment_width").get<int64_t>(); }

  senet::SeTrainConfig se_train(bool finetune) const {
    const auto& s = resolved_.at("senet");
    senet::SeTrainConfig c;
    c.net.encoder_filters = s.at("encoder_filters").get<int>();
    c.net.encoder_kernel = s.at("encoder_kernel").get<int>();
    c.net.encoder_stride = s.at("encoder_stride").get<int>();
    c.net.n_tcn_blocks = s.at("n_tcn_blocks").get<int>();
    c.net.tcn_hidden = s.at("tcn_hidden").get<int>();
    c.net.tcn_bottleneck = s.at("tcn_bottleneck").get<int>();
    c.net.tcn_kernel = s.at("tcn_kernel").get<int>();
    c.net.mask_activation = s.at("mask_activation").get<std::string>();
    c.lr = finetune ? s.at("finetune_lr").get<double>() : s.at("lr").get<double>();
    c.adam_beta1 = s.at("adam_beta1").get<double>();
    c.adam_beta2 = s.at("adam_beta2").get<double>();
    c.batch_size = s.at("batch_size").get<int>();
    c.clip_norm = s.at("clip_norm").get<double>();
    c.excerpt_seconds = s.at("excerpt_seconds").get<double>();
    c.steps = finetune ? s.at("finetune_steps").get<int64_t>() : s.at("steps").get<int64_t>();
    c.checkpoint_interval = s.at("checkpoint_interval").get<int64_t>();
    return c;
  }

  synth::SyntheticSpec synth_spec(const std::string& root_dir) const {
    const auto& s = resolved_.at("corpus").at("synth");
    synth::SyntheticSpec spec;
    spec.root_dir = root_dir;
    spec.n_source_clean = s.at("n_source_clean").get<int>();
    spec.n_target = s.at("n_target").get<int>();
    spec.n_target_test = s.at("n_target_test").get<int>();
    spec.n_source_test = s.at("n_source_test").get<int>();
    spec.duration_s = s.at("duration_s").get<double>();
    spec.sample_rate = s.at("sample_rate").get<int>();
    spec.source_noises = s.at("source_noises").get<std::vector<std::string>>();
    spec.target_noises = s.at("target_noises").get<std::vector<std::string>>();
    spec.source_snr_grid = s.at("source_snr_grid").get<std::vector<double>>();
    spec.target_snr_grid = s.at("target_snr_grid").get<std::vector<double>>();
    return spec;
  }

  pipeline::StageConfigs stage_configs() const {
    pipeline::StageConfigs c;
    c.stft = stft();
    c.segment_width = segment_width();
    c.se_baseline = se_train(false);
    c.ugan = ugan_train();
    c.se_finetune = se_train(true);
    c.phase_policy = resolved_.at("pipeline").at("phase_policy").get<std::string>();
    c.griffin_lim_iters = resolved_.at("pipeline").at("griffin_lim_iters").get<int>();
    return c;
  }

  int64_t n_t() const { return resolved_.at("pipeline").at("n_t").get<int64_t>(); }

  evalkit::PesqAdapter pesq_adapter() const {
    evalkit::PesqAdapter a;
    a.command_template = resolved_.at("eval").at("pesq_command").get<std::string>();
    a.tool_label = resolved_.at("eval").at("pesq_tool_label").get<std::string>();
    return a;
  }

  std::string corpus_path(const std::string& key) const {
    return resolved_.at("corpus").at(key).get<std::string>();
  }

 private:
  static void merge(nlohmann::json& base, const nlohmann::json& user, const std::string& path) {
    if (!user.is_object())
      throw ConfigError("config section " + (path.empty() ? "<root>" : path) +
                        " must be an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
      const std::string child = path.empty() ? it.key() : path + "." + it.key();
      if (!base.contains(it.key())) throw ConfigError("unknown config key: " + child);
      auto& slot = base[it.key()];
      if (slot.is_object() && !slot.empty()) {
        merge(slot, it.value(), child);
      } else if (slot.is_object() && slot.empty()) {
        // Open map (user-defined keys, e.g. noise name -> path).
        if (!it.value().is_object()) throw ConfigError("config key " + child + " must be an object");
        slot = it.value();
      } else {
        if (slot.type() != it.value().type() &&
            !(slot.is_number() && it.value().is_number()))
          throw ConfigError("config key " + child + " has the wrong type");
        slot = it.value();
      }
    }
  }

  nlohmann::json resolved_;
};

}  // namespace una::cli
