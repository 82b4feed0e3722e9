// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "una/config.hpp"
#include "una/pipeline.hpp"
#include "una/specfig.hpp"

namespace fs = std::filesystem;
using namespace una;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string workspace = "una_workspace";
  uint64_t seed = 0;
  int threads = 1;
  bool resume = false;
};

std::vector<senet::SePair> pairs_from_corpus(const corpus::DomainCorpus& c) {
  std::vector<senet::SePair> pairs;
  for (const auto& r : c.records) {
    if (r.role != corpus::Role::Noisy || r.domain != corpus::Domain::Source) continue;
    io::WavData noisy = io::read_wav(c.resolve(r));
    const auto* clean_rec = c.find(*r.paired_clean_id);
    io::WavData clean = io::read_wav(c.resolve(*clean_rec));
    senet::SePair p;
    p.id = r.id;
    p.noisy = std::move(noisy.samples);
    p.clean = std::move(clean.samples);
    p.sample_rate = noisy.sample_rate;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

corpus::DomainCorpus load_required_manifest(const std::string& path, const std::string& which) {
  if (path.empty()) throw IngestError("config key corpus." + which + " is not set");
  return corpus::load_manifest(path);
}

int run(const GlobalArgs& g, const std::string& command, const cli::RunConfig& cfg,
        const std::map<std::string, std::string>& opts,
        const std::vector<std::string>& plot_inputs, const std::string& plot_labels) {
  cfg.echo_to(g.workspace);
  const fs::path ws(g.workspace);

  if (command == "synth-corpus") {
    auto spec = cfg.synth_spec((ws / "corpus").string());
    auto sc = synth::generate_synthetic_corpus(spec, g.seed);
    std::printf("corpus: %s\n", sc.manifest_path.c_str());
    std::printf("records: %zu (N_S=%lld, N_T=%lld)\n", sc.train.records.size(),
                static_cast<long long>(sc.train.n_source()),
                static_cast<long long>(sc.train.n_target()));
    return 0;
  }

  if (command == "mix") {
    const auto& mix_cfg = cfg.resolved().at("corpus").at("mix");
    const std::string clean_manifest = mix_cfg.at("clean_manifest").get<std::string>().empty()
                                           ? cfg.corpus_path("manifest")
                                           : mix_cfg.at("clean_manifest").get<std::string>();
    auto cleans = load_required_manifest(clean_manifest, "mix.clean_manifest");
    corpus::MixSpec spec;
    for (const auto& r : cleans.records)
      if (r.role == corpus::Role::Clean) spec.clean_ids.push_back(r.id);
    spec.noise_types = mix_cfg.at("noise_types").get<std::vector<std::string>>();
    for (auto it = mix_cfg.at("noise_paths").begin(); it != mix_cfg.at("noise_paths").end(); ++it)
      spec.noise_paths[it.key()] = it.value().get<std::string>();
    spec.snr_grid = mix_cfg.at("snr_grid").get<std::vector<double>>();
    spec.domain_label = corpus::domain_from_name(mix_cfg.at("domain").get<std::string>());
    const std::string out_dir = (ws / mix_cfg.at("out_dir").get<std::string>()).string();
    corpus::MixReport report;
    auto mixed = corpus::materialize_mix(cleans, spec, out_dir, g.seed, &report, g.threads);
    corpus::save_manifest((fs::path(out_dir) / "manifest.jsonl").string(),
                          corpus::rebase(mixed, out_dir));
    corpus::save_mix_report((fs::path(out_dir) / "mix_report.txt").string(), report);
    std::printf("mixed %lld/%lld files into %s (max peak %.3f)\n",
                static_cast<long long>(report.written), static_cast<long long>(report.requested),
                out_dir.c_str(), report.max_peak);
    if (!report.failures.empty()) {
      std::fprintf(stderr, "error: MixFailures: %zu utterances failed; see mix_report.txt\n",
                   report.failures.size());
      return 3;
    }
    return 0;
  }

  if (command == "train-se") {
    auto corpus_data = load_required_manifest(cfg.corpus_path("manifest"), "manifest");
    corpus_data.validate_source_pairs();
    auto pairs = pairs_from_corpus(corpus_data);
    auto result = senet::train_se(pairs, cfg.se_train(false), derive_seed(g.seed, "se-baseline"));
    fs::create_directories(ws / "checkpoints");
    fs::create_directories(ws / "history");
    ckpt::save_checkpoint((ws / "checkpoints" / "baseline.ckpt").string(), result.checkpoint);
    senet::write_se_history((ws / "history" / "se_baseline.csv").string(), result.history);
    if (result.aborted) {
      std::fprintf(stderr, "error: Divergence: training aborted at step %lld; last good state saved\n",
                   static_cast<long long>(result.completed_steps));
      return 1;
    }
    std::printf("baseline checkpoint: %s (%lld steps)\n",
                (ws / "checkpoints" / "baseline.ckpt").string().c_str(),
                static_cast<long long>(result.completed_steps));
    return 0;
  }

  if (command == "train-gan") {
    auto corpus_data = load_required_manifest(cfg.corpus_path("manifest"), "manifest");
    auto train_cfg = cfg.ugan_train();
    corpus::UnpairedSampler sampler(corpus_data, cfg.stft(), cfg.segment_width());
    auto batch_fn = [&](int64_t, Rng& rng) { return sampler.sample(train_cfg.batch_size, rng); };
    auto result = ugan::train_una_gan(batch_fn, train_cfg, derive_seed(g.seed, "ugan"),
                                      (ws / "checkpoints").string());
    fs::create_directories(ws / "history");
    ugan::write_ugan_history((ws / "history" / "ugan.csv").string(), result.history);
    if (result.aborted) {
      std::fprintf(stderr, "error: Divergence: training aborted at step %lld; last good state saved\n",
                   static_cast<long long>(result.completed_steps));
      return 1;
    }
    std::printf("generator checkpoint: %s (%lld steps)\n",
                (ws / "checkpoints" / "generator.ckpt").string().c_str(),
                static_cast<long long>(result.completed_steps));
    return 0;
  }

  if (command == "simulate") {
    const std::string gen_path = opts.count("generator") ? opts.at("generator")
                                                         : (ws / "checkpoints" / "generator.ckpt").string();
    auto gen_ckpt = ckpt::load_checkpoint(gen_path);
    auto corpus_data = load_required_manifest(cfg.corpus_path("manifest"), "manifest");
    const auto& pl = cfg.resolved().at("pipeline");
    auto sim = pipeline::simulate_target_corpus(
        gen_ckpt, corpus_data, cfg.stft(), (ws / "simulated").string(),
        pl.at("phase_policy").get<std::string>(), pl.at("griffin_lim_iters").get<int>(), g.threads);
    std::printf("simulated %zu utterances into %s\n", sim.records.size(),
                (ws / "simulated").string().c_str());
    if (!sim.failures.empty()) {
      std::fprintf(stderr, "error: SimulationFailures: %zu utterances failed\n", sim.failures.size());
      return 3;
    }
    return 0;
  }

  if (command == "finetune") {
    const std::string baseline_path = opts.count("baseline") ? opts.at("baseline")
                                                             : (ws / "checkpoints" / "baseline.ckpt").string();
    const std::string sim_path = opts.count("simulated") ? opts.at("simulated")
                                                         : (ws / "simulated" / "simulated.jsonl").string();
    auto baseline = ckpt::load_checkpoint(baseline_path);
    auto sim = pipeline::load_simulated_manifest(sim_path);
    auto pairs = pipeline::simulated_pairs(sim);
    auto result = senet::finetune_se(baseline, pairs, cfg.se_train(true), derive_seed(g.seed, "ft"));
    fs::create_directories(ws / "checkpoints");
    fs::create_directories(ws / "history");
    ckpt::save_checkpoint((ws / "checkpoints" / "adapted.ckpt").string(), result.checkpoint);
    senet::write_se_history((ws / "history" / "se_finetune.csv").string(), result.history);
    if (result.aborted) {
      std::fprintf(stderr, "error: Divergence: fine-tuning aborted at step %lld\n",
                   static_cast<long long>(result.completed_steps));
      return 1;
    }
    std::printf("adapted checkpoint: %s\n", (ws / "checkpoints" / "adapted.ckpt").string().c_str());
    return 0;
  }

  if (command == "evaluate") {
    const std::string ckpt_path = opts.count("checkpoint") ? opts.at("checkpoint")
                                                           : (ws / "checkpoints" / "adapted.ckpt").string();
    const std::string label = opts.count("label") ? opts.at("label") : "system";
    const std::string eval_path = opts.count("eval-manifest") ? opts.at("eval-manifest")
                                                              : cfg.corpus_path("target_eval");
    if (eval_path.empty()) throw IngestError("config key corpus.target_eval is not set");
    auto eval_set = corpus::load_eval_manifest(eval_path);
    auto net = senet::load_se_network(ckpt::load_checkpoint(ckpt_path));
    auto adapter = cfg.pesq_adapter();
    fs::create_directories(ws / "reports");
    auto unproc = evalkit::evaluate_unprocessed(eval_set);
    auto rep = evalkit::evaluate_system(net, eval_set, label, &adapter,
                                        (ws / "reports" / "enhanced").string(), g.threads);
    evalkit::save_report((ws / "reports" / ("report_" + label + ".json")).string(), rep);
    evalkit::save_report((ws / "reports" / "report_unprocessed.json").string(), unproc);
    const bool multi_snr = unproc.by_snr().size() > 1;
    const auto table = evalkit::render_table(
        {unproc, rep}, multi_snr ? evalkit::TableGroup::Snr : evalkit::TableGroup::NoiseType,
        adapter.enabled() ? evalkit::TableMetric::Pesq : evalkit::TableMetric::SiSdri);
    std::printf("%s", table.c_str());
    return 0;
  }

  if (command == "adapt") {
    pipeline::AdaptationPlan plan;
    plan.manifest_path = cfg.corpus_path("manifest");
    plan.target_eval_path = cfg.corpus_path("target_eval");
    plan.source_eval_path = cfg.corpus_path("source_eval");
    plan.labeled_target_path = cfg.corpus_path("labeled_target");
    if (plan.manifest_path.empty()) throw IngestError("config key corpus.manifest is not set");
    if (plan.target_eval_path.empty()) throw IngestError("config key corpus.target_eval is not set");
    plan.n_t = cfg.n_t();
    plan.seed = g.seed;
    plan.workspace = g.workspace;
    plan.stages = cfg.stage_configs();
    plan.threads = g.threads;
    plan.resume = g.resume;
    auto report = pipeline::run_adaptation(plan);
    for (const auto& s : report.stages)
      std::printf("stage %-14s %s (%.1fs)\n", s.name.c_str(), s.skipped ? "skipped" : "ran",
                  s.seconds);
    std::printf("baseline SI-SDRi %.2f dB, adapted SI-SDRi %.2f dB\n%s", report.baseline_si_sdri,
                report.adapted_si_sdri, report.table_text.c_str());
    return 0;
  }

  if (command == "plot") {
    if (plot_inputs.empty()) throw IngestError("plot needs at least one wav file");
    std::vector<std::string> labels;
    {
      std::string rest = plot_labels;
      while (!rest.empty()) {
        auto pos = rest.find(',');
        labels.push_back(rest.substr(0, pos));
        if (pos == std::string::npos) break;
        rest = rest.substr(pos + 1);
      }
    }
    auto stft_cfg = cfg.stft();
    std::vector<dsp::Spectrogram> specs;
    specs.reserve(plot_inputs.size());
    for (const auto& p : plot_inputs) {
      io::WavData wav = io::read_wav(p);
      specs.push_back(dsp::stft(dsp::Waveform{wav.samples, wav.sample_rate}, stft_cfg));
    }
    std::vector<specfig::Panel> panels;
    for (size_t i = 0; i < specs.size(); ++i) {
      specfig::Panel panel;
      panel.label = i < labels.size() ? labels[i] : fs::path(plot_inputs[i]).stem().string();
      panel.spec = &specs[i];
      panels.push_back(panel);
    }
    fs::create_directories(ws / "figures");
    const std::string out = opts.count("out") ? opts.at("out")
                                              : (ws / "figures" / "spectrogram.ppm").string();
    auto info = specfig::export_spectrogram_figure(panels, out);
    std::printf("figure: %s (%dx%d, scale %.1f..%.1f dB)\n", out.c_str(), info.width, info.height,
                info.db_min, info.db_max);
    return 0;
  }

  throw ConfigError("unknown command: " + command);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised noise-adaptation toolkit: simulator training, corpus simulation, "
               "and mask-based speech-enhancement adaptation"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config_path, "JSON run configuration (defaults used when omitted)");
  app.add_option("--seed", g.seed, "Base RNG seed (stages derive their own streams)");
  app.add_option("--workspace", g.workspace, "Workspace directory for all outputs");
  app.add_option("--threads", g.threads,
                 "Worker threads for per-utterance fan-out. Training is always "
                 "single-threaded; 1 is the reproducibility mode.");
  app.add_flag("--resume", g.resume, "Skip pipeline stages whose fingerprints match");

  std::map<std::string, std::string> opts;
  std::vector<std::string> plot_inputs;
  std::string plot_labels;
  std::string opt_generator, opt_baseline, opt_simulated, opt_checkpoint, opt_label,
      opt_eval_manifest, opt_out;

  app.add_subcommand("synth-corpus", "Generate the self-contained synthetic corpus");
  app.add_subcommand("mix", "Materialize a clean x noise x SNR grid");
  app.add_subcommand("train-se", "Train the baseline enhancement model on source pairs");
  app.add_subcommand("train-gan", "Train the clean-to-noisy simulator on unpaired data");
  auto* sim = app.add_subcommand("simulate", "Convert source cleans with a trained generator");
  sim->add_option("--generator", opt_generator, "Generator checkpoint path");
  auto* ft = app.add_subcommand("finetune", "Adapt a baseline on simulated pairs");
  ft->add_option("--baseline", opt_baseline, "Baseline checkpoint path");
  ft->add_option("--simulated", opt_simulated, "Simulated corpus manifest");
  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on an evaluation manifest");
  ev->add_option("--checkpoint", opt_checkpoint, "Checkpoint to score");
  ev->add_option("--label", opt_label, "System label in reports");
  ev->add_option("--eval-manifest", opt_eval_manifest, "Evaluation manifest with references");
  app.add_subcommand("adapt", "Run the full six-stage adaptation pipeline");
  auto* plot = app.add_subcommand("plot", "Render labeled spectrogram panels to a PPM image");
  plot->add_option("wavs", plot_inputs, "Input wav files (one panel each)");
  plot->add_option("--labels", plot_labels, "Comma-separated panel labels");
  plot->add_option("--out", opt_out, "Output image path");

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = cli::RunConfig::load(g.config_path);
    if (!opt_generator.empty()) opts["generator"] = opt_generator;
    if (!opt_baseline.empty()) opts["baseline"] = opt_baseline;
    if (!opt_simulated.empty()) opts["simulated"] = opt_simulated;
    if (!opt_checkpoint.empty()) opts["checkpoint"] = opt_checkpoint;
    if (!opt_label.empty()) opts["label"] = opt_label;
    if (!opt_eval_manifest.empty()) opts["eval-manifest"] = opt_eval_manifest;
    if (!opt_out.empty()) opts["out"] = opt_out;
    const std::string command = app.get_subcommands().front()->get_name();
    return run(g, command, cfg, opts, plot_inputs, plot_labels);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const InvalidConfig& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IngestError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const EmptyPool& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const InsufficientData& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const PairingError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const IncompatibleCheckpoint& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: Unhandled: %s\n", e.what());
    return 1;
  }
}
