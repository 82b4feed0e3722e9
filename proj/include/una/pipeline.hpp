// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "una/corpus.hpp"
#include "una/evalkit.hpp"
#include "una/se_train.hpp"
#include "una/ugan_train.hpp"

namespace una::pipeline {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Target-domain corpus simulation.
// ---------------------------------------------------------------------------

struct SimulatedRecord {
  std::string id;
  std::string sim_path;    // relative to root: simulated noisy waveform
  std::string clean_id;    // source clean utterance it was produced from
  std::string clean_path;  // relative: the paired clean waveform
};

struct SimulatedCorpus {
  std::string root;
  std::vector<SimulatedRecord> records;
  std::string generator_fingerprint;  // content fingerprint of the producing checkpoint
  std::string phase_policy;
  std::vector<corpus::MixFailure> failures;
};

inline void save_simulated_manifest(const std::string& path, const SimulatedCorpus& sim) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write simulated manifest: " + path);
  f << nlohmann::json{{"una_simulated_manifest", 1},
                      {"generator_fingerprint", sim.generator_fingerprint},
                      {"phase_policy", sim.phase_policy}}
           .dump()
    << "\n";
  for (const auto& r : sim.records)
    f << nlohmann::json{{"id", r.id},
                        {"sim_path", r.sim_path},
                        {"clean_id", r.clean_id},
                        {"clean_path", r.clean_path}}
             .dump()
      << "\n";
}

inline SimulatedCorpus load_simulated_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IngestError("cannot open simulated manifest: " + path);
  SimulatedCorpus sim;
  sim.root = fs::path(path).parent_path().string();
  std::string line;
  if (!std::getline(f, line)) throw IngestError("empty simulated manifest: " + path);
  auto header = nlohmann::json::parse(line);
  if (header.value("una_simulated_manifest", -1) != 1)
    throw IngestError("bad simulated manifest header: " + path);
  sim.generator_fingerprint = header.value("generator_fingerprint", "");
  sim.phase_policy = header.value("phase_policy", "");
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    sim.records.push_back(SimulatedRecord{j.at("id"), j.at("sim_path"), j.at("clean_id"),
                                          j.at("clean_path")});
  }
  return sim;
}

// Runs every source-domain clean utterance of `source` through the trained
// generator at full length (no segmentation; the generator is fully
// convolutional) and reconstructs a waveform from the generated magnitude.
// The default phase policy reuses the clean utterance's own phase; a
// Griffin-Lim-style refinement is available behind the flag.
inline SimulatedCorpus simulate_target_corpus(const ckpt::Checkpoint& generator_ckpt,
                                              const corpus::DomainCorpus& source,
                                              const dsp::StftConfig& stft_cfg,
                                              const std::string& out_dir,
                                              const std::string& phase_policy = "reuse-clean-phase",
                                              int griffin_lim_iters = 32, int threads = 1) {
  if (phase_policy != "reuse-clean-phase" && phase_policy != "griffin-lim")
    throw InvalidConfig("unknown phase policy: " + phase_policy);
  auto gen = ugan::load_generator(generator_ckpt);
  fs::create_directories(out_dir);

  std::vector<const corpus::UtteranceRecord*> cleans;
  for (const auto& r : source.records)
    if (r.role == corpus::Role::Clean && r.domain == corpus::Domain::Source) cleans.push_back(&r);

  SimulatedCorpus sim;
  sim.root = out_dir;
  sim.generator_fingerprint = ckpt::content_fingerprint(generator_ckpt);
  sim.phase_policy = phase_policy;
  std::vector<std::optional<SimulatedRecord>> results(cleans.size());
  std::vector<std::optional<corpus::MixFailure>> failures(cleans.size());

  parallel_for(cleans.size(), threads, [&](size_t i) {
    const auto& rec = *cleans[i];
    const std::string stem = fs::path(rec.path).stem().string();
    const std::string name = "sim_" + stem + ".wav";
    try {
      io::WavData wav = io::read_wav(source.resolve(rec));
      dsp::Waveform clean{wav.samples, wav.sample_rate};
      auto spec = dsp::stft(clean, stft_cfg);
      ad::NoGradGuard guard;
      auto mag_in = ad::constant(
          spec.magnitude.reshaped({1, spec.magnitude.dim(0), spec.magnitude.dim(1)}));
      auto mag_out = gen.forward(mag_in);
      dsp::Spectrogram sim_spec = spec;  // keeps phase, config, length
      sim_spec.magnitude = mag_out->val.reshaped({spec.magnitude.dim(0), spec.magnitude.dim(1)});
      dsp::Waveform out = dsp::istft(sim_spec);
      if (phase_policy == "griffin-lim") {
        for (int it = 0; it < griffin_lim_iters; ++it) {
          auto re = dsp::stft(out, stft_cfg);
          re.magnitude = sim_spec.magnitude;
          re.n_samples = sim_spec.n_samples;
          out = dsp::istft(re);
        }
      }
      io::write_wav((fs::path(out_dir) / name).string(), out.samples, out.sample_rate);
      SimulatedRecord sr;
      sr.id = "sim/" + stem;
      sr.sim_path = name;
      sr.clean_id = rec.id;
      sr.clean_path = fs::relative(source.resolve(rec), out_dir).string();
      results[i] = sr;
    } catch (const Error& e) {
      std::error_code ec;
      fs::remove(fs::path(out_dir) / name, ec);
      failures[i] = corpus::MixFailure{rec.id, e.category(), e.what()};
    }
  });
  for (size_t i = 0; i < cleans.size(); ++i) {
    if (failures[i])
      sim.failures.push_back(*failures[i]);
    else if (results[i])
      sim.records.push_back(*results[i]);
  }
  save_simulated_manifest((fs::path(out_dir) / "simulated.jsonl").string(), sim);
  return sim;
}

inline std::vector<senet::SePair> simulated_pairs(const SimulatedCorpus& sim) {
  std::vector<senet::SePair> pairs;
  for (const auto& r : sim.records) {
    io::WavData noisy = io::read_wav((fs::path(sim.root) / r.sim_path).string());
    io::WavData clean = io::read_wav((fs::path(sim.root) / r.clean_path).string());
    if (noisy.samples.size() != clean.samples.size())
      throw LengthMismatch("simulated pair length mismatch for " + r.id);
    senet::SePair p;
    p.id = r.id;
    p.noisy = std::move(noisy.samples);
    p.clean = std::move(clean.samples);
    p.sample_rate = noisy.sample_rate;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// End-to-end adaptation.
// ---------------------------------------------------------------------------

struct StageConfigs {
  dsp::StftConfig stft;
  int64_t segment_width = 128;
  senet::SeTrainConfig se_baseline;
  ugan::UganTrainConfig ugan;
  senet::SeTrainConfig se_finetune;
  std::string phase_policy = "reuse-clean-phase";
  int griffin_lim_iters = 32;
};

struct AdaptationPlan {
  std::string manifest_path;             // training corpus
  std::string target_eval_path;          // held-out target rows with references
  std::string source_eval_path;          // optional source test rows
  std::string labeled_target_path;       // optional: enables the upper-bound stage
  int64_t n_t = 4;
  uint64_t seed = 0;
  std::string workspace;
  StageConfigs stages;
  int threads = 1;
  bool resume = true;
};

struct StageInfo {
  std::string name;
  bool skipped = false;
  double seconds = 0.0;
  std::string fingerprint;
};

struct AdaptationReport {
  std::vector<StageInfo> stages;
  int64_t n_t = 0;
  int64_t consumed_targets = 0;
  int64_t simulated_count = 0;
  double unprocessed_si_sdr = 0.0;
  double baseline_si_sdri = 0.0;
  double adapted_si_sdri = 0.0;
  std::optional<double> upper_bound_si_sdri;
  std::optional<double> baseline_si_sdri_source;
  std::optional<double> adapted_si_sdri_source;
  std::string table_text;

  nlohmann::json to_json() const {
    nlohmann::json stages_j = nlohmann::json::array();
    for (const auto& s : stages)
      stages_j.push_back({{"name", s.name},
                          {"skipped", s.skipped},
                          {"seconds", s.seconds},
                          {"fingerprint", s.fingerprint}});
    nlohmann::json j = {{"stages", stages_j},
                        {"n_t", n_t},
                        {"consumed_targets", consumed_targets},
                        {"simulated_count", simulated_count},
                        {"unprocessed_si_sdr", unprocessed_si_sdr},
                        {"baseline_si_sdri", baseline_si_sdri},
                        {"adapted_si_sdri", adapted_si_sdri}};
    if (upper_bound_si_sdri) j["upper_bound_si_sdri"] = *upper_bound_si_sdri;
    if (baseline_si_sdri_source) j["baseline_si_sdri_source"] = *baseline_si_sdri_source;
    if (adapted_si_sdri_source) j["adapted_si_sdri_source"] = *adapted_si_sdri_source;
    return j;
  }
};

namespace detail {

inline std::string file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IngestError("cannot hash missing file: " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return hex64(fnv1a64(bytes.data(), bytes.size()));
}

class StageRunner {
 public:
  StageRunner(const AdaptationPlan& plan, AdaptationReport& report)
      : plan_(plan), report_(report), stage_dir_(fs::path(plan.workspace) / "stages") {
    fs::create_directories(stage_dir_);
  }

  // Runs `body` unless a fresh marker with the same fingerprint exists and
  // every artifact it promises is present. Returns true when skipped.
  bool run(const std::string& name, const std::string& fingerprint,
           const std::vector<std::string>& artifacts, const std::function<void()>& body,
           bool always_run = false) {
    chain_ = hex64(fnv1a64(chain_ + "|" + name + "|" + fingerprint));
    StageInfo info;
    info.name = name;
    info.fingerprint = chain_;
    const fs::path marker = stage_dir_ / (name + ".done");
    bool can_skip = plan_.resume && !always_run && fs::exists(marker);
    if (can_skip) {
      std::ifstream f(marker);
      nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
      can_skip = !j.is_discarded() && j.value("fingerprint", "") == chain_;
      for (const auto& a : artifacts)
        if (!fs::exists(a)) can_skip = false;
    }
    if (can_skip) {
      info.skipped = true;
      report_.stages.push_back(info);
      return true;
    }
    fs::remove(marker);
    const auto t0 = std::chrono::steady_clock::now();
    body();
    info.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ofstream f(marker, std::ios::trunc);
    f << nlohmann::json{{"fingerprint", chain_}}.dump() << "\n";
    report_.stages.push_back(info);
    return false;
  }

 private:
  const AdaptationPlan& plan_;
  AdaptationReport& report_;
  fs::path stage_dir_;
  std::string chain_;
};

}  // namespace detail

// Six-stage adaptation: baseline training, target/clean budget selection,
// adversarial simulator training, corpus simulation, fine-tuning, evaluation.
// Stages are fingerprint-chained and resumable; evaluation always re-runs.
// After the baseline stage nothing reads target-domain references: the
// simulator sees only unpaired target noisy audio.
inline AdaptationReport run_adaptation(const AdaptationPlan& plan) {
  if (plan.workspace.empty()) throw InvalidConfig("adaptation plan needs a workspace");
  fs::create_directories(plan.workspace);
  const fs::path ws(plan.workspace);
  fs::create_directories(ws / "checkpoints");
  fs::create_directories(ws / "manifests");
  fs::create_directories(ws / "history");
  fs::create_directories(ws / "reports");

  // Only the source pairing is checked: target pairing fields are never read
  // anywhere in this pipeline, which the poisoned-sentinel test relies on.
  auto train_corpus = corpus::load_manifest(plan.manifest_path);
  train_corpus.validate_source_pairs();
  if (plan.n_t > train_corpus.n_target())
    throw InsufficientData("plan.n_t exceeds the corpus target pool");

  AdaptationReport report;
  report.n_t = plan.n_t;
  detail::StageRunner stages(plan, report);

  const std::string base_fp =
      detail::file_hash(plan.manifest_path) + "|" + std::to_string(plan.seed) + "|" +
      std::to_string(plan.n_t);

  // Stage 1: baseline SE model on source pairs.
  const std::string baseline_path = (ws / "checkpoints" / "baseline.ckpt").string();
  stages.run("baseline", base_fp + plan.stages.se_baseline.to_json().dump(), {baseline_path}, [&] {
    std::vector<senet::SePair> pairs;
    for (const auto& r : train_corpus.records) {
      if (r.role != corpus::Role::Noisy || r.domain != corpus::Domain::Source) continue;
      io::WavData noisy = io::read_wav(train_corpus.resolve(r));
      const auto* clean_rec = train_corpus.find(*r.paired_clean_id);
      io::WavData clean = io::read_wav(train_corpus.resolve(*clean_rec));
      senet::SePair p;
      p.id = r.id;
      p.noisy = std::move(noisy.samples);
      p.clean = std::move(clean.samples);
      p.sample_rate = noisy.sample_rate;
      pairs.push_back(std::move(p));
    }
    auto result = senet::train_se(pairs, plan.stages.se_baseline, derive_seed(plan.seed, "se-baseline"));
    if (result.aborted) throw Divergence("baseline SE training diverged");
    ckpt::save_checkpoint(baseline_path, result.checkpoint);
    senet::write_se_history((ws / "history" / "se_baseline.csv").string(), result.history);
  });

  // Stage 2: select the n_t target budget plus an equal count of cleans.
  const std::string gan_manifest = (ws / "manifests" / "gan_corpus.jsonl").string();
  stages.run("select-target", base_fp, {gan_manifest}, [&] {
    auto subset = corpus::subsample_target(train_corpus, plan.n_t, derive_seed(plan.seed, "nt"));
    auto cleans = subset.pool(corpus::Role::Clean, corpus::Domain::Source);
    const size_t want = std::min<size_t>(cleans.size(), static_cast<size_t>(plan.n_t));
    Rng rng(derive_seed(plan.seed, "clean-budget"));
    auto picks = rng.sample_without_replacement(cleans.size(), want);
    std::set<std::string> keep_clean;
    for (size_t p : picks) keep_clean.insert(cleans[p]->id);

    corpus::DomainCorpus gan_corpus;
    gan_corpus.root = subset.root;
    for (const auto& r : subset.records) {
      if (r.role == corpus::Role::Clean && r.domain == corpus::Domain::Source &&
          keep_clean.count(r.id))
        gan_corpus.records.push_back(r);
      if (r.role == corpus::Role::Noisy && r.domain == corpus::Domain::Target)
        gan_corpus.records.push_back(r);
    }
    // Paths must stay resolvable from the workspace manifest location.
    corpus::save_manifest(gan_manifest, corpus::rebase(gan_corpus, (ws / "manifests").string()));
  });

  // Stage 3: adversarial training of the clean-to-noisy simulator.
  const std::string gen_path = (ws / "checkpoints" / "generator.ckpt").string();
  const std::string consumed_path = (ws / "manifests" / "gan_consumed.json").string();
  stages.run("train-gan", base_fp + plan.stages.ugan.to_json().dump(),
             {gen_path, consumed_path}, [&] {
    auto gan_corpus = corpus::load_manifest(gan_manifest);
    corpus::UnpairedSampler sampler(gan_corpus, plan.stages.stft, plan.stages.segment_width);
    auto batch_fn = [&](int64_t, Rng& rng) {
      return sampler.sample(plan.stages.ugan.batch_size, rng);
    };
    auto result = ugan::train_una_gan(batch_fn, plan.stages.ugan, derive_seed(plan.seed, "ugan"),
                                      (ws / "checkpoints").string());
    if (result.aborted) throw Divergence("simulator training diverged");
    ugan::write_ugan_history((ws / "history" / "ugan.csv").string(), result.history);
    std::ofstream f(consumed_path, std::ios::trunc);
    f << nlohmann::json{{"pool", sampler.target_pool_size()},
                        {"consumed", sampler.consumed_target_ids()}}
             .dump(2)
      << "\n";
  });

  {
    std::ifstream f(consumed_path);
    nlohmann::json j = nlohmann::json::parse(f);
    report.consumed_targets = static_cast<int64_t>(j.at("consumed").size());
    if (j.at("pool").get<int64_t>() != plan.n_t)
      throw InsufficientData("target budget mismatch in simulator training");
  }

  // Stage 4: simulate the whole source clean pool into the target domain.
  const std::string sim_manifest = (ws / "simulated" / "simulated.jsonl").string();
  stages.run("simulate", base_fp + plan.stages.phase_policy, {sim_manifest}, [&] {
    auto gen_ckpt = ckpt::load_checkpoint(gen_path);
    auto sim = simulate_target_corpus(gen_ckpt, train_corpus, plan.stages.stft,
                                      (ws / "simulated").string(), plan.stages.phase_policy,
                                      plan.stages.griffin_lim_iters, plan.threads);
    if (!sim.failures.empty())
      throw IngestError("simulation failed for " + std::to_string(sim.failures.size()) +
                        " utterances");
  });

  // Stage 5: adapt the baseline on the simulated pairs.
  const std::string adapted_path = (ws / "checkpoints" / "adapted.ckpt").string();
  stages.run("finetune", base_fp + plan.stages.se_finetune.to_json().dump(), {adapted_path}, [&] {
    auto baseline = ckpt::load_checkpoint(baseline_path);
    auto sim = load_simulated_manifest(sim_manifest);
    auto pairs = simulated_pairs(sim);
    auto result =
        senet::finetune_se(baseline, pairs, plan.stages.se_finetune, derive_seed(plan.seed, "ft"));
    if (result.aborted) throw Divergence("fine-tuning diverged");
    ckpt::save_checkpoint(adapted_path, result.checkpoint);
    senet::write_se_history((ws / "history" / "se_finetune.csv").string(), result.history);
  });

  {
    auto sim = load_simulated_manifest(sim_manifest);
    report.simulated_count = static_cast<int64_t>(sim.records.size());
  }

  // Optional upper bound: fine-tune on labeled target data (reporting parity
  // only; never part of the unsupervised path).
  std::optional<std::string> upper_path;
  if (!plan.labeled_target_path.empty()) {
    upper_path = (ws / "checkpoints" / "upper_bound.ckpt").string();
    stages.run("upper-bound", base_fp + detail::file_hash(plan.labeled_target_path), {*upper_path},
               [&] {
      auto labeled = corpus::load_eval_manifest(plan.labeled_target_path);
      std::vector<senet::SePair> pairs;
      for (const auto& row : labeled.rows) {
        io::WavData noisy = io::read_wav((fs::path(labeled.root) / row.noisy_path).string());
        io::WavData clean = io::read_wav((fs::path(labeled.root) / row.reference_path).string());
        senet::SePair p;
        p.id = row.id;
        p.noisy = std::move(noisy.samples);
        p.clean = std::move(clean.samples);
        p.sample_rate = noisy.sample_rate;
        pairs.push_back(std::move(p));
      }
      auto baseline = ckpt::load_checkpoint(baseline_path);
      auto result =
          senet::finetune_se(baseline, pairs, plan.stages.se_finetune, derive_seed(plan.seed, "ub"));
      if (result.aborted) throw Divergence("upper-bound fine-tuning diverged");
      ckpt::save_checkpoint(*upper_path, result.checkpoint);
    });
  }

  // Stage 6: evaluation, always refreshed.
  stages.run("evaluate", base_fp, {}, [&] {
    auto target_eval = corpus::load_eval_manifest(plan.target_eval_path);
    auto baseline_net = senet::load_se_network(ckpt::load_checkpoint(baseline_path));
    auto adapted_net = senet::load_se_network(ckpt::load_checkpoint(adapted_path));

    auto unproc = evalkit::evaluate_unprocessed(target_eval);
    auto base_rep = evalkit::evaluate_system(baseline_net, target_eval, "Vanilla-SE", nullptr, "",
                                             plan.threads);
    auto adapt_rep =
        evalkit::evaluate_system(adapted_net, target_eval, "Adapted", nullptr, "", plan.threads);
    evalkit::save_report((ws / "reports" / "target_unprocessed.json").string(), unproc);
    evalkit::save_report((ws / "reports" / "target_baseline.json").string(), base_rep);
    evalkit::save_report((ws / "reports" / "target_adapted.json").string(), adapt_rep);

    report.unprocessed_si_sdr = unproc.overall().si_sdr_in;
    report.baseline_si_sdri = base_rep.overall().si_sdri;
    report.adapted_si_sdri = adapt_rep.overall().si_sdri;

    std::vector<evalkit::MetricReport> table_reports{unproc, base_rep, adapt_rep};
    if (upper_path) {
      auto upper_net = senet::load_se_network(ckpt::load_checkpoint(*upper_path));
      auto upper_rep = evalkit::evaluate_system(upper_net, target_eval, "Upper-bound", nullptr, "",
                                                plan.threads);
      evalkit::save_report((ws / "reports" / "target_upper_bound.json").string(), upper_rep);
      report.upper_bound_si_sdri = upper_rep.overall().si_sdri;
      table_reports.push_back(upper_rep);
    }
    const bool multi_snr = unproc.by_snr().size() > 1;
    report.table_text = evalkit::render_table(
        table_reports, multi_snr ? evalkit::TableGroup::Snr : evalkit::TableGroup::NoiseType,
        evalkit::TableMetric::SiSdri);

    if (!plan.source_eval_path.empty()) {
      auto source_eval = corpus::load_eval_manifest(plan.source_eval_path);
      auto bs = evalkit::evaluate_system(baseline_net, source_eval, "Vanilla-SE-src", nullptr, "",
                                         plan.threads);
      auto as = evalkit::evaluate_system(adapted_net, source_eval, "Adapted-src", nullptr, "",
                                         plan.threads);
      evalkit::save_report((ws / "reports" / "source_baseline.json").string(), bs);
      evalkit::save_report((ws / "reports" / "source_adapted.json").string(), as);
      report.baseline_si_sdri_source = bs.overall().si_sdri;
      report.adapted_si_sdri_source = as.overall().si_sdri;
    }
  }, /*always_run=*/true);

  std::ofstream rf((ws / "reports" / "adaptation_report.json").string(), std::ios::trunc);
  rf << report.to_json().dump(2) << "\n";
  std::ofstream tf((ws / "reports" / "adaptation_table.txt").string(), std::ios::trunc);
  tf << report.table_text;
  return report;
}

}  // namespace una::pipeline
