// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "una/corpus.hpp"

// Self-contained desk-scale corpus: harmonic-complex clean surrogates, a
// stationary white source noise, and two structured target noises (a
// tone-complex "rotor" and an amplitude-modulated "cry"), arranged with the
// source-paired / target-unpaired mismatch structure plus held-out test rows
// with references.
namespace una::synth {

struct SyntheticSpec {
  std::string root_dir;
  int n_source_clean = 8;      // clean source utterances; each is mixed over the source grid
  int n_target = 4;            // unpaired target noisy utterances
  int n_target_test = 4;       // held-out target rows with references
  int n_source_test = 2;       // held-out source rows with references
  double duration_s = 1.0;
  int sample_rate = 16000;
  std::vector<std::string> source_noises = {"white"};
  std::vector<std::string> target_noises = {"rotor"};
  std::vector<double> source_snr_grid = {0.0, 6.0};
  std::vector<double> target_snr_grid = {-3.0};

  void validate() const {
    if (root_dir.empty()) throw InvalidConfig("synthetic spec needs a root directory");
    if (n_source_clean < 1 || n_target < 1) throw InvalidConfig("need source and target utterances");
    if (duration_s <= 0.05) throw InvalidConfig("duration too short");
    if (source_noises.empty() || target_noises.empty()) throw InvalidConfig("noise lists empty");
    if (source_snr_grid.empty() || target_snr_grid.empty()) throw InvalidConfig("SNR grids empty");
    for (const auto& n : source_noises) check_noise(n);
    for (const auto& n : target_noises) check_noise(n);
  }

  static void check_noise(const std::string& n) {
    if (n != "white" && n != "rotor" && n != "cry") throw InvalidConfig("unknown noise family: " + n);
  }
};

// Rotor harmonics sit at multiples of 2 kHz, which is a bin center for any
// power-of-two fft_size >= 16 at 16 kHz.
constexpr double kRotorFundamentalHz = 2000.0;
constexpr int kRotorHarmonics = 3;

inline std::vector<int> rotor_bins(const dsp::StftConfig& cfg, int sample_rate) {
  std::vector<int> bins;
  for (int h = 1; h <= kRotorHarmonics; ++h) {
    const double f = kRotorFundamentalHz * h;
    const int bin = static_cast<int>(std::lround(f * cfg.fft_size / sample_rate));
    if (bin < cfg.bins()) bins.push_back(bin);
  }
  return bins;
}

// ---------------------------------------------------------------------------
// Signal families. Every generator is a pure function of its RNG.
// ---------------------------------------------------------------------------

// Harmonic complex with f0 in [100, 300] Hz, exponential spectral rolloff and
// a slow positive amplitude envelope.
inline std::vector<double> voice_like(int64_t n, int rate, Rng& rng) {
  const double f0 = rng.uniform(100.0, 300.0);
  const int harmonics = std::max(3, static_cast<int>(1800.0 / f0));
  std::vector<double> phase(static_cast<size_t>(harmonics));
  std::vector<double> amp(static_cast<size_t>(harmonics));
  for (int h = 0; h < harmonics; ++h) {
    phase[static_cast<size_t>(h)] = rng.uniform(0.0, 2.0 * M_PI);
    const double f = f0 * (h + 1);
    amp[static_cast<size_t>(h)] = std::exp(-f / 600.0) / std::sqrt(h + 1.0);
  }
  const double env_rate = rng.uniform(1.0, 4.0);
  const double env_phase = rng.uniform(0.0, 2.0 * M_PI);
  std::vector<double> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    double s = 0.0;
    for (int h = 0; h < harmonics; ++h)
      s += amp[static_cast<size_t>(h)] *
           std::sin(2.0 * M_PI * f0 * (h + 1) * t + phase[static_cast<size_t>(h)]);
    const double env = 0.6 + 0.4 * std::sin(2.0 * M_PI * env_rate * t + env_phase);
    out[static_cast<size_t>(i)] = s * env;
  }
  const double r = dsp::rms(out);
  for (auto& v : out) v *= 0.1 / r;
  return out;
}

inline std::vector<double> white_noise(int64_t n, int /*rate*/, Rng& rng) {
  std::vector<double> out(static_cast<size_t>(n));
  for (auto& v : out) v = rng.normal(0.0, 0.1);
  return out;
}

// Tone complex at the rotor harmonics with slow amplitude modulation.
inline std::vector<double> rotor_noise(int64_t n, int rate, Rng& rng) {
  double phase[kRotorHarmonics], amp[kRotorHarmonics];
  for (int h = 0; h < kRotorHarmonics; ++h) {
    phase[h] = rng.uniform(0.0, 2.0 * M_PI);
    amp[h] = (1.0 / (h + 1.0)) * rng.uniform(0.8, 1.2);
  }
  const double am_rate = rng.uniform(3.0, 6.0);
  const double am_phase = rng.uniform(0.0, 2.0 * M_PI);
  std::vector<double> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    double s = 0.0;
    for (int h = 0; h < kRotorHarmonics; ++h)
      s += amp[h] * std::sin(2.0 * M_PI * kRotorFundamentalHz * (h + 1) * t + phase[h]);
    out[static_cast<size_t>(i)] = s * (1.0 + 0.3 * std::sin(2.0 * M_PI * am_rate * t + am_phase));
  }
  const double r = dsp::rms(out);
  for (auto& v : out) v *= 0.1 / r;
  return out;
}

// Amplitude-modulated tonal bursts over a weak noise floor.
inline std::vector<double> cry_noise(int64_t n, int rate, Rng& rng) {
  const double fc = rng.uniform(400.0, 900.0);
  const double burst_rate = rng.uniform(1.5, 3.0);
  const double burst_phase = rng.uniform(0.0, 2.0 * M_PI);
  const double tone_phase = rng.uniform(0.0, 2.0 * M_PI);
  std::vector<double> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double gate = std::max(0.0, std::sin(2.0 * M_PI * burst_rate * t + burst_phase));
    const double env = gate * gate;
    out[static_cast<size_t>(i)] =
        env * std::sin(2.0 * M_PI * fc * t + tone_phase) + 0.05 * rng.normal();
  }
  const double r = dsp::rms(out);
  for (auto& v : out) v *= 0.1 / r;
  return out;
}

inline std::vector<double> make_noise(const std::string& family, int64_t n, int rate, Rng& rng) {
  if (family == "white") return white_noise(n, rate, rng);
  if (family == "rotor") return rotor_noise(n, rate, rng);
  if (family == "cry") return cry_noise(n, rate, rng);
  throw InvalidConfig("unknown noise family: " + family);
}

struct SyntheticCorpus {
  corpus::DomainCorpus train;
  corpus::EvalSet target_test;
  corpus::EvalSet source_test;
  std::string manifest_path;
  std::string target_eval_path;
  std::string source_eval_path;
};

// Writes a full desk-scale corpus under spec.root_dir: paired source mixes,
// unpaired target mixes (their clean origins are generated and discarded),
// and held-out eval rows with references. Bit-identical output under a fixed
// seed.
inline SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec, uint64_t seed) {
  spec.validate();
  namespace fs = std::filesystem;
  const fs::path root(spec.root_dir);
  const fs::path audio = root / "audio";
  fs::create_directories(audio);
  const int64_t n = static_cast<int64_t>(spec.duration_s * spec.sample_rate);

  SyntheticCorpus out;
  out.train.root = root.string();
  out.target_test.root = root.string();
  out.source_test.root = root.string();

  auto write = [&](const std::string& name, const std::vector<double>& samples) {
    io::write_wav((audio / name).string(), samples, spec.sample_rate);
    return (fs::path("audio") / name).string();
  };
  auto add_record = [&](const std::string& id, corpus::Role role, corpus::Domain domain,
                        const std::string& rel, double dur) -> corpus::UtteranceRecord& {
    corpus::UtteranceRecord r;
    r.id = id;
    r.role = role;
    r.domain = domain;
    r.path = rel;
    r.duration = dur;
    out.train.records.push_back(r);
    return out.train.records.back();
  };

  // Source domain: clean utterances plus their mixes over the source grid.
  for (int i = 0; i < spec.n_source_clean; ++i) {
    char tag[32];
    std::snprintf(tag, sizeof(tag), "%03d", i);
    Rng vr(derive_seed(seed, "src-clean-" + std::string(tag)));
    auto clean = voice_like(n, spec.sample_rate, vr);
    const std::string clean_rel = write("src_clean_" + std::string(tag) + ".wav", clean);
    const std::string clean_id = "clean/src/src_clean_" + std::string(tag);
    add_record(clean_id, corpus::Role::Clean, corpus::Domain::Source, clean_rel, spec.duration_s);

    for (const auto& family : spec.source_noises)
      for (double snr : spec.source_snr_grid) {
        Rng nr(derive_seed(seed, "src-noise-" + family + "-" + std::string(tag) + "-" +
                                     corpus::snr_tag(snr)));
        dsp::Waveform cw{clean, spec.sample_rate};
        dsp::Waveform nw{make_noise(family, n, spec.sample_rate, nr), spec.sample_rate};
        auto mixed = dsp::mix_at_snr(cw, nw, snr);
        const std::string name =
            "src_noisy_" + std::string(tag) + "__" + family + "__snr" + corpus::snr_tag(snr);
        const std::string rel = write(name + ".wav", mixed.mixture.samples);
        auto& rec = add_record("noisy/src/" + name, corpus::Role::Noisy, corpus::Domain::Source,
                               rel, spec.duration_s);
        rec.snr_db = snr;
        rec.noise_type = family;
        rec.paired_clean_id = clean_id;
      }
  }

  // Target domain: unpaired noisy utterances from fresh clean surrogates; the
  // clean origins are never written into the corpus.
  int target_count = 0;
  for (int i = 0; i < spec.n_target; ++i) {
    char tag[32];
    std::snprintf(tag, sizeof(tag), "%03d", i);
    Rng vr(derive_seed(seed, "tgt-clean-" + std::string(tag)));
    auto clean = voice_like(n, spec.sample_rate, vr);
    const auto& family = spec.target_noises[static_cast<size_t>(i) % spec.target_noises.size()];
    const double snr = spec.target_snr_grid[static_cast<size_t>(i) % spec.target_snr_grid.size()];
    Rng nr(derive_seed(seed, "tgt-noise-" + std::string(tag)));
    dsp::Waveform cw{clean, spec.sample_rate};
    dsp::Waveform nw{make_noise(family, n, spec.sample_rate, nr), spec.sample_rate};
    auto mixed = dsp::mix_at_snr(cw, nw, snr);
    const std::string name = "tgt_noisy_" + std::string(tag) + "__" + family;
    const std::string rel = write(name + ".wav", mixed.mixture.samples);
    auto& rec =
        add_record("noisy/tgt/" + name, corpus::Role::Noisy, corpus::Domain::Target, rel, spec.duration_s);
    rec.snr_db = snr;
    rec.noise_type = family;
    ++target_count;
  }
  (void)target_count;

  // Held-out eval rows, references included.
  auto make_eval = [&](const std::string& prefix, int count, const std::vector<std::string>& fams,
                       const std::vector<double>& grid, corpus::EvalSet& set) {
    for (int i = 0; i < count; ++i) {
      char tag[32];
      std::snprintf(tag, sizeof(tag), "%03d", i);
      Rng vr(derive_seed(seed, prefix + "-clean-" + std::string(tag)));
      auto clean = voice_like(n, spec.sample_rate, vr);
      const auto& family = fams[static_cast<size_t>(i) % fams.size()];
      const double snr = grid[static_cast<size_t>(i) % grid.size()];
      Rng nr(derive_seed(seed, prefix + "-noise-" + std::string(tag)));
      dsp::Waveform cw{clean, spec.sample_rate};
      dsp::Waveform nw{make_noise(family, n, spec.sample_rate, nr), spec.sample_rate};
      auto mixed = dsp::mix_at_snr(cw, nw, snr);
      corpus::EvalRow row;
      row.id = prefix + "_" + std::string(tag);
      row.reference_path = write(prefix + "_ref_" + std::string(tag) + ".wav", clean);
      row.noisy_path = write(prefix + "_noisy_" + std::string(tag) + ".wav", mixed.mixture.samples);
      row.noise_type = family;
      row.snr_db = snr;
      set.rows.push_back(row);
    }
  };
  make_eval("test_tgt", spec.n_target_test, spec.target_noises, spec.target_snr_grid,
            out.target_test);
  make_eval("test_src", spec.n_source_test, spec.source_noises, spec.source_snr_grid,
            out.source_test);

  out.train.validate();
  out.manifest_path = (root / "manifest.jsonl").string();
  out.target_eval_path = (root / "eval_target.jsonl").string();
  out.source_eval_path = (root / "eval_source.jsonl").string();
  corpus::save_manifest(out.manifest_path, out.train);
  corpus::save_eval_manifest(out.target_eval_path, out.target_test);
  corpus::save_eval_manifest(out.source_eval_path, out.source_test);
  return out;
}

}  // namespace una::synth
