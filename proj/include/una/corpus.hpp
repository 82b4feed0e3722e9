// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "una/dsp.hpp"
#include "una/gan_losses.hpp"
#include "una/wav.hpp"

namespace una::corpus {

namespace fs = std::filesystem;

enum class Role { Clean, Noisy, Noise };
enum class Domain { Source, Target };

inline std::string role_name(Role r) {
  switch (r) {
    case Role::Clean: return "clean";
    case Role::Noisy: return "noisy";
    default: return "noise";
  }
}
inline Role role_from_name(const std::string& s) {
  if (s == "clean") return Role::Clean;
  if (s == "noisy") return Role::Noisy;
  if (s == "noise") return Role::Noise;
  throw IngestError("unknown role: " + s);
}
inline std::string domain_name(Domain d) { return d == Domain::Source ? "source" : "target"; }
inline Domain domain_from_name(const std::string& s) {
  if (s == "source") return Domain::Source;
  if (s == "target") return Domain::Target;
  throw IngestError("unknown domain: " + s);
}

struct UtteranceRecord {
  std::string id;
  Role role = Role::Clean;
  std::string path;  // relative to the corpus root
  double duration = 0.0;
  Domain domain = Domain::Source;
  std::optional<double> snr_db;
  std::optional<std::string> noise_type;
  std::optional<std::string> paired_clean_id;

  bool operator==(const UtteranceRecord& o) const {
    return id == o.id && role == o.role && path == o.path && duration == o.duration &&
           domain == o.domain && snr_db == o.snr_db && noise_type == o.noise_type &&
           paired_clean_id == o.paired_clean_id;
  }
};

struct DomainCorpus {
  std::string root;  // directory paths are relative to
  std::vector<UtteranceRecord> records;

  int64_t n_source() const {
    int64_t n = 0;
    for (const auto& r : records)
      if (r.role == Role::Noisy && r.domain == Domain::Source) ++n;
    return n;
  }
  int64_t n_target() const {
    int64_t n = 0;
    for (const auto& r : records)
      if (r.role == Role::Noisy && r.domain == Domain::Target) ++n;
    return n;
  }

  const UtteranceRecord* find(const std::string& id) const {
    for (const auto& r : records)
      if (r.id == id) return &r;
    return nullptr;
  }

  std::string resolve(const UtteranceRecord& r) const {
    return root.empty() ? r.path : (fs::path(root) / r.path).string();
  }

  std::vector<const UtteranceRecord*> pool(Role role, Domain domain) const {
    std::vector<const UtteranceRecord*> out;
    for (const auto& r : records)
      if (r.role == role && r.domain == domain) out.push_back(&r);
    return out;
  }

  // Source side of the paired-data contract: every source noisy record
  // resolves to a clean record. Target pairing fields are not inspected here;
  // consumers of unpaired data treat them as opaque.
  void validate_source_pairs() const {
    for (const auto& r : records) {
      if (r.role == Role::Noisy && r.domain == Domain::Source) {
        if (!r.paired_clean_id)
          throw PairingError("source noisy record " + r.id + " lacks paired_clean_id");
        const auto* clean = find(*r.paired_clean_id);
        if (!clean || clean->role != Role::Clean)
          throw PairingError("record " + r.id + " pairs to missing clean " + *r.paired_clean_id);
      }
    }
  }

  // Full creation-time contract: source pairing resolves, and target noisy
  // records carry no pairing at all (their labels are unavailable by
  // definition).
  void validate() const {
    validate_source_pairs();
    for (const auto& r : records)
      if (r.role == Role::Noisy && r.domain == Domain::Target && r.paired_clean_id)
        throw PairingError("target noisy record " + r.id + " must not carry paired_clean_id");
  }
};

// Evaluation rows live outside the training corpus: references are allowed
// for scoring even when training is unsupervised.
struct EvalRow {
  std::string id;
  std::string noisy_path;      // relative
  std::string reference_path;  // relative
  std::string noise_type;
  double snr_db = 0.0;

  bool operator==(const EvalRow& o) const {
    return id == o.id && noisy_path == o.noisy_path && reference_path == o.reference_path &&
           noise_type == o.noise_type && snr_db == o.snr_db;
  }
};

struct EvalSet {
  std::string root;
  std::vector<EvalRow> rows;
};

// ---------------------------------------------------------------------------
// Manifest serialization: line-delimited JSON with a version header line.
// ---------------------------------------------------------------------------

constexpr int kManifestVersion = 1;

inline nlohmann::json record_to_json(const UtteranceRecord& r) {
  nlohmann::json j = {{"id", r.id},
                      {"role", role_name(r.role)},
                      {"path", r.path},
                      {"duration", r.duration},
                      {"domain", domain_name(r.domain)}};
  if (r.snr_db) j["snr_db"] = *r.snr_db;
  if (r.noise_type) j["noise_type"] = *r.noise_type;
  if (r.paired_clean_id) j["paired_clean_id"] = *r.paired_clean_id;
  return j;
}

inline UtteranceRecord record_from_json(const nlohmann::json& j) {
  UtteranceRecord r;
  r.id = j.at("id").get<std::string>();
  r.role = role_from_name(j.at("role").get<std::string>());
  r.path = j.at("path").get<std::string>();
  r.duration = j.at("duration").get<double>();
  r.domain = domain_from_name(j.at("domain").get<std::string>());
  if (j.contains("snr_db")) r.snr_db = j.at("snr_db").get<double>();
  if (j.contains("noise_type")) r.noise_type = j.at("noise_type").get<std::string>();
  if (j.contains("paired_clean_id")) r.paired_clean_id = j.at("paired_clean_id").get<std::string>();
  return r;
}

inline void save_manifest(const std::string& path, const DomainCorpus& corpus) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write manifest: " + path);
  f << nlohmann::json{{"una_manifest", kManifestVersion}}.dump() << "\n";
  for (const auto& r : corpus.records) f << record_to_json(r).dump() << "\n";
  if (!f) throw IoError("short manifest write: " + path);
}

inline DomainCorpus load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IngestError("cannot open manifest: " + path);
  DomainCorpus corpus;
  corpus.root = fs::path(path).parent_path().string();
  std::string line;
  if (!std::getline(f, line)) throw IngestError("empty manifest: " + path);
  auto header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("una_manifest", -1) != kManifestVersion)
    throw IngestError("bad manifest header: " + path);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IngestError("bad manifest line in " + path + ": " + line);
    corpus.records.push_back(record_from_json(j));
  }
  return corpus;
}

inline void save_eval_manifest(const std::string& path, const EvalSet& set) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write eval manifest: " + path);
  f << nlohmann::json{{"una_eval_manifest", kManifestVersion}}.dump() << "\n";
  for (const auto& r : set.rows)
    f << nlohmann::json{{"id", r.id},
                        {"noisy_path", r.noisy_path},
                        {"reference_path", r.reference_path},
                        {"noise_type", r.noise_type},
                        {"snr_db", r.snr_db}}
             .dump()
      << "\n";
}

inline EvalSet load_eval_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IngestError("cannot open eval manifest: " + path);
  EvalSet set;
  set.root = fs::path(path).parent_path().string();
  std::string line;
  if (!std::getline(f, line)) throw IngestError("empty eval manifest: " + path);
  auto header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("una_eval_manifest", -1) != kManifestVersion)
    throw IngestError("bad eval manifest header: " + path);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    EvalRow r;
    r.id = j.at("id").get<std::string>();
    r.noisy_path = j.at("noisy_path").get<std::string>();
    r.reference_path = j.at("reference_path").get<std::string>();
    r.noise_type = j.value("noise_type", "");
    r.snr_db = j.value("snr_db", 0.0);
    set.rows.push_back(r);
  }
  return set;
}

// ---------------------------------------------------------------------------
// Manifest construction from audio directories.
// ---------------------------------------------------------------------------

// Filename pairing: a source noisy file pairs with the clean file whose stem
// equals the noisy stem after stripping `noisy_suffix` (empty means identical
// stems).
struct PairingRule {
  std::string noisy_suffix;
};

struct IngestDirs {
  std::string source_clean;
  std::string source_noisy;
  std::string target_noisy;
};

inline DomainCorpus build_manifest(const IngestDirs& dirs, const PairingRule& rule,
                                   const std::string& root) {
  auto list_wavs = [](const std::string& dir) {
    std::vector<fs::path> out;
    if (dir.empty()) return out;
    if (!fs::is_directory(dir)) throw IngestError("not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
  };

  DomainCorpus corpus;
  corpus.root = root;
  std::vector<std::string> unreadable;
  auto ingest = [&](const fs::path& p, Role role, Domain domain) -> bool {
    io::WavData wav;
    try {
      wav = io::read_wav(p.string());
    } catch (const Error&) {
      unreadable.push_back(p.string());
      return false;
    }
    UtteranceRecord r;
    r.id = std::string(role == Role::Clean ? "clean" : "noisy") + "/" +
           (domain == Domain::Source ? "src" : "tgt") + "/" + p.stem().string();
    r.role = role;
    r.domain = domain;
    r.path = fs::relative(p, root).string();
    r.duration = static_cast<double>(wav.samples.size()) / wav.sample_rate;
    corpus.records.push_back(r);
    return true;
  };

  for (const auto& p : list_wavs(dirs.source_clean)) ingest(p, Role::Clean, Domain::Source);
  std::vector<fs::path> noisy_files = list_wavs(dirs.source_noisy);
  for (const auto& p : noisy_files) {
    if (!ingest(p, Role::Noisy, Domain::Source)) continue;
    std::string stem = p.stem().string();
    if (!rule.noisy_suffix.empty() && stem.size() > rule.noisy_suffix.size() &&
        stem.ends_with(rule.noisy_suffix))
      stem = stem.substr(0, stem.size() - rule.noisy_suffix.size());
    const std::string clean_id = "clean/src/" + stem;
    if (!corpus.find(clean_id))
      throw PairingError("no clean counterpart for source noisy file " + p.string() +
                         " (expected stem '" + stem + "')");
    corpus.records.back().paired_clean_id = clean_id;
  }
  for (const auto& p : list_wavs(dirs.target_noisy)) ingest(p, Role::Noisy, Domain::Target);

  if (!unreadable.empty()) {
    std::string msg = "unreadable audio files:";
    for (const auto& u : unreadable) msg += " " + u;
    throw IngestError(msg);
  }
  std::sort(corpus.records.begin(), corpus.records.end(),
            [](const UtteranceRecord& a, const UtteranceRecord& b) { return a.id < b.id; });
  corpus.validate();
  return corpus;
}

// ---------------------------------------------------------------------------
// SNR-grid mixing.
// ---------------------------------------------------------------------------

struct MixSpec {
  std::vector<std::string> clean_ids;                // ids inside the clean corpus
  std::vector<std::string> noise_types;              // names, resolved below
  std::map<std::string, std::string> noise_paths;    // name -> wav path (absolute or corpus-rel)
  std::vector<double> snr_grid;
  Domain domain_label = Domain::Source;
  bool loop_noise = true;

  void validate() const {
    if (clean_ids.empty()) throw InvalidConfig("mix spec has no clean utterances");
    if (noise_types.empty()) throw InvalidConfig("mix spec has no noise types");
    if (snr_grid.empty()) throw InvalidConfig("mix spec has an empty SNR grid");
    for (const auto& n : noise_types)
      if (!noise_paths.count(n)) throw InvalidConfig("no noise path for type " + n);
  }

  int64_t output_count() const {
    return static_cast<int64_t>(clean_ids.size()) * static_cast<int64_t>(noise_types.size()) *
           static_cast<int64_t>(snr_grid.size());
  }
};

struct MixFailure {
  std::string output_id;
  std::string category;
  std::string message;
};

struct MixReport {
  int64_t requested = 0;
  int64_t written = 0;
  double max_peak = 0.0;
  int64_t clipped_outputs = 0;  // peak > 1; recorded, never normalized away
  std::vector<MixFailure> failures;
};

inline void save_mix_report(const std::string& path, const MixReport& r) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write mix report: " + path);
  f << "requested\t" << r.requested << "\n";
  f << "written\t" << r.written << "\n";
  f << "max_peak\t" << r.max_peak << "\n";
  f << "clipped_outputs\t" << r.clipped_outputs << "\n";
  for (const auto& fail : r.failures)
    f << "failure\t" << fail.output_id << "\t" << fail.category << "\t" << fail.message << "\n";
}

inline std::string snr_tag(double snr) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+g", snr);
  std::string s(buf);
  for (auto& c : s)
    if (c == '.') c = 'p';
  return s;
}

// Emits the full clean x noise x SNR cross product as WAV files plus manifest
// records. Per-utterance noise offsets derive from (seed, output id), so the
// outputs do not depend on evaluation order or thread count. On any per-item
// failure the partial output is removed and the failure reported.
inline DomainCorpus materialize_mix(const DomainCorpus& cleans, const MixSpec& spec,
                                    const std::string& out_dir, uint64_t seed,
                                    MixReport* report_out = nullptr, int threads = 1,
                                    EvalSet* eval_rows = nullptr) {
  spec.validate();
  fs::create_directories(out_dir);

  std::map<std::string, io::WavData> noises;
  for (const auto& [name, path] : spec.noise_paths) {
    const std::string full =
        fs::path(path).is_absolute() || cleans.root.empty() ? path : (fs::path(cleans.root) / path).string();
    noises[name] = io::read_wav(full);
  }

  struct Job {
    const UtteranceRecord* clean;
    std::string noise;
    double snr;
    std::string out_id;
    std::string filename;
  };
  std::vector<Job> jobs;
  for (const auto& cid : spec.clean_ids) {
    const auto* clean = cleans.find(cid);
    if (!clean || clean->role != Role::Clean)
      throw InvalidConfig("mix spec references unknown clean id " + cid);
    for (const auto& noise : spec.noise_types)
      for (double snr : spec.snr_grid) {
        Job j;
        j.clean = clean;
        j.noise = noise;
        j.snr = snr;
        const std::string stem = fs::path(clean->path).stem().string();
        j.out_id = std::string("noisy/") + (spec.domain_label == Domain::Source ? "src" : "tgt") +
                   "/" + stem + "__" + noise + "__snr" + snr_tag(snr);
        j.filename = stem + "__" + noise + "__snr" + snr_tag(snr) + ".wav";
        jobs.push_back(j);
      }
  }

  MixReport report;
  report.requested = static_cast<int64_t>(jobs.size());
  std::vector<std::optional<UtteranceRecord>> results(jobs.size());
  std::vector<std::optional<MixFailure>> failures(jobs.size());
  std::vector<double> peaks(jobs.size(), 0.0);

  parallel_for(jobs.size(), threads, [&](size_t i) {
    const Job& job = jobs[i];
    const std::string out_path = (fs::path(out_dir) / job.filename).string();
    try {
      io::WavData cw = io::read_wav(cleans.resolve(*job.clean));
      const io::WavData& nw = noises.at(job.noise);
      if (cw.sample_rate != nw.sample_rate)
        throw InvalidConfig("sample-rate mismatch for " + job.out_id);
      dsp::Waveform clean{cw.samples, cw.sample_rate};
      dsp::Waveform noise{nw.samples, nw.sample_rate};
      const uint64_t offset_seed = derive_seed(seed, job.out_id);
      Rng rng(offset_seed);
      const int64_t offset =
          spec.loop_noise && !noise.samples.empty()
              ? static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(noise.samples.size())))
              : 0;
      auto mixed = dsp::mix_at_snr(clean, noise, job.snr, offset);
      io::write_wav(out_path, mixed.mixture.samples, mixed.mixture.sample_rate);
      UtteranceRecord r;
      r.id = job.out_id;
      r.role = Role::Noisy;
      r.domain = spec.domain_label;
      r.path = fs::relative(out_path, cleans.root.empty() ? out_dir : cleans.root).string();
      r.duration = static_cast<double>(mixed.mixture.samples.size()) / mixed.mixture.sample_rate;
      r.snr_db = job.snr;
      r.noise_type = job.noise;
      if (spec.domain_label == Domain::Source) r.paired_clean_id = job.clean->id;
      results[i] = r;
      peaks[i] = mixed.peak;
    } catch (const Error& e) {
      std::error_code ec;
      fs::remove(out_path, ec);  // no partial outputs
      failures[i] = MixFailure{job.out_id, e.category(), e.what()};
    }
  });

  DomainCorpus out;
  out.root = cleans.root.empty() ? out_dir : cleans.root;
  for (size_t i = 0; i < jobs.size(); ++i) {
    if (failures[i]) {
      report.failures.push_back(*failures[i]);
      continue;
    }
    out.records.push_back(*results[i]);
    report.max_peak = std::max(report.max_peak, peaks[i]);
    if (peaks[i] > 1.0) ++report.clipped_outputs;
    ++report.written;
    if (eval_rows) {
      EvalRow row;
      row.id = results[i]->id;
      row.noisy_path = results[i]->path;
      row.reference_path = jobs[i].clean->path;
      row.noise_type = jobs[i].noise;
      row.snr_db = jobs[i].snr;
      eval_rows->rows.push_back(row);
    }
  }
  if (eval_rows) eval_rows->root = out.root;
  std::sort(out.records.begin(), out.records.end(),
            [](const UtteranceRecord& a, const UtteranceRecord& b) { return a.id < b.id; });
  if (report_out) *report_out = report;
  return out;
}

// ---------------------------------------------------------------------------
// Sampling.
// ---------------------------------------------------------------------------

// Re-anchors record paths onto a new root directory (e.g. before saving a
// manifest somewhere other than the corpus root).
inline DomainCorpus rebase(const DomainCorpus& corpus, const std::string& new_root) {
  DomainCorpus out = corpus;
  out.root = new_root;
  for (auto& r : out.records) {
    const fs::path abs = corpus.root.empty() ? fs::path(r.path) : fs::path(corpus.root) / r.path;
    r.path = fs::relative(abs, new_root).string();
  }
  return out;
}

// Uniform target subset without replacement; everything else passes through.
inline DomainCorpus subsample_target(const DomainCorpus& corpus, int64_t n_t, uint64_t seed) {
  std::vector<size_t> target_idx;
  for (size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    if (r.role == Role::Noisy && r.domain == Domain::Target) target_idx.push_back(i);
  }
  if (n_t > static_cast<int64_t>(target_idx.size()))
    throw InsufficientData("requested " + std::to_string(n_t) + " target utterances, corpus has " +
                           std::to_string(target_idx.size()));
  Rng rng(derive_seed(seed, "subsample-target"));
  auto picks = rng.sample_without_replacement(target_idx.size(), static_cast<size_t>(n_t));
  std::vector<bool> keep(corpus.records.size(), false);
  for (size_t p : picks) keep[target_idx[p]] = true;

  DomainCorpus out;
  out.root = corpus.root;
  for (size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    if (r.role == Role::Noisy && r.domain == Domain::Target && !keep[i]) continue;
    out.records.push_back(r);
  }
  return out;
}

// Draws unpaired training batches: clean magnitudes from the source clean
// pool, noisy magnitudes from the target pool, independently and uniformly,
// cropped to fixed-width segments. Pairing metadata is never consulted.
// Spectrograms are cached per utterance.
class UnpairedSampler {
 public:
  UnpairedSampler(const DomainCorpus& corpus, dsp::StftConfig stft, int64_t segment_width)
      : corpus_(corpus), stft_(stft), width_(segment_width) {
    for (const auto& r : corpus_.records) {
      if (r.role == Role::Clean && r.domain == Domain::Source) clean_pool_.push_back(&r);
      if (r.role == Role::Noisy && r.domain == Domain::Target) target_pool_.push_back(&r);
    }
    if (clean_pool_.empty()) throw EmptyPool("no source clean utterances");
    if (target_pool_.empty()) throw EmptyPool("no target noisy utterances");
  }

  int64_t clean_pool_size() const { return static_cast<int64_t>(clean_pool_.size()); }
  int64_t target_pool_size() const { return static_cast<int64_t>(target_pool_.size()); }

  // Ids of target utterances actually drawn so far (budget accounting).
  const std::vector<std::string>& consumed_target_ids() const { return consumed_order_; }

  ugan::UnaBatch sample(int batch_size, Rng& rng) {
    ugan::UnaBatch batch;
    for (int i = 0; i < batch_size; ++i)
      batch.clean.push_back(crop(*clean_pool_[rng.uniform_int(clean_pool_.size())], rng));
    for (int i = 0; i < batch_size; ++i) {
      const auto* rec = target_pool_[rng.uniform_int(target_pool_.size())];
      if (!consumed_.count(rec->id)) {
        consumed_.insert(rec->id);
        consumed_order_.push_back(rec->id);
      }
      batch.target.push_back(crop(*rec, rng));
    }
    return batch;
  }

  // One full-width segment with the utterance id recorded; exposed for the
  // sampling-distribution tests.
  dsp::MagnitudeSegment sample_target_segment(Rng& rng) {
    const auto* rec = target_pool_[rng.uniform_int(target_pool_.size())];
    Rng crop_rng(rng.next_u64());
    auto segs = dsp::segment_magnitude(magnitude_of(*rec), width_, dsp::SegmentMode::RandomCrop,
                                       crop_rng, rec->id);
    return segs[0];
  }

 private:
  const dsp::Spectrogram& magnitude_of(const UtteranceRecord& rec) {
    auto it = cache_.find(rec.id);
    if (it != cache_.end()) return it->second;
    io::WavData wav = io::read_wav(corpus_.resolve(rec));
    dsp::Waveform w{wav.samples, wav.sample_rate};
    auto spec = dsp::stft(w, stft_);
    return cache_.emplace(rec.id, std::move(spec)).first->second;
  }

  Tensor crop(const UtteranceRecord& rec, Rng& rng) {
    auto segs =
        dsp::segment_magnitude(magnitude_of(rec), width_, dsp::SegmentMode::RandomCrop, rng, rec.id);
    return segs[0].values.reshaped({1, segs[0].values.dim(0), segs[0].values.dim(1)});
  }

  DomainCorpus corpus_;
  dsp::StftConfig stft_;
  int64_t width_;
  std::vector<const UtteranceRecord*> clean_pool_, target_pool_;
  std::unordered_map<std::string, dsp::Spectrogram> cache_;
  std::set<std::string> consumed_;
  std::vector<std::string> consumed_order_;
};

}  // namespace una::corpus
