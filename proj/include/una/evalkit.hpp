// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <sys/wait.h>

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "una/corpus.hpp"
#include "una/se_train.hpp"

namespace una::evalkit {

namespace fs = std::filesystem;

struct MetricRow {
  std::string id;
  std::string noise_type;
  double snr_db = 0.0;
  double si_sdr_in = 0.0;
  double si_sdr_out = 0.0;
  double si_sdri = 0.0;
  std::optional<double> pesq;
};

struct Aggregate {
  double si_sdr_in = 0.0, si_sdr_out = 0.0, si_sdri = 0.0;
  std::optional<double> pesq;
  int64_t count = 0;
};

struct MetricReport {
  std::string system_label;
  std::string config_fingerprint;  // of the system checkpoint, when known
  std::vector<MetricRow> rows;
  int64_t excluded = 0;  // rows skipped (missing/unreadable reference)
  std::string pesq_tool;
  std::string pesq_tool_version;

  static Aggregate aggregate_of(const std::vector<const MetricRow*>& rows) {
    Aggregate a;
    double pesq_sum = 0.0;
    int64_t pesq_n = 0;
    for (const auto* r : rows) {
      a.si_sdr_in += r->si_sdr_in;
      a.si_sdr_out += r->si_sdr_out;
      a.si_sdri += r->si_sdri;
      if (r->pesq) {
        pesq_sum += *r->pesq;
        ++pesq_n;
      }
      ++a.count;
    }
    if (a.count) {
      a.si_sdr_in /= static_cast<double>(a.count);
      a.si_sdr_out /= static_cast<double>(a.count);
      a.si_sdri /= static_cast<double>(a.count);
    }
    if (pesq_n) a.pesq = pesq_sum / static_cast<double>(pesq_n);
    return a;
  }

  std::map<std::string, Aggregate> by_noise() const {
    std::map<std::string, std::vector<const MetricRow*>> groups;
    for (const auto& r : rows) groups[r.noise_type].push_back(&r);
    std::map<std::string, Aggregate> out;
    for (const auto& [k, v] : groups) out[k] = aggregate_of(v);
    return out;
  }

  std::map<std::string, Aggregate> by_snr() const {
    std::map<std::string, std::vector<const MetricRow*>> groups;
    for (const auto& r : rows) {
      char key[32];
      std::snprintf(key, sizeof(key), "%g", r.snr_db);
      groups[key].push_back(&r);
    }
    std::map<std::string, Aggregate> out;
    for (const auto& [k, v] : groups) out[k] = aggregate_of(v);
    return out;
  }

  Aggregate overall() const {
    std::vector<const MetricRow*> all;
    for (const auto& r : rows) all.push_back(&r);
    return aggregate_of(all);
  }
};

inline void save_report(const std::string& path, const MetricReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j = {{"id", row.id},          {"noise_type", row.noise_type},
                        {"snr_db", row.snr_db},  {"si_sdr_in", row.si_sdr_in},
                        {"si_sdr_out", row.si_sdr_out}, {"si_sdri", row.si_sdri}};
    if (row.pesq) j["pesq"] = *row.pesq;
    rows.push_back(j);
  }
  nlohmann::json j = {{"system", r.system_label},
                      {"config_fingerprint", r.config_fingerprint},
                      {"excluded", r.excluded},
                      {"rows", rows}};
  if (!r.pesq_tool.empty())
    j["pesq_adapter"] = {{"command", r.pesq_tool}, {"version", r.pesq_tool_version}};
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write report: " + path);
  f << j.dump(2) << "\n";
}

inline MetricReport load_report(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IngestError("cannot open report: " + path);
  nlohmann::json j = nlohmann::json::parse(f);
  MetricReport r;
  r.system_label = j.at("system").get<std::string>();
  r.config_fingerprint = j.value("config_fingerprint", "");
  r.excluded = j.value("excluded", 0);
  for (const auto& e : j.at("rows")) {
    MetricRow row;
    row.id = e.at("id").get<std::string>();
    row.noise_type = e.value("noise_type", "");
    row.snr_db = e.value("snr_db", 0.0);
    row.si_sdr_in = e.at("si_sdr_in").get<double>();
    row.si_sdr_out = e.at("si_sdr_out").get<double>();
    row.si_sdri = e.at("si_sdri").get<double>();
    if (e.contains("pesq")) row.pesq = e.at("pesq").get<double>();
    r.rows.push_back(row);
  }
  if (j.contains("pesq_adapter")) {
    r.pesq_tool = j["pesq_adapter"].value("command", "");
    r.pesq_tool_version = j["pesq_adapter"].value("version", "");
  }
  return r;
}

// ---------------------------------------------------------------------------
// External perceptual-metric adapter.
// ---------------------------------------------------------------------------

// Shells out to a user-supplied command with {enhanced} and {reference}
// placeholders and parses the last numeric token of its stdout. A missing
// tool downgrades to "metric omitted" with a warning; output that runs but
// cannot be parsed is an error.
struct PesqAdapter {
  std::string command_template;  // empty: adapter disabled
  std::string tool_label;        // recorded identity/version string

  bool enabled() const { return !command_template.empty(); }

  std::optional<double> score(const std::string& enhanced_path,
                              const std::string& reference_path) const {
    if (!enabled()) return std::nullopt;
    std::string cmd = command_template;
    auto replace_all = [](std::string& s, const std::string& from, const std::string& to) {
      size_t pos = 0;
      while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
      }
    };
    replace_all(cmd, "{enhanced}", "'" + enhanced_path + "'");
    replace_all(cmd, "{reference}", "'" + reference_path + "'");

    std::FILE* pipe = ::popen((cmd + " 2>/dev/null").c_str(), "r");
    if (!pipe) {
      std::fprintf(stderr, "warning: perceptual metric tool could not be launched; omitting\n");
      return std::nullopt;
    }
    std::string output;
    char buf[256];
    while (std::fgets(buf, sizeof(buf), pipe)) output += buf;
    const int status = ::pclose(pipe);
    const int exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (exit_code == 127 || exit_code == 126) {
      std::fprintf(stderr, "warning: perceptual metric tool not found; omitting metric\n");
      return std::nullopt;
    }
    if (exit_code != 0)
      throw ToolOutputError("metric tool exited with status " + std::to_string(exit_code) +
                            "; output: " + output);
    // Last parseable numeric token wins.
    std::optional<double> value;
    size_t i = 0;
    while (i < output.size()) {
      while (i < output.size() && std::isspace(static_cast<unsigned char>(output[i]))) ++i;
      size_t j = i;
      while (j < output.size() && !std::isspace(static_cast<unsigned char>(output[j]))) ++j;
      if (j > i) {
        const std::string tok = output.substr(i, j - i);
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end && *end == '\0' && end != tok.c_str()) value = v;
      }
      i = j;
    }
    if (!value) throw ToolOutputError("metric tool output had no numeric token: " + output);
    return value;
  }
};

// ---------------------------------------------------------------------------
// System evaluation.
// ---------------------------------------------------------------------------

using EnhanceFn = std::function<dsp::Waveform(const dsp::Waveform&)>;

// Enhances every row and scores SI-SDR before/after. Rows with a missing or
// unreadable reference are skipped and tallied. Inputs are never mutated.
inline MetricReport evaluate_enhancer(const EnhanceFn& enhancer, const corpus::EvalSet& eval_set,
                                      const std::string& system_label,
                                      const PesqAdapter* pesq = nullptr,
                                      const std::string& enhanced_dir = "", int threads = 1) {
  MetricReport report;
  report.system_label = system_label;
  if (pesq && pesq->enabled()) {
    report.pesq_tool = pesq->command_template;
    report.pesq_tool_version = pesq->tool_label;
  }
  if (!enhanced_dir.empty()) fs::create_directories(enhanced_dir);
  const bool need_files = (pesq && pesq->enabled()) || !enhanced_dir.empty();
  const std::string out_dir = !enhanced_dir.empty()
                                  ? enhanced_dir
                                  : (fs::temp_directory_path() / "una_eval_tmp").string();
  if (need_files) fs::create_directories(out_dir);

  std::vector<std::optional<MetricRow>> rows(eval_set.rows.size());
  std::vector<bool> excluded(eval_set.rows.size(), false);
  parallel_for(eval_set.rows.size(), threads, [&](size_t i) {
    const auto& er = eval_set.rows[i];
    io::WavData noisy, ref;
    try {
      ref = io::read_wav((fs::path(eval_set.root) / er.reference_path).string());
      noisy = io::read_wav((fs::path(eval_set.root) / er.noisy_path).string());
    } catch (const Error&) {
      excluded[i] = true;
      return;
    }
    if (noisy.samples.size() != ref.samples.size() || noisy.sample_rate != ref.sample_rate) {
      excluded[i] = true;
      return;
    }
    dsp::Waveform in{noisy.samples, noisy.sample_rate};
    auto enhanced = enhancer(in);
    MetricRow row;
    row.id = er.id;
    row.noise_type = er.noise_type;
    row.snr_db = er.snr_db;
    row.si_sdr_in = dsp::si_sdr(noisy.samples, ref.samples);
    row.si_sdr_out = dsp::si_sdr(enhanced.samples, ref.samples);
    row.si_sdri = row.si_sdr_out - row.si_sdr_in;
    if (need_files) {
      const std::string out_path = (fs::path(out_dir) / (er.id + "_enhanced.wav")).string();
      fs::create_directories(fs::path(out_path).parent_path());
      io::write_wav(out_path, enhanced.samples, enhanced.sample_rate);
      if (pesq && pesq->enabled())
        row.pesq = pesq->score(out_path, (fs::path(eval_set.root) / er.reference_path).string());
    }
    rows[i] = row;
  });
  for (size_t i = 0; i < rows.size(); ++i) {
    if (excluded[i])
      ++report.excluded;
    else if (rows[i])
      report.rows.push_back(*rows[i]);
  }
  return report;
}

inline MetricReport evaluate_system(const senet::SeNetwork& net, const corpus::EvalSet& eval_set,
                                    const std::string& system_label,
                                    const PesqAdapter* pesq = nullptr,
                                    const std::string& enhanced_dir = "", int threads = 1) {
  return evaluate_enhancer([&net](const dsp::Waveform& w) { return senet::enhance(net, w); },
                           eval_set, system_label, pesq, enhanced_dir, threads);
}

// Scores the unprocessed mixtures themselves (the "Unprocessed" table row).
inline MetricReport evaluate_unprocessed(const corpus::EvalSet& eval_set,
                                         const std::string& label = "Unprocessed") {
  MetricReport report;
  report.system_label = label;
  for (const auto& er : eval_set.rows) {
    io::WavData noisy, ref;
    try {
      ref = io::read_wav((fs::path(eval_set.root) / er.reference_path).string());
      noisy = io::read_wav((fs::path(eval_set.root) / er.noisy_path).string());
    } catch (const Error&) {
      ++report.excluded;
      continue;
    }
    if (noisy.samples.size() != ref.samples.size()) {
      ++report.excluded;
      continue;
    }
    MetricRow row;
    row.id = er.id;
    row.noise_type = er.noise_type;
    row.snr_db = er.snr_db;
    row.si_sdr_in = dsp::si_sdr(noisy.samples, ref.samples);
    row.si_sdr_out = row.si_sdr_in;
    row.si_sdri = 0.0;
    report.rows.push_back(row);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Comparison table rendering.
// ---------------------------------------------------------------------------

enum class TableMetric { Pesq, SiSdri, SiSdrOut };
enum class TableGroup { NoiseType, Snr };

// Rows are systems, columns the group keys plus an "Avg." column (the mean of
// the per-key values). When a report labeled "Unprocessed" is present, other
// rows carry a relative-improvement percentage against it, computed on the
// Avg. column as 100*(system - baseline)/baseline rounded to one decimal.
inline std::string render_table(const std::vector<MetricReport>& reports, TableGroup group,
                                TableMetric metric) {
  if (reports.empty()) throw InvalidConfig("render_table needs at least one report");

  auto metric_of = [metric](const Aggregate& a) -> std::optional<double> {
    switch (metric) {
      case TableMetric::Pesq: return a.pesq;
      case TableMetric::SiSdri: return a.si_sdri;
      default: return a.si_sdr_out;
    }
  };
  auto groups_of = [group](const MetricReport& r) {
    return group == TableGroup::NoiseType ? r.by_noise() : r.by_snr();
  };

  // All reports must cover the same keys.
  std::vector<std::string> keys;
  for (const auto& [k, a] : groups_of(reports.front())) keys.push_back(k);
  for (const auto& r : reports) {
    auto g = groups_of(r);
    if (g.size() != keys.size())
      throw GroupingError("reports disagree on grouping keys (system " + r.system_label + ")");
    for (const auto& k : keys)
      if (!g.count(k)) throw GroupingError("system " + r.system_label + " lacks group " + k);
  }

  const MetricReport* baseline = nullptr;
  for (const auto& r : reports)
    if (r.system_label == "Unprocessed") baseline = &r;

  auto avg_of = [&](const MetricReport& r) -> std::optional<double> {
    auto g = groups_of(r);
    double sum = 0.0;
    for (const auto& k : keys) {
      auto v = metric_of(g.at(k));
      if (!v) return std::nullopt;
      sum += *v;
    }
    return sum / static_cast<double>(keys.size());
  };

  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"System"};
  for (const auto& k : keys) header.push_back(k);
  header.push_back("Avg.");
  cells.push_back(header);

  std::optional<double> base_avg;
  if (baseline) base_avg = avg_of(*baseline);

  for (const auto& r : reports) {
    std::vector<std::string> row{r.system_label};
    auto g = groups_of(r);
    char buf[64];
    for (const auto& k : keys) {
      auto v = metric_of(g.at(k));
      if (v)
        std::snprintf(buf, sizeof(buf), "%.2f", *v);
      else
        std::snprintf(buf, sizeof(buf), "-");
      row.push_back(buf);
    }
    auto avg = avg_of(r);
    std::string avg_cell = "-";
    if (avg) {
      std::snprintf(buf, sizeof(buf), "%.2f", *avg);
      avg_cell = buf;
      if (baseline && base_avg && &r != baseline && *base_avg != 0.0) {
        const double pct = 100.0 * (*avg - *base_avg) / *base_avg;
        std::snprintf(buf, sizeof(buf), " %+.1f%%", pct);
        avg_cell += buf;
      }
    }
    row.push_back(avg_cell);
    cells.push_back(row);
  }

  std::vector<size_t> widths(cells.front().size(), 0);
  for (const auto& row : cells)
    for (size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  std::string out;
  for (size_t rix = 0; rix < cells.size(); ++rix) {
    const auto& row = cells[rix];
    for (size_t c = 0; c < row.size(); ++c) {
      out += row[c];
      out.append(widths[c] - row[c].size() + (c + 1 < row.size() ? 2 : 0), ' ');
    }
    out += "\n";
    if (rix == 0) {
      size_t total = 0;
      for (size_t c = 0; c < widths.size(); ++c) total += widths[c] + (c + 1 < widths.size() ? 2 : 0);
      out.append(total, '-');
      out += "\n";
    }
  }
  return out;
}

}  // namespace una::evalkit
