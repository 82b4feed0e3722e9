// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "una/evalkit.hpp"
#include "una/specfig.hpp"
#include "una/synth.hpp"

using namespace una;
using namespace una::evalkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

corpus::EvalSet toy_eval_set(const fs::path& root, int rows, uint64_t seed) {
  corpus::EvalSet set;
  set.root = root.string();
  fs::create_directories(root);
  Rng rng(seed);
  for (int i = 0; i < rows; ++i) {
    std::vector<double> ref(2000), noisy(2000);
    for (size_t j = 0; j < ref.size(); ++j) {
      ref[j] = 0.2 * std::sin(2.0 * M_PI * (200.0 + 40.0 * i) * static_cast<double>(j) / 16000.0);
      noisy[j] = ref[j] + 0.05 * rng.normal();
    }
    corpus::EvalRow row;
    row.id = "row" + std::to_string(i);
    row.reference_path = "ref" + std::to_string(i) + ".wav";
    row.noisy_path = "noisy" + std::to_string(i) + ".wav";
    row.noise_type = i % 2 == 0 ? "rotor" : "cry";
    row.snr_db = i % 2 == 0 ? 0.0 : 6.0;
    io::write_wav((root / row.reference_path).string(), ref, 16000);
    io::write_wav((root / row.noisy_path).string(), noisy, 16000);
    set.rows.push_back(row);
  }
  return set;
}

MetricReport report_with_pesq(const std::string& label, const std::string& noise, double pesq_avg) {
  MetricReport r;
  r.system_label = label;
  MetricRow row;
  row.id = label + "-row";
  row.noise_type = noise;
  row.snr_db = 0.0;
  row.pesq = pesq_avg;
  r.rows.push_back(row);
  return r;
}

}  // namespace

TEST_CASE("evaluate: oracle passthrough hits the cap, identity scores zero improvement") {
  TempDir tmp("una_evalkit_oracle");
  auto set = toy_eval_set(tmp.path, 4, 3);

  SECTION("an oracle that returns the reference caps si_sdr_out") {
    // Rows whose noisy file IS the reference, scored by the identity map.
    corpus::EvalSet oracle_set = set;
    for (auto& r : oracle_set.rows) r.noisy_path = r.reference_path;
    auto rep = evaluate_enhancer([](const dsp::Waveform& w) { return w; }, oracle_set, "oracle");
    REQUIRE(rep.rows.size() == 4);
    for (const auto& row : rep.rows) REQUIRE(row.si_sdr_out == dsp::kSiSdrCapDb);
  }
  SECTION("the identity system has zero SI-SDR improvement on every row") {
    auto rep = evaluate_enhancer([](const dsp::Waveform& w) { return w; }, set, "identity");
    REQUIRE(rep.rows.size() == 4);
    for (const auto& row : rep.rows) {
      REQUIRE(row.si_sdri == 0.0);
      REQUIRE(row.si_sdr_out == row.si_sdr_in);
    }
  }
  SECTION("missing references are skipped and tallied") {
    corpus::EvalSet broken = set;
    broken.rows[1].reference_path = "does_not_exist.wav";
    auto rep = evaluate_enhancer([](const dsp::Waveform& w) { return w; }, broken, "identity");
    REQUIRE(rep.rows.size() == 3);
    REQUIRE(rep.excluded == 1);
  }
  SECTION("aggregates equal recomputation from rows (independent re-aggregation)") {
    auto rep = evaluate_enhancer(
        [](const dsp::Waveform& w) {
          dsp::Waveform out = w;
          for (auto& v : out.samples) v *= 0.5;
          return out;
        },
        set, "half");
    auto by_noise = rep.by_noise();
    for (const auto& [key, agg] : by_noise) {
      double sum = 0.0;
      int64_t count = 0;
      for (const auto& row : rep.rows)
        if (row.noise_type == key) {
          sum += row.si_sdri;
          ++count;
        }
      REQUIRE(agg.count == count);
      REQUIRE(agg.si_sdri == Catch::Approx(sum / count).margin(1e-12));
    }
    // Row identity: si_sdri = si_sdr_out - si_sdr_in.
    for (const auto& row : rep.rows)
      REQUIRE(row.si_sdri == Catch::Approx(row.si_sdr_out - row.si_sdr_in).margin(1e-12));
  }
  SECTION("report save/load round trip") {
    auto rep = evaluate_enhancer([](const dsp::Waveform& w) { return w; }, set, "identity");
    const auto path = (tmp.path / "report.json").string();
    save_report(path, rep);
    auto loaded = load_report(path);
    REQUIRE(loaded.system_label == rep.system_label);
    REQUIRE(loaded.rows.size() == rep.rows.size());
    for (size_t i = 0; i < rep.rows.size(); ++i) {
      REQUIRE(loaded.rows[i].id == rep.rows[i].id);
      REQUIRE(loaded.rows[i].si_sdri == rep.rows[i].si_sdri);
    }
  }
}

TEST_CASE("render_table: relative improvement convention") {
  // The printed means 1.13 -> 1.59 must render as +40.7%.
  auto base = report_with_pesq("Unprocessed", "helicopter", 1.13);
  auto sys = report_with_pesq("UNA-GAN", "helicopter", 1.59);
  auto table = render_table({base, sys}, TableGroup::NoiseType, TableMetric::Pesq);
  INFO(table);
  REQUIRE(table.find("+40.7%") != std::string::npos);
  REQUIRE(table.find("1.13") != std::string::npos);
  REQUIRE(table.find("1.59") != std::string::npos);

  SECTION("single report renders without percentages") {
    auto table1 = render_table({sys}, TableGroup::NoiseType, TableMetric::Pesq);
    REQUIRE(table1.find('%') == std::string::npos);
  }
  SECTION("disjoint grouping keys are a grouping error") {
    auto other = report_with_pesq("Other", "cafeteria", 2.0);
    REQUIRE_THROWS_AS(render_table({base, other}, TableGroup::NoiseType, TableMetric::Pesq),
                      GroupingError);
  }
  SECTION("the baseline row itself carries no percentage") {
    auto table2 = render_table({base, sys}, TableGroup::NoiseType, TableMetric::Pesq);
    auto base_line_start = table2.find("Unprocessed");
    auto base_line_end = table2.find('\n', base_line_start);
    REQUIRE(table2.substr(base_line_start, base_line_end - base_line_start).find('%') ==
            std::string::npos);
  }
}

TEST_CASE("pesq adapter: parse contract") {
  TempDir tmp("una_pesq");
  const auto wav = (tmp.path / "a.wav").string();
  io::write_wav(wav, std::vector<double>(1600, 0.1), 16000);

  SECTION("unconfigured adapter leaves the metric empty") {
    PesqAdapter off;
    REQUIRE_FALSE(off.enabled());
    REQUIRE(off.score(wav, wav) == std::nullopt);
  }
  SECTION("a tool printing a score is parsed") {
    const auto tool = (tmp.path / "mock_pesq.sh").string();
    std::ofstream(tool) << "#!/bin/sh\necho 'MOS-LQO = 2.91'\n";
    fs::permissions(tool, fs::perms::owner_all);
    PesqAdapter adapter{tool + " {enhanced} {reference}", "mock-1.0"};
    auto score = adapter.score(wav, wav);
    REQUIRE(score.has_value());
    REQUIRE(*score == Catch::Approx(2.91));
  }
  SECTION("garbage output raises a tool error with the captured text") {
    const auto tool = (tmp.path / "garbage.sh").string();
    std::ofstream(tool) << "#!/bin/sh\necho 'no numbers here'\n";
    fs::permissions(tool, fs::perms::owner_all);
    PesqAdapter adapter{tool + " {enhanced} {reference}", "garbage"};
    try {
      adapter.score(wav, wav);
      FAIL("expected ToolOutputError");
    } catch (const ToolOutputError& e) {
      REQUIRE(std::string(e.what()).find("no numbers here") != std::string::npos);
    }
  }
  SECTION("an absent tool downgrades to an omitted metric") {
    PesqAdapter adapter{"/definitely/not/here/pesq {enhanced} {reference}", "ghost"};
    REQUIRE(adapter.score(wav, wav) == std::nullopt);
  }
  SECTION("adapter identity is recorded in evaluation reports") {
    const auto tool = (tmp.path / "mock2.sh").string();
    std::ofstream(tool) << "#!/bin/sh\necho 3.05\n";
    fs::permissions(tool, fs::perms::owner_all);
    auto set = toy_eval_set(tmp.path / "rows", 2, 9);
    PesqAdapter adapter{tool + " {enhanced} {reference}", "mock-2.0"};
    auto rep = evaluate_enhancer([](const dsp::Waveform& w) { return w; }, set, "sys", &adapter,
                                 (tmp.path / "enh").string());
    REQUIRE(rep.pesq_tool_version == "mock-2.0");
    for (const auto& row : rep.rows) {
      REQUIRE(row.pesq.has_value());
      REQUIRE(*row.pesq == Catch::Approx(3.05));
    }
  }
}

TEST_CASE("spectrogram figure export") {
  TempDir tmp("una_specfig");
  dsp::StftConfig cfg;
  cfg.fft_size = 64;
  cfg.hop = 16;

  auto spec_of = [&](double freq, double amp) {
    dsp::Waveform w;
    w.samples.resize(4000);
    for (size_t i = 0; i < w.samples.size(); ++i)
      w.samples[i] = amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / 16000.0);
    return dsp::stft(w, cfg);
  };
  auto a = spec_of(500.0, 0.1);
  auto b = spec_of(2000.0, 0.8);
  dsp::Waveform zero;
  zero.samples.assign(4000, 0.0);
  auto c = dsp::stft(zero, cfg);

  std::vector<specfig::Panel> panels{{"clean", &a}, {"simulated", &b}, {"real target", &c}};
  const auto out = (tmp.path / "fig.ppm").string();
  auto info = specfig::export_spectrogram_figure(panels, out);

  SECTION("one composite image with all panels") {
    REQUIRE(fs::exists(out));
    std::ifstream f(out, std::ios::binary);
    std::string magic;
    f >> magic;
    int w, h, maxv;
    f >> w >> h >> maxv;
    REQUIRE(magic == "P6");
    REQUIRE(w == info.width);
    REQUIRE(h == info.height);
    // Three panels plus separators.
    REQUIRE(w >= 3 * static_cast<int>(a.frames()));
  }
  SECTION("shared color scale anchors at the global maximum") {
    double global_max = 0.0;
    for (const auto* s : {&a, &b, &c})
      for (double v : s->magnitude.vec()) global_max = std::max(global_max, v);
    REQUIRE(info.db_max == Catch::Approx(20.0 * std::log10(global_max)).margin(1e-9));
    REQUIRE(info.db_min == Catch::Approx(info.db_max - 80.0).margin(1e-9));
  }
  SECTION("mismatched analysis configs are rejected") {
    dsp::StftConfig other = cfg;
    other.hop = 32;
    dsp::Waveform w;
    w.samples.assign(4000, 0.1);
    auto d = dsp::stft(w, other);
    std::vector<specfig::Panel> bad{{"a", &a}, {"d", &d}};
    REQUIRE_THROWS_AS(specfig::export_spectrogram_figure(bad, (tmp.path / "bad.ppm").string()),
                      InvalidConfig);
  }
}
