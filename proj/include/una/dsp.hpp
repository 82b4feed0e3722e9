// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "una/common.hpp"
#include "una/tensor.hpp"

namespace una::dsp {

struct Waveform {
  std::vector<double> samples;  // finite, nominal range [-1, 1]
  int sample_rate = 16000;

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
};

enum class Window { Hann, Rect };

inline Window window_from_name(const std::string& name) {
  if (name == "hann") return Window::Hann;
  if (name == "rect") return Window::Rect;
  throw InvalidConfig("unknown window: " + name);
}

inline std::string window_name(Window w) { return w == Window::Hann ? "hann" : "rect"; }

// Analysis/synthesis parameters. Defaults give fft_size/2 + 1 = 129 frequency
// bins. fft_size must be a power of two.
struct StftConfig {
  int fft_size = 256;
  int hop = 64;
  Window window = Window::Hann;
  bool center_padding = true;

  int bins() const { return fft_size / 2 + 1; }
  int pad() const { return center_padding ? fft_size / 2 : 0; }

  // Frame count for a signal of n samples:
  //   frames = floor((n + 2*pad - fft_size) / hop) + 1, pad = fft_size/2 when
  //   center_padding else 0.
  int64_t frames_for(int64_t n) const {
    int64_t eff = n + 2 * pad() - fft_size;
    if (eff < 0) return 0;
    return eff / hop + 1;
  }

  void validate() const {
    if (fft_size < 4 || (fft_size & (fft_size - 1)) != 0)
      throw InvalidConfig("fft_size must be a power of two >= 4");
    if (hop < 1 || hop > fft_size) throw InvalidConfig("hop must satisfy 1 <= hop <= fft_size");
  }
};

struct Spectrogram {
  Tensor magnitude;  // [bins x frames], elementwise >= 0
  Tensor phase;      // [bins x frames], radians
  StftConfig config;
  int sample_rate = 16000;
  int64_t n_samples = -1;  // original length when produced by stft(); -1 if unknown

  int64_t bins() const { return magnitude.rank() == 2 ? magnitude.dim(0) : 0; }
  int64_t frames() const { return magnitude.rank() == 2 ? magnitude.dim(1) : 0; }
};

struct MagnitudeSegment {
  Tensor values;  // [bins x width]
  std::string source_utterance;
  int64_t frame_offset = 0;
  bool padded = false;
};

namespace detail {

inline std::vector<double> make_window(Window w, int n) {
  std::vector<double> win(static_cast<size_t>(n), 1.0);
  if (w == Window::Hann) {
    for (int i = 0; i < n; ++i) win[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
  }
  return win;
}

// Iterative radix-2 complex FFT, in place. inverse=true applies conjugation
// and 1/n scaling.
inline void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

// Minimum of the squared-window overlap-add sum over one steady-state hop
// period. Values near zero mean the configuration cannot be inverted.
inline double cola_floor(const StftConfig& cfg) {
  auto win = make_window(cfg.window, cfg.fft_size);
  double floor_val = 1e300;
  for (int t = 0; t < cfg.hop; ++t) {
    double acc = 0.0;
    for (int m = -cfg.fft_size / cfg.hop - 1; m <= cfg.fft_size / cfg.hop + 1; ++m) {
      int64_t idx = static_cast<int64_t>(t) - static_cast<int64_t>(m) * cfg.hop;
      if (idx >= 0 && idx < cfg.fft_size) acc += win[static_cast<size_t>(idx)] * win[static_cast<size_t>(idx)];
    }
    floor_val = std::min(floor_val, acc);
  }
  return floor_val;
}

}  // namespace detail

inline bool satisfies_cola(const StftConfig& cfg) { return detail::cola_floor(cfg) > 1e-6; }

inline Spectrogram stft(const Waveform& w, const StftConfig& cfg) {
  cfg.validate();
  const int64_t n = w.size();
  if (n < cfg.fft_size) throw InputTooShort("signal shorter than one analysis frame");
  const int N = cfg.fft_size;
  const int64_t pad = cfg.pad();
  const int64_t frames = cfg.frames_for(n);
  const int bins = cfg.bins();
  auto win = detail::make_window(cfg.window, N);

  Spectrogram out;
  out.config = cfg;
  out.sample_rate = w.sample_rate;
  out.n_samples = n;
  out.magnitude = Tensor({bins, frames});
  out.phase = Tensor({bins, frames});

  std::vector<std::complex<double>> buf(static_cast<size_t>(N));
  for (int64_t f = 0; f < frames; ++f) {
    const int64_t start = f * cfg.hop - pad;
    for (int i = 0; i < N; ++i) {
      int64_t idx = start + i;
      double v = (idx >= 0 && idx < n) ? w.samples[static_cast<size_t>(idx)] : 0.0;
      buf[static_cast<size_t>(i)] = v * win[static_cast<size_t>(i)];
    }
    detail::fft_radix2(buf, false);
    for (int k = 0; k < bins; ++k) {
      out.magnitude.at(k, f) = std::abs(buf[static_cast<size_t>(k)]);
      out.phase.at(k, f) = std::arg(buf[static_cast<size_t>(k)]);
    }
  }
  return out;
}

inline Waveform istft(const Spectrogram& spec) {
  const StftConfig& cfg = spec.config;
  cfg.validate();
  if (!satisfies_cola(cfg))
    throw InvalidConfig("window/hop pair does not satisfy the overlap-add condition");
  if (spec.magnitude.rank() != 2 || !spec.magnitude.same_shape(spec.phase))
    throw ShapeError("magnitude and phase must be 2-D with equal shapes");
  const int N = cfg.fft_size;
  const int bins = cfg.bins();
  if (spec.bins() != bins) throw ShapeError("spectrogram bin count does not match config");
  const int64_t frames = spec.frames();
  const int64_t pad = cfg.pad();
  auto win = detail::make_window(cfg.window, N);

  const int64_t padded_len = (frames - 1) * cfg.hop + N;
  std::vector<double> num(static_cast<size_t>(padded_len), 0.0);
  std::vector<double> den(static_cast<size_t>(padded_len), 0.0);

  std::vector<std::complex<double>> buf(static_cast<size_t>(N));
  for (int64_t f = 0; f < frames; ++f) {
    for (int k = 0; k < bins; ++k) {
      double m = spec.magnitude.at(k, f);
      double p = spec.phase.at(k, f);
      buf[static_cast<size_t>(k)] = std::polar(m, p);
    }
    for (int k = bins; k < N; ++k) buf[static_cast<size_t>(k)] = std::conj(buf[static_cast<size_t>(N - k)]);
    detail::fft_radix2(buf, true);
    const int64_t start = f * cfg.hop;
    for (int i = 0; i < N; ++i) {
      num[static_cast<size_t>(start + i)] += buf[static_cast<size_t>(i)].real() * win[static_cast<size_t>(i)];
      den[static_cast<size_t>(start + i)] += win[static_cast<size_t>(i)] * win[static_cast<size_t>(i)];
    }
  }

  int64_t out_len = spec.n_samples >= 0 ? spec.n_samples : padded_len - 2 * pad;
  out_len = std::min<int64_t>(out_len, padded_len - pad);
  Waveform out;
  out.sample_rate = spec.sample_rate;
  out.samples.resize(static_cast<size_t>(std::max<int64_t>(out_len, 0)), 0.0);
  for (int64_t i = 0; i < out_len; ++i) {
    const size_t j = static_cast<size_t>(i + pad);
    out.samples[static_cast<size_t>(i)] = den[j] > 1e-10 ? num[j] / den[j] : 0.0;
  }
  return out;
}

enum class SegmentMode { RandomCrop, Tiled };

// Cuts a magnitude into fixed-width segments. RandomCrop draws one uniformly
// placed window (padding short inputs); Tiled covers the whole magnitude with
// ceil(frames/width) segments, zero-padding the last.
inline std::vector<MagnitudeSegment> segment_magnitude(const Spectrogram& spec, int64_t width,
                                                       SegmentMode mode, Rng& rng,
                                                       const std::string& utterance_id = "") {
  if (width < 1) throw InvalidConfig("segment width must be >= 1");
  const int64_t bins = spec.bins();
  const int64_t frames = spec.frames();
  if (frames < 1) throw InputTooShort("spectrogram has no frames");

  auto cut = [&](int64_t offset) {
    MagnitudeSegment seg;
    seg.values = Tensor({bins, width});
    seg.source_utterance = utterance_id;
    seg.frame_offset = offset;
    for (int64_t k = 0; k < bins; ++k)
      for (int64_t f = 0; f < width; ++f) {
        int64_t src = offset + f;
        seg.values.at(k, f) = src < frames ? spec.magnitude.at(k, src) : 0.0;
      }
    seg.padded = offset + width > frames;
    return seg;
  };

  std::vector<MagnitudeSegment> out;
  if (mode == SegmentMode::RandomCrop) {
    int64_t offset = 0;
    if (frames > width) offset = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(frames - width + 1)));
    out.push_back(cut(offset));
  } else {
    const int64_t count = (frames + width - 1) / width;
    for (int64_t s = 0; s < count; ++s) out.push_back(cut(s * width));
  }
  return out;
}

inline double rms(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return v.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(v.size()));
}

// Tiles or trims `noise` to exactly n samples, starting from a circular offset.
inline std::vector<double> loop_to_length(const std::vector<double>& noise, int64_t n,
                                          int64_t offset = 0) {
  if (noise.empty()) throw SilentNoise("noise signal is empty");
  std::vector<double> out(static_cast<size_t>(n));
  const int64_t m = static_cast<int64_t>(noise.size());
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = noise[static_cast<size_t>((offset + i) % m)];
  return out;
}

struct MixResult {
  Waveform mixture;
  double gain = 0.0;  // applied to noise
  double peak = 0.0;  // max |sample| of the mixture; may exceed 1, recorded not fixed
};

// mixture = clean + g * noise with g = rms(clean)/rms(noise) * 10^(-snr/20).
// The noise is looped/trimmed to the clean length first so the realized SNR is
// exact by construction. No clipping normalization is applied.
inline MixResult mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db,
                            int64_t noise_offset = 0) {
  if (clean.sample_rate != noise.sample_rate)
    throw InvalidConfig("sample-rate mismatch between clean and noise");
  if (clean.samples.empty()) throw SilentClean("clean signal is empty");
  auto looped = loop_to_length(noise.samples, clean.size(), noise_offset);
  const double rms_c = rms(clean.samples);
  const double rms_n = rms(looped);
  if (rms_n <= 1e-300) throw SilentNoise("noise signal has zero power");
  if (rms_c <= 1e-300) throw SilentClean("clean signal has zero power");

  MixResult r;
  r.gain = rms_c / rms_n * std::pow(10.0, -snr_db / 20.0);
  r.mixture.sample_rate = clean.sample_rate;
  r.mixture.samples.resize(clean.samples.size());
  for (size_t i = 0; i < clean.samples.size(); ++i) {
    r.mixture.samples[i] = clean.samples[i] + r.gain * looped[i];
    r.peak = std::max(r.peak, std::abs(r.mixture.samples[i]));
  }
  return r;
}

constexpr double kSiSdrCapDb = 60.0;

// Scale-invariant signal-to-distortion ratio in dB:
//   10*log10(||a s||^2 / ||a s - e||^2),  a = <e,s>/<s,s>.
// Means are kept as-is by default; the optional zero_mean flag centers both
// signals first. The result is clamped to [-60, 60] dB so degenerate inputs
// stay finite.
inline double si_sdr(const std::vector<double>& estimate, const std::vector<double>& reference,
                     bool zero_mean = false) {
  if (estimate.size() != reference.size())
    throw LengthMismatch("estimate and reference differ in length");
  if (estimate.empty()) throw LengthMismatch("empty signals");

  const size_t n = estimate.size();
  double mean_e = 0.0, mean_r = 0.0;
  if (zero_mean) {
    for (size_t i = 0; i < n; ++i) mean_e += estimate[i];
    for (size_t i = 0; i < n; ++i) mean_r += reference[i];
    mean_e *= 1.0 / static_cast<double>(n);
    mean_r *= 1.0 / static_cast<double>(n);
  }
  double dot_er = 0.0, dot_rr = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double e = estimate[i] - mean_e;
    const double r = reference[i] - mean_r;
    dot_er += e * r;
    dot_rr += r * r;
  }
  if (dot_rr <= 1e-300) throw ZeroReference("reference has zero energy");
  const double alpha = dot_er / dot_rr;
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double e = estimate[i] - mean_e;
    const double r = reference[i] - mean_r;
    const double t = alpha * r;
    num += t * t;
    den += (t - e) * (t - e);
  }
  const double val = 10.0 * std::log10(num / (den + 1e-300) + 1e-300);
  return std::clamp(val, -kSiSdrCapDb, kSiSdrCapDb);
}

inline double si_sdr(const Waveform& estimate, const Waveform& reference, bool zero_mean = false) {
  return si_sdr(estimate.samples, reference.samples, zero_mean);
}

}  // namespace una::dsp
