// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "una/dsp.hpp"

// Multi-panel log-magnitude spectrogram figures as binary PPM (a lossless
// raster every image viewer reads). Panels share one color scale anchored at
// the global magnitude maximum; labels are drawn with a built-in 5x7 font.
namespace una::specfig {

struct Panel {
  std::string label;
  const dsp::Spectrogram* spec = nullptr;
};

struct FigureInfo {
  double db_max = 0.0;  // top of the shared color scale
  double db_min = 0.0;  // floor of the shared color scale
  int width = 0;
  int height = 0;
};

namespace detail {

// 5x7 glyphs, one byte per row, low 5 bits used.
inline const unsigned char* glyph(char c) {
  static const unsigned char font[][7] = {
      {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11},  // A
      {0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e},  // B
      {0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e},  // C
      {0x1e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1e},  // D
      {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f},  // E
      {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10},  // F
      {0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f},  // G
      {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11},  // H
      {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e},  // I
      {0x01, 0x01, 0x01, 0x01, 0x11, 0x11, 0x0e},  // J
      {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11},  // K
      {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f},  // L
      {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11},  // M
      {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11},  // N
      {0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e},  // O
      {0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10},  // P
      {0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d},  // Q
      {0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11},  // R
      {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e},  // S
      {0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},  // T
      {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e},  // U
      {0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04},  // V
      {0x11, 0x11, 0x11, 0x15, 0x15, 0x1b, 0x11},  // W
      {0x11, 0x0a, 0x04, 0x04, 0x04, 0x0a, 0x11},  // X
      {0x11, 0x11, 0x0a, 0x04, 0x04, 0x04, 0x04},  // Y
      {0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f},  // Z
      {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e},  // 0
      {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e},  // 1
      {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f},  // 2
      {0x0e, 0x11, 0x01, 0x06, 0x01, 0x11, 0x0e},  // 3
      {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02},  // 4
      {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e},  // 5
      {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e},  // 6
      {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
      {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e},  // 8
      {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c},  // 9
      {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00},  // -
      {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1f},  // _
      {0x00, 0x04, 0x04, 0x1f, 0x04, 0x04, 0x00},  // +
      {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c},  // .
      {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00},  // space
  };
  if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  if (c >= 'A' && c <= 'Z') return font[c - 'A'];
  if (c >= '0' && c <= '9') return font[26 + (c - '0')];
  switch (c) {
    case '-': return font[36];
    case '_': return font[37];
    case '+': return font[38];
    case '.': return font[39];
    default: return font[40];
  }
}

struct Rgb {
  unsigned char r, g, b;
};

// Dark-blue -> blue -> green -> yellow color ramp for t in [0, 1].
inline Rgb colormap(double t) {
  t = std::clamp(t, 0.0, 1.0);
  static const double stops[5][3] = {{0.05, 0.03, 0.25},
                                     {0.15, 0.25, 0.55},
                                     {0.10, 0.55, 0.45},
                                     {0.55, 0.80, 0.20},
                                     {0.99, 0.95, 0.15}};
  const double x = t * 4.0;
  const int i = std::min(3, static_cast<int>(x));
  const double f = x - i;
  Rgb c;
  c.r = static_cast<unsigned char>(255.0 * (stops[i][0] + f * (stops[i + 1][0] - stops[i][0])));
  c.g = static_cast<unsigned char>(255.0 * (stops[i][1] + f * (stops[i + 1][1] - stops[i][1])));
  c.b = static_cast<unsigned char>(255.0 * (stops[i][2] + f * (stops[i + 1][2] - stops[i][2])));
  return c;
}

}  // namespace detail

// Renders labeled panels side by side (low frequencies at the bottom) and
// writes a binary PPM. Returns the shared color scale and image size.
inline FigureInfo export_spectrogram_figure(const std::vector<Panel>& panels,
                                            const std::string& path, double db_range = 80.0) {
  if (panels.empty()) throw InvalidConfig("figure needs at least one panel");
  for (const auto& p : panels) {
    if (!p.spec) throw InvalidConfig("null panel spectrogram");
    if (p.spec->config.fft_size != panels.front().spec->config.fft_size ||
        p.spec->config.hop != panels.front().spec->config.hop)
      throw InvalidConfig("panels must share the analysis configuration");
  }

  // Shared scale: global maximum over panels, floor db_range below it.
  double global_max = 0.0;
  for (const auto& p : panels)
    for (double v : p.spec->magnitude.vec()) global_max = std::max(global_max, v);
  const double db_max = 20.0 * std::log10(std::max(global_max, 1e-12));
  const double db_min = db_max - db_range;

  const int label_h = 18;
  const int pad = 2;
  const int bins = static_cast<int>(panels.front().spec->bins());
  int total_w = pad;
  int max_frames = 0;
  for (const auto& p : panels) {
    total_w += static_cast<int>(p.spec->frames()) + pad;
    max_frames = std::max(max_frames, static_cast<int>(p.spec->frames()));
  }
  const int W = total_w;
  const int H = label_h + bins + pad;

  std::vector<unsigned char> img(static_cast<size_t>(W) * H * 3, 30);
  auto put = [&](int x, int y, detail::Rgb c) {
    if (x < 0 || x >= W || y < 0 || y >= H) return;
    const size_t off = (static_cast<size_t>(y) * W + x) * 3;
    img[off] = c.r;
    img[off + 1] = c.g;
    img[off + 2] = c.b;
  };

  int x0 = pad;
  for (const auto& p : panels) {
    const auto& mag = p.spec->magnitude;
    const int frames = static_cast<int>(p.spec->frames());
    for (int f = 0; f < frames; ++f)
      for (int b = 0; b < bins; ++b) {
        const double v = 20.0 * std::log10(std::max(mag.at(b, f), 1e-12));
        const double t = (v - db_min) / (db_max - db_min);
        put(x0 + f, label_h + (bins - 1 - b), detail::colormap(t));
      }
    // Label strip.
    int cx = x0 + 1;
    for (char ch : p.label) {
      const unsigned char* g = detail::glyph(ch);
      for (int r = 0; r < 7; ++r)
        for (int cbit = 0; cbit < 5; ++cbit)
          if (g[r] & (1 << (4 - cbit)))
            for (int sy = 0; sy < 2; ++sy)
              for (int sx = 0; sx < 2; ++sx)
                put(cx + cbit * 2 + sx, 2 + r * 2 + sy, {235, 235, 235});
      cx += 12;
      if (cx > x0 + frames - 10) break;
    }
    x0 += frames + pad;
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write figure: " + path);
  f << "P6\n" << W << " " << H << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
  if (!f) throw IoError("short figure write: " + path);

  FigureInfo info;
  info.db_max = db_max;
  info.db_min = db_min;
  info.width = W;
  info.height = H;
  return info;
}

}  // namespace una::specfig
