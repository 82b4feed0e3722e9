// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "una/common.hpp"

namespace una::io {

// Mono RIFF/WAVE reader and writer. Supported sample formats: 16-bit PCM and
// 32-bit IEEE float. Anything else (and any non-mono stream) is rejected;
// resampling is out of scope, so the caller checks rates against its own
// expectations.
struct WavData {
  std::vector<double> samples;  // nominal range [-1, 1]
  int sample_rate = 16000;
};

namespace detail {

inline uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}
inline void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

inline WavData read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IngestError("cannot open wav file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw IngestError("not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    uint32_t len = detail::read_u32(bytes.data() + pos + 4);
    size_t body = pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0 && body + 16 <= bytes.size()) {
      format = detail::read_u16(bytes.data() + body);
      channels = detail::read_u16(bytes.data() + body + 2);
      rate = detail::read_u32(bytes.data() + body + 4);
      bits = detail::read_u16(bytes.data() + body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = std::min<size_t>(len, bytes.size() - body);
    }
    pos = body + len + (len & 1);  // chunks are word-aligned
  }
  if (data_off == 0) throw IngestError("wav has no data chunk: " + path);
  if (channels != 1) throw IngestError("wav is not mono: " + path);

  WavData out;
  out.sample_rate = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    size_t n = data_len / 2;
    out.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      int16_t s = static_cast<int16_t>(detail::read_u16(bytes.data() + data_off + 2 * i));
      out.samples[i] = static_cast<double>(s) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    size_t n = data_len / 4;
    out.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      uint32_t u = detail::read_u32(bytes.data() + data_off + 4 * i);
      float v;
      std::memcpy(&v, &u, 4);
      out.samples[i] = static_cast<double>(v);
    }
  } else {
    throw IngestError("unsupported wav encoding (format=" + std::to_string(format) +
                      ", bits=" + std::to_string(bits) + "): " + path);
  }
  return out;
}

enum class WavEncoding { Pcm16, Float32 };

inline void write_wav(const std::string& path, const std::vector<double>& samples,
                      int sample_rate, WavEncoding enc = WavEncoding::Float32) {
  const uint16_t bits = enc == WavEncoding::Pcm16 ? 16 : 32;
  const uint16_t fmt = enc == WavEncoding::Pcm16 ? 1 : 3;
  const uint32_t bytes_per = bits / 8;
  const uint32_t data_len = static_cast<uint32_t>(samples.size() * bytes_per);

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  detail::put_u32(out, 36 + data_len);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, fmt);
  detail::put_u16(out, 1);  // mono
  detail::put_u32(out, static_cast<uint32_t>(sample_rate));
  detail::put_u32(out, static_cast<uint32_t>(sample_rate) * bytes_per);
  detail::put_u16(out, static_cast<uint16_t>(bytes_per));
  detail::put_u16(out, bits);
  out += "data";
  detail::put_u32(out, data_len);
  if (enc == WavEncoding::Pcm16) {
    for (double v : samples) {
      double c = v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
      auto s = static_cast<int16_t>(std::lrint(c * 32767.0));
      detail::put_u16(out, static_cast<uint16_t>(s));
    }
  } else {
    for (double v : samples) {
      float x = static_cast<float>(v);
      uint32_t u;
      std::memcpy(&u, &x, 4);
      detail::put_u32(out, u);
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write wav file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write: " + path);
}

}  // namespace una::io
