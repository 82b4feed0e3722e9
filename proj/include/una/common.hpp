// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <cmath>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace una {

// Every error carries a stable machine-parsable category (used for CLI exit
// reporting and test assertions).
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& msg)
      : std::runtime_error(category + ": " + msg), category_(std::move(category)) {}
  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

#define UNA_DEFINE_ERROR(NAME)                                 \
  class NAME : public Error {                                  \
   public:                                                     \
    explicit NAME(const std::string& msg) : Error(#NAME, msg) {} \
  }

UNA_DEFINE_ERROR(InputTooShort);
UNA_DEFINE_ERROR(InvalidConfig);
UNA_DEFINE_ERROR(SilentNoise);
UNA_DEFINE_ERROR(SilentClean);
UNA_DEFINE_ERROR(ZeroReference);
UNA_DEFINE_ERROR(LengthMismatch);
UNA_DEFINE_ERROR(ShapeError);
UNA_DEFINE_ERROR(ConfigError);
UNA_DEFINE_ERROR(DegenerateNce);
UNA_DEFINE_ERROR(EmptyPool);
UNA_DEFINE_ERROR(InsufficientData);
UNA_DEFINE_ERROR(PairingError);
UNA_DEFINE_ERROR(IngestError);
UNA_DEFINE_ERROR(IncompatibleCheckpoint);
UNA_DEFINE_ERROR(ToolOutputError);
UNA_DEFINE_ERROR(GroupingError);
UNA_DEFINE_ERROR(IoError);
UNA_DEFINE_ERROR(Divergence);

#undef UNA_DEFINE_ERROR

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic, implementation-independent RNG (xoshiro256++ core with
// hand-rolled distributions). std::normal_distribution is avoided on purpose:
// its output is not pinned by the standard, and reproducible training streams
// are part of the toolkit contract.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) { reseed(seed); }

  void reseed(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
    has_spare_ = false;
    spare_ = 0.0;
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); n must be > 0.
  uint64_t uniform_int(uint64_t n) {
    // Rejection sampling over the smallest covering power of two.
    uint64_t mask = n - 1;
    mask |= mask >> 1; mask |= mask >> 2; mask |= mask >> 4;
    mask |= mask >> 8; mask |= mask >> 16; mask |= mask >> 32;
    uint64_t v;
    do { v = next_u64() & mask; } while (v >= n);
    return v;
  }

  // Standard normal via Box-Muller (one spare cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do { u1 = uniform(); } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates subset sample of k indices out of n, without replacement.
  std::vector<size_t> sample_without_replacement(size_t n, size_t k) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = 0; i < k && i + 1 < n; ++i) {
      size_t j = i + static_cast<size_t>(uniform_int(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4] = {};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable sub-seed derivation: mixes a base seed with a textual tag so stages,
// utterances and workers get independent, reproducible streams.
inline uint64_t derive_seed(uint64_t base, const std::string& tag) {
  uint64_t h = fnv1a64(tag);
  h ^= base + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  uint64_t s = h;
  return splitmix64(s);
}

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one per
// worker; outputs must be writes to disjoint slots so the result does not
// depend on the thread count.
inline void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  size_t workers = std::min<size_t>(static_cast<size_t>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error = nullptr;
  std::mutex err_mutex;
  for (size_t w = 0; w < workers; ++w) {
    size_t lo = n * w / workers;
    size_t hi = n * (w + 1) / workers;
    pool.emplace_back([&, lo, hi]() {
      try {
        for (size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace una
