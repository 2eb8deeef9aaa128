#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include "rwta/tensor.hpp"

namespace rwta {

// Deterministic random source. The engine is std::mt19937_64 (fully
// specified by the C++ standard) and every distribution transform is
// implemented here rather than via std:: distributions, whose output is
// implementation-defined. Same seed => identical stream on any platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random mantissa bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the second deviate is cached.
  double normal();

  // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t uniform_index(std::uint64_t n);

  // Fisher-Yates over [first, last).
  template <class It>
  void shuffle(It first, It last) {
    auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      auto j = uniform_index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  // Independent child stream; distinct streams for distinct labels.
  SeededRng fork(std::uint64_t stream) const;

  std::string serialize() const;
  static SeededRng deserialize(const std::string& blob);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// I.i.d. uniform on [-L, L], L = sqrt(6 / (fan_in + fan_out)).
// For a kernel (out, in, kh, kw): fan_in = in*kh*kw, fan_out = out*kh*kw.
template <class T>
Tensor4<T> glorot_uniform(Shape4 shape, SeededRng& rng);

}  // namespace rwta
