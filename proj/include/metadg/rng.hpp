#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace metadg {

/// Portable pseudo-random source. std::mt19937_64's output sequence is fixed
/// by the standard; the conversions below are written out so every platform
/// produces the same doubles (std::*_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (cosine branch only, no caching).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent stream seed from a base seed and a tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

}  // namespace metadg
