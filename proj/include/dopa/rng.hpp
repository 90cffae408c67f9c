#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace dopa {

/// splitmix64 step; used to derive independent per-row seeds so that
/// parallel sample generation is schedule-independent.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 1));
}

/// Thin RNG wrapper. One instance per logical stream; never shared
/// across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return unif_(engine_); }
  double gauss() { return normal_(engine_); }

  /// Circularly symmetric complex Gaussian with E|z|^2 = var.
  std::complex<double> cgauss(double var = 1.0) {
    const double s = std::sqrt(var / 2.0);
    return {s * gauss(), s * gauss()};
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace dopa
