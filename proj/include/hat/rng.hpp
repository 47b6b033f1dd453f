#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "hat/mat.hpp"

namespace hat {

// Deterministic random source. mt19937_64 output is fully specified by the
// standard and the distributions below are hand-rolled from raw bits, so the
// same seed reproduces the same stream on every platform.
class Rng {
public:
  explicit Rng(uint64_t seed, uint64_t stream = 0) : gen_(mix(seed, stream)) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  Real uniform01() { return static_cast<Real>(gen_() >> 11) * 0x1.0p-53; }

  Real uniform(Real a, Real b) { return a + (b - a) * uniform01(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw InputError("uniform_int: n must be positive");
    return static_cast<int>(gen_() % static_cast<uint64_t>(n));
  }

  // Standard normal via Box-Muller; second value cached.
  Real normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    Real u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const Real u2 = uniform01();
    const Real r = std::sqrt(-2.0 * std::log(u1));
    const Real theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  Mat uniform_mat(int rows, int cols, Real a, Real b) {
    Mat m(rows, cols);
    for (auto& x : m.raw()) x = uniform(a, b);
    return m;
  }

  Mat normal_mat(int rows, int cols, Real scale = 1.0) {
    Mat m(rows, cols);
    for (auto& x : m.raw()) x = scale * normal();
    return m;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      const int j = uniform_int(i + 1);
      std::swap(v[i], v[static_cast<size_t>(j)]);
    }
  }

private:
  // splitmix64 scrambling so (seed, stream) pairs give independent streams.
  static uint64_t mix(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 gen_;
  bool has_cached_ = false;
  Real cached_ = 0.0;
};

}  // namespace hat
