#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace natlab {

// Deterministic splittable RNG (splitmix64 core). The standard library
// distributions are implementation-defined, so all sampling is done here:
// training runs must replay bit-identically from (seed, step) alone, and
// checkpoint resume must continue the exact stream.
//
// Streams are derived by key, never by sharing state: fork(salt) yields an
// independent generator whose sequence depends only on (key, salt). The
// trainer derives per-(step, sentence, view) streams this way, which makes
// batch preparation order-independent and resume-exact.
class Rng {
public:
  explicit Rng(uint64_t seed) : key_(seed), state_(mix_(seed ^ 0x6a09e667f3bcc908ull)) {}

  uint64_t key() const { return key_; }

  // Independent child stream; the parent's sequence is not advanced.
  Rng fork(uint64_t salt) const { return Rng(mix_(key_ ^ mix_(salt + 0x9e3779b97f4a7c15ull))); }
  Rng fork(uint64_t a, uint64_t b) const { return fork(a).fork(b); }
  Rng fork(uint64_t a, uint64_t b, uint64_t c) const { return fork(a).fork(b).fork(c); }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform integer in [0, n), unbiased (rejection sampling).
  uint64_t below(uint64_t n) {
    if (n <= 1) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the pair is cached per instance.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // Fisher-Yates.
  template <class V>
  void shuffle(V& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices drawn uniformly from [0, n), returned sorted.
  std::vector<int> sample_without_replacement(int n, int k);

private:
  static uint64_t mix_(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t key_;
  uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

inline std::vector<int> Rng::sample_without_replacement(int n, int k) {
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  // Partial Fisher-Yates: first k slots end up with the sample.
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(below(static_cast<uint64_t>(n - i)));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  idx.resize(static_cast<size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace natlab
