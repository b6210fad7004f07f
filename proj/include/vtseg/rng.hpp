#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace vtseg {

// splitmix64 step; the documented mixing function used to derive independent
// substreams from (seed, index...) so that reordering work items can never
// change the numbers a given item sees.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Derives a substream seed: seed -> mix(seed, a) -> mix(.., b) ...
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a) {
  std::uint64_t s = seed ^ (0xD1B54A32D192ED03ull * (a + 1));
  return splitmix64(s);
}
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

// Small deterministic generator (splitmix64 stream). Not cryptographic; used
// for reproducible noise, shuffles, and parameter initialization.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1) with 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1); never returns an endpoint (safe for log()).
  double next_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

  // Box-Muller; the cosine/sine pair is consumed in order.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_open();
    double u2 = next_open();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n); n must be > 0. Rejection-free modulo of a
  // 64-bit draw; bias is negligible for the small n used here but we use
  // Lemire's multiply-shift to avoid it outright.
  std::uint64_t next_below(std::uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(m >> 64);
  }

  template <typename Vec>
  void shuffle(Vec& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace vtseg
