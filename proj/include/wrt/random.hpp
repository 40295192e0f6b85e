#pragma once

#include <cstdint>
#include <initializer_list>

namespace wrt {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Counter-based generator: the stream is a pure function of (seed, key...),
/// so draws for different pixels never depend on evaluation order.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> key) : state_(splitmix64(seed)) {
    for (auto k : key) state_ = splitmix64(state_ ^ splitmix64(k + 0x632BE59BD9B4E019ull));
  }

  std::uint64_t next_u64() {
    counter_ += 1;
    return splitmix64(state_ + counter_ * 0xD1B54A32D192ED03ull);
  }

  /// Uniform in the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
  std::uint64_t counter_ = 0;
};

/// Sequential generator for non-pixel work (phantom placement).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next_u64() {
    const std::uint64_t z = state_;
    state_ += 0x9E3779B97F4A7C15ull;
    return splitmix64(z);
  }
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::uint64_t state_;
};

/// Poisson quantile function: the smallest n with P(X <= n; mean) >= u.
/// Monotone in both `mean` and `u`.
std::int64_t poisson_inverse_cdf(double mean, double u);

}  // namespace wrt
