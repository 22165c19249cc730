#ifndef TRISIM_RNG_HPP
#define TRISIM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include <boost/random/binomial_distribution.hpp>
#include <boost/random/exponential_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

namespace trisim {

/// Seedable 64-bit generator. The engine (mt19937_64) is fully specified by the
/// C++ standard and the samplers below are our own or Boost's, so a seed gives
/// the same stream on every conforming platform. Replicate i of an ensemble
/// uses seed base_seed + i.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_pos() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

  /// Exp(1) variate (ziggurat).
  double exponential() { return boost::random::exponential_distribution<double>()(engine_); }

  bool bernoulli(double p) { return uniform() < p; }

  std::int64_t binomial(std::int64_t n, double p) {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    return boost::random::binomial_distribution<std::int64_t, double>(n, p)(*this);
  }

  std::int64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    return boost::random::poisson_distribution<std::int64_t, double>(mean)(*this);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace trisim

#endif  // TRISIM_RNG_HPP
