#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

#include <Eigen/Core>

namespace gfsvi {

/// xoshiro256++ generator. Satisfies UniformRandomBitGenerator so it plugs
/// into the <random> distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lower, double upper) { return lower + (upper - lower) * uniform(); }
  double normal();

 private:
  std::uint64_t s_[4];
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t& state);

/// Stable sub-seed for a named role, e.g. derive_seed(seed, "measurement").
std::uint64_t derive_seed(std::uint64_t master, std::string_view role);
std::uint64_t derive_seed(std::uint64_t master, std::string_view role, std::uint64_t index);

Eigen::MatrixXd standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols);

}  // namespace gfsvi
