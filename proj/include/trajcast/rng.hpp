#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace trajcast {

/// Seedable random stream. Child streams are derived by hashing the parent
/// seed with a list of keys, so independent workers (forecast days, chains,
/// replicates) get reproducible streams regardless of scheduling order.
///
/// Draws go through Boost.Random distributions, which produce identical
/// sequences across standard library implementations.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  [[nodiscard]] std::uint64_t seed() const { return seed_; }

  /// Stream keyed on (seed, keys...); does not advance this stream.
  [[nodiscard]] Rng split(std::initializer_list<std::uint64_t> keys) const;

  double uniform();  // [0, 1)
  double normal();
  /// Gamma with shape/rate parameterisation.
  double gamma(double shape, double rate);
  double chi_squared(double df);
  std::uint64_t uniform_index(std::uint64_t n);  // [0, n)

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key);

}  // namespace trajcast
