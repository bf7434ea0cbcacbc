#include "trajcast/rng.hpp"

#include <boost/random/chi_squared_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

namespace trajcast {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key) {
  return splitmix64(splitmix64(seed) ^ (key + 0x632be59bd9b4e019ULL));
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

Rng Rng::split(std::initializer_list<std::uint64_t> keys) const {
  std::uint64_t s = seed_;
  for (auto k : keys) s = mix_seed(s, k);
  return Rng(s);
}

double Rng::uniform() {
  boost::random::uniform_01<double> dist;
  return dist(engine_);
}

double Rng::normal() {
  boost::random::normal_distribution<double> dist(0.0, 1.0);
  return dist(engine_);
}

double Rng::gamma(double shape, double rate) {
  boost::random::gamma_distribution<double> dist(shape, 1.0 / rate);
  return dist(engine_);
}

double Rng::chi_squared(double df) {
  boost::random::chi_squared_distribution<double> dist(df);
  return dist(engine_);
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  boost::random::uniform_int_distribution<std::uint64_t> dist(0, n - 1);
  return dist(engine_);
}

}  // namespace trajcast
