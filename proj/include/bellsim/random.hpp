#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bellsim {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform double in [0,1) from the top 53 bits.
inline constexpr double to_unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Child seed number `stream` of `master`. Children of one master are
// statistically independent; the same (master, stream) always yields the
// same child.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

// Named child streams of the experiment master seed.
namespace seed_stream {
inline constexpr std::uint64_t kSource = 1;
inline constexpr std::uint64_t kAlice = 2;
inline constexpr std::uint64_t kBob = 3;
inline constexpr std::uint64_t kAliceSettings = 4;
inline constexpr std::uint64_t kBobSettings = 5;
inline constexpr std::uint64_t kAliceDark = 6;
inline constexpr std::uint64_t kBobDark = 7;
}  // namespace seed_stream

// Sequential generator with the handful of draws the simulation needs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return to_unit_interval(engine_()); }

  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  double normal(double sigma) {
    if (sigma == 0.0) return 0.0;
    return std::normal_distribution<double>{0.0, sigma}(engine_);
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t poisson(double mean) {
    return std::poisson_distribution<std::uint64_t>{mean}(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace bellsim
