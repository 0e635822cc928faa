#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "bellsim/random.hpp"
#include "bellsim/units.hpp"

namespace bellsim {

// Polarization-entangled pair (|H>|V> + e^{i phi}|V>|H>)/sqrt(2) mixed
// isotropically with white noise so that every correlation is scaled by V.
// Only phi = pi is modelled: the outcome law below is the phi = pi one.
struct EntangledStateParams {
  double phase_phi = std::numbers::pi;
  double visibility = 0.97;

  void validate() const {
    if (!(visibility >= 0.0 && visibility <= 1.0))
      throw std::invalid_argument("visibility must lie in [0, 1]");
    if (!std::isfinite(phase_phi)) throw std::invalid_argument("phase_phi must be finite");
  }
};

// Default pair rate. Chosen so that at 5% detection efficiency, default
// blanking and dead time a 10 s run yields ~13.9k coincidences and each
// detector sees ~14.8k singles/s including dark counts. Derived from those
// two targets; not a measured source rate.
inline constexpr double kDefaultPairRate = 7.4e5;

struct EmissionConfig {
  double pair_rate = kDefaultPairRate;  // pairs / s
  double duration = 10.0;               // s
  std::uint64_t seed = 0;

  void validate() const {
    if (!(pair_rate > 0.0) || !std::isfinite(pair_rate))
      throw std::invalid_argument("pair_rate must be > 0");
    if (!(duration >= 0.0) || !std::isfinite(duration))
      throw std::invalid_argument("duration must be >= 0");
  }
};

struct JointOutcome {
  Outcome alice;
  Outcome bob;
  bool operator==(const JointOutcome&) const = default;
};

// Joint probabilities of the four polarizer outcome pairs.
struct OutcomeProbabilities {
  double pp = 0, mm = 0, pm = 0, mp = 0;

  double marginal_alice_plus() const { return pp + pm; }
  double marginal_bob_plus() const { return pp + mp; }
  double correlation() const { return pp + mm - pm - mp; }
  double sum() const { return pp + mm + pm + mp; }
};

// P++ = P-- = (1 - V cos 2(b - a)) / 4, P+- = P-+ = (1 + V cos 2(b - a)) / 4.
// At V = 1 this is C++ ~ sin^2(b - a) and E = -cos 2(b - a).
inline OutcomeProbabilities outcome_probabilities(double alpha, double beta,
                                                  const EntangledStateParams& params) {
  params.validate();
  if (!std::isfinite(alpha) || !std::isfinite(beta)) throw std::invalid_argument("angles must be finite");
  const double c = params.visibility * std::cos(2.0 * (beta - alpha));
  const double same = 0.25 * (1.0 - c);
  const double diff = 0.25 * (1.0 + c);
  return {same, same, diff, diff};
}

// Inverse-CDF sampling; thresholds in the fixed order (++, --, +-, -+).
inline JointOutcome sample_joint_outcome(double alpha, double beta,
                                         const EntangledStateParams& params, double draw) {
  const auto p = outcome_probabilities(alpha, beta, params);
  if (draw < p.pp) return {Outcome::Plus, Outcome::Plus};
  if (draw < p.pp + p.mm) return {Outcome::Minus, Outcome::Minus};
  if (draw < p.pp + p.mm + p.pm) return {Outcome::Plus, Outcome::Minus};
  return {Outcome::Minus, Outcome::Plus};
}

// One emitted pair. `lambda` is the hidden-variable channel used by local
// models; `shared_draw` is the common uniform the quantum adapter consumes.
struct PairEvent {
  Picoseconds emission_time{0};
  double lambda = 0.0;       // [0, pi)
  double shared_draw = 0.0;  // [0, 1)
};

// Homogeneous Poisson emission of a cw-pumped source.
class PairSource {
 public:
  explicit PairSource(const EmissionConfig& config)
      : rate_(config.pair_rate), end_(from_seconds(config.duration)), rng_(config.seed) {
    config.validate();
  }

  // Next pair, or false once the emission window is exhausted.
  bool next(PairEvent& out) {
    if (done_) return false;
    const double gap_ps = std::min(rng_.exponential(rate_) * kPicosecondsPerSecond, 1e18);
    // Strictly increasing times; a sub-picosecond gap is bumped to one tick.
    const std::int64_t step = std::llround(gap_ps);
    const Picoseconds t = last_ + Picoseconds{started_ ? std::max<std::int64_t>(1, step) : step};
    if (t >= end_) {
      done_ = true;
      return false;
    }
    started_ = true;
    last_ = t;
    out.emission_time = t;
    out.lambda = rng_.uniform() * std::numbers::pi;
    out.shared_draw = rng_.uniform();
    return true;
  }

 private:
  double rate_;
  Picoseconds end_;
  Picoseconds last_{0};
  bool started_ = false;
  bool done_ = false;
  Rng rng_;
};

inline std::vector<Picoseconds> emit_pairs(const EmissionConfig& config) {
  PairSource source{config};
  std::vector<Picoseconds> times;
  times.reserve(static_cast<std::size_t>(config.pair_rate * config.duration * 1.01) + 16);
  PairEvent ev;
  while (source.next(ev)) times.push_back(ev.emission_time);
  return times;
}

}  // namespace bellsim
