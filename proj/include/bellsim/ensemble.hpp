#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "bellsim/bell_analysis.hpp"
#include "bellsim/coincidence.hpp"
#include "bellsim/outcome_models.hpp"
#include "bellsim/random.hpp"

namespace bellsim {

// Model-level Monte Carlo without station physics: a fixed number of pairs
// per setting combination, every response recorded. Used to check the
// statistics of a model independently of timing and tagging.
struct EnsembleResult {
  CoincidenceTable detected;  // pairs detected on both sides
  std::array<std::array<std::uint64_t, 2>, 2> emitted{};
  std::array<std::array<std::int64_t, 2>, 2> product_sum{};  // sum of A*B over both-detected pairs
  std::array<std::uint64_t, 2> alice_detected{};            // per Alice setting
  std::array<std::uint64_t, 2> bob_detected{};              // per Bob setting
  std::array<std::uint64_t, 2> alice_trials{};
  std::array<std::uint64_t, 2> bob_trials{};

  double bob_efficiency() const {
    return double(bob_detected[0] + bob_detected[1]) / double(bob_trials[0] + bob_trials[1]);
  }
  double alice_efficiency() const {
    return double(alice_detected[0] + alice_detected[1]) / double(alice_trials[0] + alice_trials[1]);
  }
};

inline EnsembleResult run_ensemble(const OutcomeModel& model, const std::array<double, 2>& alice_angles,
                                   const std::array<double, 2>& bob_angles,
                                   std::uint64_t pairs_per_setting, std::uint64_t seed) {
  EnsembleResult r;
  Rng rng{seed};
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      for (std::uint64_t n = 0; n < pairs_per_setting; ++n) {
        PairDraws d;
        d.lambda.lambda = rng.uniform() * std::numbers::pi;
        d.shared = rng.uniform();
        d.alice = rng.uniform();
        d.bob = rng.uniform();
        const auto resp = model.respond_pair(alice_angles[a], bob_angles[b], d);
        ++r.emitted[a][b];
        ++r.alice_trials[a];
        ++r.bob_trials[b];
        if (resp.alice.detected) ++r.alice_detected[a];
        if (resp.bob.detected) ++r.bob_detected[b];
        if (resp.alice.detected && resp.bob.detected) {
          ++r.detected.at(a, b, resp.alice.result, resp.bob.result);
          r.product_sum[a][b] += sign_of(resp.alice.result) * sign_of(resp.bob.result);
        }
      }
    }
  }
  return r;
}

// CHSH on the both-detected subset only (what a coincidence experiment sees).
inline ChshReport postselected_chsh(const EnsembleResult& r) { return chsh_from_table(r.detected); }

// CHSH over all emitted pairs: a non-detection contributes 0 to the
// product, and each E is normalized by the number of emitted pairs.
inline ChshReport full_ensemble_chsh(const EnsembleResult& r) {
  std::array<std::array<CorrelationResult, 2>, 2> e{};
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const double n = double(r.emitted[a][b]);
      if (n == 0.0) throw UndefinedCorrelation("no emitted pairs for a setting combination");
      const double mean = double(r.product_sum[a][b]) / n;
      const double second = double(r.detected.total(a, b)) / n;  // E[X^2], X in {-1, 0, 1}
      e[a][b] = {mean, std::sqrt(std::max(0.0, second - mean * mean) / n), r.emitted[a][b]};
    }
  }
  return chsh_best(e);
}

}  // namespace bellsim
