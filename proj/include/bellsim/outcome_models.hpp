#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "bellsim/quantum_source.hpp"
#include "bellsim/units.hpp"

namespace bellsim {

struct HiddenVariable {
  double lambda = 0.0;  // radians in [0, pi)
};

struct LocalResponse {
  bool detected = true;
  Outcome result = Outcome::Plus;  // meaningless when !detected

  bool operator==(const LocalResponse& o) const {
    return detected == o.detected && (!detected || result == o.result);
  }
};

// Randomness handed to a model for one pair. `alice` and `bob` are drawn
// from the respective station's own generator.
struct PairDraws {
  HiddenVariable lambda;
  double shared = 0.0;
  double alice = 0.0;
  double bob = 0.0;
};

struct PairResponse {
  LocalResponse alice;
  LocalResponse bob;
};

// Common interface of everything that decides what the two stations see.
class OutcomeModel {
 public:
  virtual ~OutcomeModel() = default;
  virtual std::string_view name() const = 0;
  virtual PairResponse respond_pair(double alice_angle, double bob_angle,
                                    const PairDraws& draws) const = 0;
};

// A local model answers for one side at a time. The signature carries no
// remote setting or result, so locality holds by construction.
class LocalModel : public OutcomeModel {
 public:
  virtual LocalResponse respond(Side side, double setting_angle, HiddenVariable lambda,
                                double random_draw) const = 0;

  PairResponse respond_pair(double alice_angle, double bob_angle,
                            const PairDraws& draws) const final {
    return {respond(Side::Alice, alice_angle, draws.lambda, draws.alice),
            respond(Side::Bob, bob_angle, draws.lambda, draws.bob)};
  }
};

// sign() with the measure-zero tie resolved to +.
inline Outcome sign_outcome(double x) { return x >= 0.0 ? Outcome::Plus : Outcome::Minus; }

inline Outcome deterministic_lhv(Side side, double setting_angle, HiddenVariable lambda) {
  const Outcome s = sign_outcome(std::cos(2.0 * (setting_angle - lambda.lambda)));
  return side == Side::Alice ? s : flip(s);
}

// Alice: sign(cos 2(a - l)). Bob: -sign(cos 2(b - l)). Always detected.
class DeterministicLhv final : public LocalModel {
 public:
  std::string_view name() const override { return "lhv-deterministic"; }
  LocalResponse respond(Side side, double setting_angle, HiddenVariable lambda,
                        double) const override {
    return {true, deterministic_lhv(side, setting_angle, lambda)};
  }
};

// Detection-loophole model: Alice always detects with sign(cos 2(a - l)); Bob
// detects with probability |cos 2(b - l)| and reports sign(cos 2(b - l)).
// Mean efficiency on Bob's side is 2/pi, post-selected E = cos 2(b - a).
inline LocalResponse detection_loophole_lhv(Side side, double setting_angle,
                                            HiddenVariable lambda, double random_draw) {
  const double c = std::cos(2.0 * (setting_angle - lambda.lambda));
  if (side == Side::Alice) return {true, sign_outcome(c)};
  return {random_draw < std::abs(c), sign_outcome(c)};
}

class DetectionLoopholeLhv final : public LocalModel {
 public:
  std::string_view name() const override { return "lhv-detection-loophole"; }
  LocalResponse respond(Side side, double setting_angle, HiddenVariable lambda,
                        double random_draw) const override {
    return detection_loophole_lhv(side, setting_angle, lambda, random_draw);
  }
};

// Quantum statistics through the shared response interface. Alice's result
// is fixed by the shared draw (marginal 1/2); Bob's is sampled conditionally
// on Alice's setting and result using his local draw. This is a simulation
// device, not a local model: Bob's response needs Alice's context.
class QuantumModel final : public OutcomeModel {
 public:
  explicit QuantumModel(EntangledStateParams params) : params_(params) { params_.validate(); }

  std::string_view name() const override { return "quantum"; }
  const EntangledStateParams& params() const { return params_; }

  PairResponse respond_pair(double alice_angle, double bob_angle,
                            const PairDraws& draws) const override {
    const auto p = outcome_probabilities(alice_angle, bob_angle, params_);
    const Outcome a = draws.shared < 0.5 ? Outcome::Plus : Outcome::Minus;
    // P(Bob + | Alice x) = P(x, +) / P(x)
    const double bob_plus = a == Outcome::Plus ? p.pp / 0.5 : p.mp / 0.5;
    const Outcome b = draws.bob < bob_plus ? Outcome::Plus : Outcome::Minus;
    return {{true, a}, {true, b}};
  }

 private:
  EntangledStateParams params_;
};

inline std::unique_ptr<OutcomeModel> make_model(std::string_view name,
                                                const EntangledStateParams& params) {
  if (name == "quantum") return std::make_unique<QuantumModel>(params);
  if (name == "lhv-deterministic") return std::make_unique<DeterministicLhv>();
  if (name == "lhv-detection-loophole") return std::make_unique<DetectionLoopholeLhv>();
  throw std::invalid_argument("unknown model '" + std::string(name) +
                              "' (expected quantum, lhv-deterministic or lhv-detection-loophole)");
}

}  // namespace bellsim
