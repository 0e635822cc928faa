#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bellsim/bell_analysis.hpp"
#include "bellsim/quantum_source.hpp"
#include "bellsim/random.hpp"

using namespace bellsim;

namespace {

constexpr double kPi = std::numbers::pi;
const double kDeg = kPi / 180.0;

CorrelationResult with_e(double e) { return {e, 0.0, 100}; }

// Multinomial table from the outcome law: n pairs per setting combination.
CoincidenceTable quantum_table(double v, std::uint64_t n, std::uint64_t seed,
                               std::array<double, 2> alice = {0.0, 45 * kDeg},
                               std::array<double, 2> bob = {22.5 * kDeg, 67.5 * kDeg}) {
  Rng rng{seed};
  CoincidenceTable t;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (std::uint64_t k = 0; k < n; ++k) {
        const auto o = sample_joint_outcome(alice[a], bob[b], {kPi, v}, rng.uniform());
        ++t.at(a, b, o.alice, o.bob);
      }
  return t;
}

// Closed-form weighted linear fit of y = m + c cos 2t + s sin 2t, mapped to
// (M, V, theta0). Same weights as fit_sinusoid, so the optimum is identical.
SinusoidFit linear_oracle(std::span<const FitPoint> pts) {
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (const auto& q : pts) {
    const double w = 1.0 / std::max(q.count, 1.0);
    const Eigen::Vector3d g{1.0, std::cos(2 * q.angle), std::sin(2 * q.angle)};
    a += w * g * g.transpose();
    rhs += w * q.count * g;
  }
  const Eigen::Vector3d x = a.ldlt().solve(rhs);
  SinusoidFit f;
  f.mean_level = x[0];
  f.visibility = std::hypot(x[1], x[2]) / x[0];
  f.phase = std::atan2(-x[2], -x[1]) / 2.0;
  if (f.phase < 0) f.phase += kPi;
  return f;
}

std::vector<FitPoint> scan_points(double m, double v, double phase, int n, bool poisson, std::uint64_t seed) {
  std::mt19937_64 gen{seed};
  std::vector<FitPoint> pts;
  for (int k = 0; k < n; ++k) {
    const double th = k * kPi / (n - 1);
    const double mu = m * (1 - v * std::cos(2 * (th - phase)));
    pts.push_back({th, poisson ? double(std::poisson_distribution<long>(mu)(gen)) : mu});
  }
  return pts;
}

double phase_diff(double x, double y) {
  double d = std::fmod(x - y, kPi);
  if (d > kPi / 2) d -= kPi;
  if (d < -kPi / 2) d += kPi;
  return d;
}

}  // namespace

TEST(Correlation, AllPlusPlus) {
  const auto r = correlation(100, 0, 0, 0);
  EXPECT_DOUBLE_EQ(r.E, 1.0);
  EXPECT_DOUBLE_EQ(r.sigma_E, 0.0);
  EXPECT_EQ(r.N, 100u);
}

TEST(Correlation, EqualCountsZero) { EXPECT_DOUBLE_EQ(correlation(25, 25, 25, 25).E, 0.0); }

TEST(Correlation, EmptyUndefined) { EXPECT_THROW(correlation(0, 0, 0, 0), UndefinedCorrelation); }

TEST(Correlation, ErrorModels) {
  const auto m = correlation(300, 300, 100, 300, ErrorModel::Multinomial);
  const auto p = correlation(300, 300, 100, 300, ErrorModel::PoissonNumerator);
  EXPECT_DOUBLE_EQ(m.E, 0.2);
  EXPECT_DOUBLE_EQ(m.sigma_E, std::sqrt((1 - 0.04) / 1000));
  EXPECT_DOUBLE_EQ(p.sigma_E, std::sqrt(1.0 / 1000));
}

TEST(Correlation, MonteCarloMatchesLaw) {
  const auto t = quantum_table(1.0, 1'000'000, 1, {0.0, 0.0}, {22.5 * kDeg, 22.5 * kDeg});
  EXPECT_NEAR(correlation(t, 0, 0).E, -std::cos(kPi / 4), 0.002);
}

TEST(Correlation, ScaleInvariant) {
  const auto t = quantum_table(0.9, 2000, 2);
  auto big = t;
  for (auto& c : big.counts) c *= 7;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) EXPECT_DOUBLE_EQ(correlation(t, a, b).E, correlation(big, a, b).E);
}

TEST(Chsh, TsirelsonValue) {
  const double r = 1 / std::sqrt(2.0);
  const auto s = chsh(with_e(-r), with_e(r), with_e(-r), with_e(-r));
  EXPECT_NEAR(s.S, 2 * std::sqrt(2.0), 1e-14);
}

TEST(Chsh, AllZero) {
  const auto s = chsh(with_e(0), with_e(0), with_e(0), with_e(0));
  EXPECT_DOUBLE_EQ(s.S, 0.0);
}

TEST(Chsh, ErrorsInQuadrature) {
  const auto s = chsh({0.5, 0.01, 1}, {0.5, 0.02, 1}, {0.5, 0.02, 1}, {0.5, 0.04, 1});
  EXPECT_NEAR(s.sigma_S, 0.05, 1e-15);
  EXPECT_NEAR(s.n_sigma_violation, (s.S - 2) / 0.05, 1e-12);
}

TEST(Chsh, BestAssignmentFindsStandardOrder) {
  // Table from the standard angles with Bob's bits listed in either order.
  const auto t = quantum_table(1.0, 200'000, 3);
  const auto swapped = quantum_table(1.0, 200'000, 3, {0.0, 45 * kDeg}, {67.5 * kDeg, 22.5 * kDeg});
  const auto r1 = chsh_from_table(t);
  const auto r2 = chsh_from_table(swapped);
  EXPECT_NEAR(r1.result.S, 2 * std::sqrt(2.0), 4 * r1.result.sigma_S);
  EXPECT_NEAR(r2.result.S, 2 * std::sqrt(2.0), 4 * r2.result.sigma_S);
  EXPECT_NE(r1.bob_beta_bit, r2.bob_beta_bit);
}

TEST(Chsh, LargeNApproachesVisibilityLimit) {
  const auto r = chsh_from_table(quantum_table(0.97, 500'000, 4));
  EXPECT_NEAR(r.result.S, 0.97 * 2 * std::sqrt(2.0), 3 * r.result.sigma_S);
}

TEST(Chsh, InvariantUnderJointRelabel) {
  const auto t = quantum_table(0.9, 5000, 5);
  CoincidenceTable flipped;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) flipped.at(a, b, 1 - i, 1 - j) = t.at(a, b, i, j);
  EXPECT_DOUBLE_EQ(chsh_from_table(t).result.S, chsh_from_table(flipped).result.S);
}

TEST(Chsh, QuantumNeverExceedsTsirelson) {
  Rng rng{6};
  for (int q = 0; q < 20; ++q) {
    const std::array<double, 2> a{rng.uniform() * kPi, rng.uniform() * kPi};
    const std::array<double, 2> b{rng.uniform() * kPi, rng.uniform() * kPi};
    const auto r = chsh_from_table(quantum_table(1.0, 20'000, 100 + q, a, b));
    EXPECT_LE(r.result.S, 2 * std::sqrt(2.0) + 5 * r.result.sigma_S);
    for (const auto& row : r.E)
      for (const auto& e : row) EXPECT_LE(std::abs(e.E), 1.0);
  }
}

TEST(FitSinusoid, NoiselessRecovery) {
  const auto pts = scan_points(100, 0.97, 30 * kDeg, 41, false, 0);
  const auto f = fit_sinusoid(pts);
  EXPECT_NEAR(f.mean_level, 100, 1e-4);
  EXPECT_NEAR(f.visibility, 0.97, 0.97e-6);
  EXPECT_NEAR(f.phase, 30 * kDeg, 30 * kDeg * 1e-6);
  EXPECT_NEAR(f.chi2, 0.0, 1e-12);
  EXPECT_FALSE(f.phase_unconstrained);
}

TEST(FitSinusoid, MatchesLinearOracle) {
  Rng rng{7};
  for (int trial = 0; trial < 30; ++trial) {
    const double m = 50 + 500 * rng.uniform(), v = 0.2 + 0.8 * rng.uniform(), ph = rng.uniform() * kPi;
    const auto pts = scan_points(m, v, ph, 41, true, 200 + trial);
    const auto f = fit_sinusoid(pts);
    const auto o = linear_oracle(pts);
    EXPECT_NEAR(f.mean_level, o.mean_level, 1e-6 * o.mean_level) << trial;
    EXPECT_NEAR(f.visibility, o.visibility, 1e-6) << trial;
    EXPECT_NEAR(phase_diff(f.phase, o.phase), 0.0, 1e-6) << trial;
  }
}

TEST(FitSinusoid, SelfConsistentErrors) {
  Rng rng{8};
  int within_v = 0, within_phase = 0;
  const int trials = 200;
  for (int trial = 0; trial < trials; ++trial) {
    const double m = 300 + 700 * rng.uniform(), v = 0.3 + 0.7 * rng.uniform(), ph = rng.uniform() * kPi;
    const auto f = fit_sinusoid(scan_points(m, v, ph, 41, true, 500 + trial));
    within_v += std::abs(f.visibility - v) <= f.sigma_visibility;
    within_phase += std::abs(phase_diff(f.phase, ph)) <= f.sigma_phase;
  }
  // One-sigma coverage is 68%; allow for sampling noise over 200 trials.
  EXPECT_NEAR(within_v / double(trials), 0.68, 0.1);
  EXPECT_NEAR(within_phase / double(trials), 0.68, 0.1);
}

TEST(FitSinusoid, PoissonScanVisibility) {
  // Counting statistics of a 5 s scan point: about 85 counts at the maximum.
  const auto pts = scan_points(43, 0.97, 22.5 * kDeg, 41, true, 9);
  const auto f = fit_sinusoid(pts);
  EXPECT_NEAR(f.visibility, 0.97, 3 * f.sigma_visibility);
}

TEST(FitSinusoid, ConstantDataUnconstrainedPhase) {
  std::vector<FitPoint> pts;
  for (int k = 0; k < 41; ++k) pts.push_back({k * kPi / 40, 100.0});
  const auto f = fit_sinusoid(pts);
  EXPECT_NEAR(f.amplitude, 0.0, 1e-6);
  EXPECT_NEAR(f.mean_level, 100.0, 1e-6);
  EXPECT_TRUE(f.phase_unconstrained);
}

TEST(FitSinusoid, RejectsTooFewOrNarrow) {
  std::vector<FitPoint> few(5, {0.0, 1.0});
  for (int k = 0; k < 5; ++k) few[k].angle = k * 0.5;
  EXPECT_THROW(fit_sinusoid(few), FitError);
  std::vector<FitPoint> narrow;
  for (int k = 0; k < 10; ++k) narrow.push_back({k * 0.1, 10.0 + k});
  EXPECT_THROW(fit_sinusoid(narrow), FitError);
}

TEST(NoSignaling, QuantumTablePasses) {
  const auto r = no_signaling_check(quantum_table(0.97, 100'000, 10));
  EXPECT_EQ(r.status, SignalingStatus::Ok);
  EXPECT_LT(r.max_abs_z, 3.0);
}

TEST(NoSignaling, ConstructedSignalingFlagged) {
  CoincidenceTable t;
  // Alice's P(+) at a = 0 is 0.5 with b = 0 and 0.6 with b = 1.
  t.at(0, 0, 0, 0) = 2500; t.at(0, 0, 0, 1) = 2500; t.at(0, 0, 1, 0) = 2500; t.at(0, 0, 1, 1) = 2500;
  t.at(0, 1, 0, 0) = 3000; t.at(0, 1, 0, 1) = 3000; t.at(0, 1, 1, 0) = 2000; t.at(0, 1, 1, 1) = 2000;
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) t.at(1, b, i, j) = 2500;
  const auto r = no_signaling_check(t);
  EXPECT_EQ(r.status, SignalingStatus::Flagged);
  EXPECT_EQ(r.comparisons[0].status, SignalingStatus::Flagged);
  EXPECT_NEAR(r.comparisons[0].delta, 0.1, 1e-12);
  EXPECT_NEAR(r.max_abs_delta, 0.1, 1e-12);
}

TEST(NoSignaling, EmptyCellInsufficientData) {
  auto t = quantum_table(0.97, 1000, 11);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) t.at(1, 1, i, j) = 0;
  const auto r = no_signaling_check(t);
  EXPECT_EQ(r.status, SignalingStatus::InsufficientData);
  EXPECT_EQ(r.comparisons[1].status, SignalingStatus::InsufficientData);
  EXPECT_EQ(r.comparisons[0].status, SignalingStatus::Ok);
  EXPECT_EQ(no_signaling_check(CoincidenceTable{}).status, SignalingStatus::InsufficientData);
}
