#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bellsim/coincidence.hpp"

namespace bellsim {

class UndefinedCorrelation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ErrorModel {
  Multinomial,       // sigma_E = sqrt((1 - E^2) / N)
  PoissonNumerator,  // sigma_E = sqrt(1 / N), N treated as fixed
};

struct CorrelationResult {
  double E = 0.0;
  double sigma_E = 0.0;
  std::uint64_t N = 0;
};

struct ChshResult {
  double S = 0.0;
  double sigma_S = 0.0;
  double n_sigma_violation = 0.0;  // (S - 2) / sigma_S
};

// E = (C++ + C-- - C+- - C-+) / N for one setting pair.
inline CorrelationResult correlation(std::uint64_t cpp, std::uint64_t cmm, std::uint64_t cpm,
                                     std::uint64_t cmp, ErrorModel model = ErrorModel::Multinomial) {
  const std::uint64_t n = cpp + cmm + cpm + cmp;
  if (n == 0) throw UndefinedCorrelation("correlation undefined: no coincidences for this setting pair");
  const double N = static_cast<double>(n);
  const double e = (static_cast<double>(cpp) + static_cast<double>(cmm) - static_cast<double>(cpm) -
                    static_cast<double>(cmp)) / N;
  const double var = model == ErrorModel::Multinomial ? std::max(0.0, 1.0 - e * e) / N : 1.0 / N;
  return {e, std::sqrt(var), n};
}

inline CorrelationResult correlation(const CoincidenceTable& t, int a, int b,
                                     ErrorModel model = ErrorModel::Multinomial) {
  return correlation(t.at(a, b, 0, 0), t.at(a, b, 1, 1), t.at(a, b, 0, 1), t.at(a, b, 1, 0), model);
}

// S = |E(a,b) - E(a',b)| + |E(a,b') + E(a',b')|, errors added in quadrature.
inline ChshResult chsh(const CorrelationResult& e_ab, const CorrelationResult& e_apb,
                       const CorrelationResult& e_abp, const CorrelationResult& e_apbp) {
  ChshResult r;
  r.S = std::abs(e_ab.E - e_apb.E) + std::abs(e_abp.E + e_apbp.E);
  r.sigma_S = std::sqrt(e_ab.sigma_E * e_ab.sigma_E + e_apb.sigma_E * e_apb.sigma_E +
                        e_abp.sigma_E * e_abp.sigma_E + e_apbp.sigma_E * e_apbp.sigma_E);
  if (r.sigma_S > 0.0)
    r.n_sigma_violation = (r.S - 2.0) / r.sigma_S;
  else
    r.n_sigma_violation = r.S > 2.0 ? std::numeric_limits<double>::infinity()
                                    : (r.S < 2.0 ? -std::numeric_limits<double>::infinity() : 0.0);
  return r;
}

struct ChshReport {
  std::array<std::array<CorrelationResult, 2>, 2> E{};  // [alice bit][bob bit]
  ChshResult result;
  int bob_beta_bit = 0;  // Bob setting bit used as beta (the subtracted pair)
};

// Evaluates the CHSH expression for both assignments of Bob's settings to
// (beta, beta') and keeps the larger S. Alice's settings enter
// symmetrically, so this covers every relabelling.
inline ChshReport chsh_best(const std::array<std::array<CorrelationResult, 2>, 2>& e) {
  ChshReport rep;
  rep.E = e;
  for (int beta = 0; beta < 2; ++beta) {
    const int beta_p = 1 - beta;
    const auto r = chsh(e[0][beta], e[1][beta], e[0][beta_p], e[1][beta_p]);
    if (beta == 0 || r.S > rep.result.S) {
      rep.result = r;
      rep.bob_beta_bit = beta;
    }
  }
  return rep;
}

// CHSH from a coincidence table; Alice's bits 0/1 are (alpha, alpha').
inline ChshReport chsh_from_table(const CoincidenceTable& t, ErrorModel model = ErrorModel::Multinomial) {
  std::array<std::array<CorrelationResult, 2>, 2> e{};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) e[a][b] = correlation(t, a, b, model);
  return chsh_best(e);
}

// C(theta) = M (1 - V cos 2(theta - theta0))
struct SinusoidFit {
  double mean_level = 0.0;  // M
  double visibility = 0.0;  // V = amplitude / M
  double amplitude = 0.0;   // M V
  double phase = 0.0;       // theta0 in [0, pi)
  double sigma_mean_level = 0.0;
  double sigma_visibility = 0.0;
  double sigma_phase = 0.0;
  double chi2 = 0.0;
  double chi2_per_dof = 0.0;
  bool phase_unconstrained = false;
  int iterations = 0;

  double eval(double theta) const { return mean_level * (1.0 - visibility * std::cos(2.0 * (theta - phase))); }
};

struct FitPoint {
  double angle = 0.0;  // rad
  double count = 0.0;
};

namespace detail {

struct FitState {
  Eigen::Vector3d p;  // M, V, theta0
  double chi2 = 0.0;
};

inline double fit_chi2(std::span<const FitPoint> pts, const Eigen::Vector3d& p) {
  double chi2 = 0.0;
  for (const auto& q : pts) {
    const double model = p[0] * (1.0 - p[1] * std::cos(2.0 * (q.angle - p[2])));
    const double r = q.count - model;
    chi2 += r * r / std::max(q.count, 1.0);
  }
  return chi2;
}

inline void normal_equations(std::span<const FitPoint> pts, const Eigen::Vector3d& p,
                             Eigen::Matrix3d& jtj, Eigen::Vector3d& jtr) {
  jtj.setZero();
  jtr.setZero();
  for (const auto& q : pts) {
    const double w = 1.0 / std::max(q.count, 1.0);
    const double c = std::cos(2.0 * (q.angle - p[2]));
    const double s = std::sin(2.0 * (q.angle - p[2]));
    const double model = p[0] * (1.0 - p[1] * c);
    const Eigen::Vector3d g{1.0 - p[1] * c, -p[0] * c, -2.0 * p[0] * p[1] * s};
    jtj += w * g * g.transpose();
    jtr += w * (q.count - model) * g;
  }
}

// Best (M, V) for a fixed phase: the model is linear in (M, M V) there.
inline Eigen::Vector3d start_at_phase(std::span<const FitPoint> pts, double phase) {
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
  for (const auto& q : pts) {
    const double w = 1.0 / std::max(q.count, 1.0);
    const Eigen::Vector2d g{1.0, -std::cos(2.0 * (q.angle - phase))};
    a += w * g * g.transpose();
    rhs += w * q.count * g;
  }
  const Eigen::Vector2d x = a.ldlt().solve(rhs);
  const double m = x[0];
  return {m, m != 0.0 ? x[1] / m : 0.0, phase};
}

inline FitState levenberg_marquardt(std::span<const FitPoint> pts, Eigen::Vector3d p, int max_iter,
                                    int& iterations, bool& converged) {
  double chi2 = fit_chi2(pts, p);
  double lambda = 1e-3;
  converged = false;
  for (iterations = 0; iterations < max_iter; ++iterations) {
    Eigen::Matrix3d jtj;
    Eigen::Vector3d jtr;
    normal_equations(pts, p, jtj, jtr);
    bool improved = false;
    for (int tries = 0; tries < 40; ++tries) {
      Eigen::Matrix3d a = jtj;
      for (int k = 0; k < 3; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-12);
      const Eigen::Vector3d step = a.ldlt().solve(jtr);
      const Eigen::Vector3d trial = p + step;
      const double c2 = fit_chi2(pts, trial);
      if (std::isfinite(c2) && c2 <= chi2) {
        const double rel = chi2 > 0.0 ? (chi2 - c2) / chi2 : 0.0;
        const double step_rel = step.cwiseAbs().maxCoeff() / std::max(1.0, p.cwiseAbs().maxCoeff());
        p = trial;
        chi2 = c2;
        lambda = std::max(lambda / 10.0, 1e-15);
        improved = true;
        if (rel < 1e-14 || step_rel < 1e-13 || c2 == 0.0) converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) {
      // No downhill step at any damping: at a minimum to working precision.
      converged = true;
    }
    if (converged) break;
  }
  return {p, chi2};
}

}  // namespace detail

// Weighted least-squares fit with Poisson weights 1/max(count, 1).
// Levenberg-Marquardt from 16 starting phases; the best minimum wins.
inline SinusoidFit fit_sinusoid(std::span<const FitPoint> pts) {
  if (pts.size() < 6) throw FitError("sinusoid fit needs at least 6 points, got " + std::to_string(pts.size()));
  const auto [lo_it, hi_it] = std::minmax_element(
      pts.begin(), pts.end(), [](const FitPoint& x, const FitPoint& y) { return x.angle < y.angle; });
  if (hi_it->angle - lo_it->angle < std::numbers::pi / 2.0 - 1e-12)
    throw FitError("sinusoid fit needs points spanning at least half a period (90 deg)");

  detail::FitState best;
  bool have = false;
  int best_iter = 0;
  bool any_converged = false;
  for (int s = 0; s < 16; ++s) {
    const double phase0 = s * std::numbers::pi / 16.0;
    int iters = 0;
    bool conv = false;
    const auto st = detail::levenberg_marquardt(pts, detail::start_at_phase(pts, phase0), 200, iters, conv);
    if (!conv) continue;
    any_converged = true;
    if (!have || st.chi2 < best.chi2) {
      best = st;
      best_iter = iters;
      have = true;
    }
  }
  if (!any_converged) throw FitError("sinusoid fit did not converge from any of 16 starting phases");

  Eigen::Vector3d p = best.p;
  if (p[1] < 0.0) {
    p[1] = -p[1];
    p[2] += std::numbers::pi / 2.0;
  }
  p[2] = std::fmod(p[2], std::numbers::pi);
  if (p[2] < 0.0) p[2] += std::numbers::pi;

  SinusoidFit f;
  f.mean_level = p[0];
  f.visibility = p[1];
  f.amplitude = p[0] * p[1];
  f.phase = p[2];
  f.chi2 = best.chi2;
  const double dof = static_cast<double>(pts.size()) - 3.0;
  f.chi2_per_dof = best.chi2 / dof;
  f.iterations = best_iter;

  Eigen::Matrix3d jtj;
  Eigen::Vector3d jtr;
  detail::normal_equations(pts, p, jtj, jtr);
  // The phase column vanishes at V = 0; invert the (M, V) block alone there.
  Eigen::FullPivLU<Eigen::Matrix3d> lu(jtj);
  if (lu.rank() == 3) {
    const Eigen::Matrix3d cov = lu.inverse();
    f.sigma_mean_level = std::sqrt(std::max(0.0, cov(0, 0)));
    f.sigma_visibility = std::sqrt(std::max(0.0, cov(1, 1)));
    f.sigma_phase = std::sqrt(std::max(0.0, cov(2, 2)));
  } else {
    const Eigen::Matrix2d cov = jtj.topLeftCorner<2, 2>().inverse();
    f.sigma_mean_level = std::sqrt(std::max(0.0, cov(0, 0)));
    f.sigma_visibility = std::sqrt(std::max(0.0, cov(1, 1)));
    f.sigma_phase = std::numeric_limits<double>::infinity();
  }
  f.phase_unconstrained = !(f.visibility > 2.0 * f.sigma_visibility) || !std::isfinite(f.sigma_phase);
  return f;
}

enum class SignalingStatus { Ok, Flagged, InsufficientData };

struct MarginalComparison {
  Side side = Side::Alice;
  int local_setting = 0;
  double p_plus_remote0 = 0.0;  // P(+) given remote setting 0
  double p_plus_remote1 = 0.0;
  std::uint64_t n_remote0 = 0;
  std::uint64_t n_remote1 = 0;
  double delta = 0.0;  // p1 - p0
  double z = 0.0;
  SignalingStatus status = SignalingStatus::InsufficientData;
};

struct NoSignalingReport {
  std::array<MarginalComparison, 4> comparisons{};  // Alice a=0,1 then Bob b=0,1
  double max_abs_delta = 0.0;
  double z_of_max_delta = 0.0;
  double max_abs_z = 0.0;
  SignalingStatus status = SignalingStatus::InsufficientData;
};

// Each side's P(+) at a fixed local setting, compared across the two remote
// settings with a two-proportion z-test.
inline NoSignalingReport no_signaling_check(const CoincidenceTable& t, double z_threshold = 3.0) {
  NoSignalingReport rep;
  std::size_t slot = 0;
  bool all_computed = true;
  bool any_flagged = false;
  for (Side side : {Side::Alice, Side::Bob}) {
    for (int local = 0; local < 2; ++local) {
      MarginalComparison m;
      m.side = side;
      m.local_setting = local;
      std::array<std::uint64_t, 2> plus{}, n{};
      for (int remote = 0; remote < 2; ++remote) {
        const int a = side == Side::Alice ? local : remote;
        const int b = side == Side::Alice ? remote : local;
        n[remote] = t.total(a, b);
        plus[remote] = side == Side::Alice ? t.at(a, b, 0, 0) + t.at(a, b, 0, 1)
                                           : t.at(a, b, 0, 0) + t.at(a, b, 1, 0);
      }
      m.n_remote0 = n[0];
      m.n_remote1 = n[1];
      if (n[0] > 0 && n[1] > 0) {
        m.p_plus_remote0 = double(plus[0]) / double(n[0]);
        m.p_plus_remote1 = double(plus[1]) / double(n[1]);
        m.delta = m.p_plus_remote1 - m.p_plus_remote0;
        const double pooled = double(plus[0] + plus[1]) / double(n[0] + n[1]);
        const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / double(n[0]) + 1.0 / double(n[1])));
        m.z = se > 0.0 ? m.delta / se : 0.0;
        m.status = std::abs(m.z) >= z_threshold ? SignalingStatus::Flagged : SignalingStatus::Ok;
        any_flagged = any_flagged || m.status == SignalingStatus::Flagged;
        if (std::abs(m.delta) > rep.max_abs_delta) {
          rep.max_abs_delta = std::abs(m.delta);
          rep.z_of_max_delta = m.z;
        }
        rep.max_abs_z = std::max(rep.max_abs_z, std::abs(m.z));
      } else {
        all_computed = false;
      }
      rep.comparisons[slot++] = m;
    }
  }
  rep.status = any_flagged ? SignalingStatus::Flagged
                           : (all_computed ? SignalingStatus::Ok : SignalingStatus::InsufficientData);
  return rep;
}

inline const char* to_string(SignalingStatus s) {
  switch (s) {
    case SignalingStatus::Ok: return "ok";
    case SignalingStatus::Flagged: return "flagged";
    case SignalingStatus::InsufficientData: return "insufficient-data";
  }
  return "?";
}

}  // namespace bellsim
