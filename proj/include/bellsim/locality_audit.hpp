#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>

#include "bellsim/coincidence.hpp"
#include "bellsim/units.hpp"

namespace bellsim {

inline constexpr double kSpeedOfLight = 299'792'458.0;

struct Geometry {
  double separation = 400.0;            // m, station to station
  double signal_speed = kSpeedOfLight;  // m/s

  void validate() const {
    if (!(separation > 0.0)) throw std::invalid_argument("separation must be > 0");
    if (!(signal_speed > 0.0)) throw std::invalid_argument("signal_speed must be > 0");
  }
};

// Duration of one station's measurement process, from the first event that
// can influence the setting choice to the registration of the photon.
struct MeasurementBudget {
  double choice_to_application = 100e-9;     // settle_delay + settle_margin
  double application_to_registration = 0.0;  // folded into the 100 ns by default
  double source_sync_skew = 5e-9;            // arrival-time difference of the two photons

  void validate() const {
    if (!(choice_to_application >= 0.0 && application_to_registration >= 0.0 && source_sync_skew >= 0.0))
      throw std::invalid_argument("measurement budget terms must be >= 0");
  }

  double duration() const { return choice_to_application + application_to_registration + source_sync_skew; }
};

struct LocalityReport {
  double light_time = 0.0;
  double measurement_duration = 0.0;
  double slack = 0.0;
  double margin_ratio = 0.0;
  bool pass = false;
};

inline LocalityReport audit(const Geometry& g, const MeasurementBudget& b) {
  g.validate();
  b.validate();
  LocalityReport r;
  r.light_time = g.separation / g.signal_speed;
  r.measurement_duration = b.duration();
  r.slack = r.light_time - r.measurement_duration;
  r.margin_ratio = r.measurement_duration / r.light_time;
  r.pass = r.slack > 0.0;
  return r;
}

enum class AuditStatus { Pass, Fail, NoData };

inline const char* to_string(AuditStatus s) {
  switch (s) {
    case AuditStatus::Pass: return "pass";
    case AuditStatus::Fail: return "fail";
    case AuditStatus::NoData: return "no-data";
  }
  return "?";
}

struct StreamAuditReport {
  AuditStatus status = AuditStatus::NoData;
  std::size_t coincidences = 0;
  std::size_t violations = 0;  // coincidences with slack <= 0
  double min_slack = 0.0;      // s
  double max_time_difference = 0.0;  // s, largest |tA - (tB - offset)|
  std::size_t worst_index = 0;       // index into the matched pairs
};

// Per-coincidence check on the common time axis. For a coincidence with
// corrected registration times tA, tB, each side's choice happened
// measurement_duration before its registration; the other side's
// registration must precede the light signal from that choice:
//   slack = light_time - measurement_duration - |tA - tB|.
// The offset only aligns the clocks, so the real path-length skew enters
// through source_sync_skew inside measurement_duration.
inline StreamAuditReport audit_streams(std::span<const MatchedPair> pairs, const Geometry& g,
                                       const MeasurementBudget& b) {
  const auto base = audit(g, b);
  StreamAuditReport rep;
  rep.coincidences = pairs.size();
  if (pairs.empty()) return rep;
  rep.min_slack = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double dt = std::abs(static_cast<double>(pairs[k].delta)) / kPicosecondsPerSecond;
    const double slack = base.slack - dt;
    if (slack <= 0.0) ++rep.violations;
    if (slack < rep.min_slack) {
      rep.min_slack = slack;
      rep.worst_index = k;
    }
    rep.max_time_difference = std::max(rep.max_time_difference, dt);
  }
  rep.status = rep.min_slack > 0.0 ? AuditStatus::Pass : AuditStatus::Fail;
  return rep;
}

// Convenience overload: matches the streams with a known offset first.
inline StreamAuditReport audit_streams(std::span<const TimeTag> a, std::span<const TimeTag> b,
                                       const Geometry& g, const MeasurementBudget& budget,
                                       Picoseconds offset, Picoseconds window) {
  const auto m = match_coincidences(a, b, offset, window);
  return audit_streams(m.pairs, g, budget);
}

}  // namespace bellsim
