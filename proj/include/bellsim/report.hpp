#pragma once

// CSV and plain-text renderings of analysis results. Every CSV starts with a
// header row.

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "bellsim/experiment.hpp"

namespace bellsim {

namespace detail {
inline std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}
}  // namespace detail

inline void write_table_csv(std::ostream& os, const CoincidenceTable& t) {
  os << "alice_setting,bob_setting,alice_detector,bob_detector,count\n";
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          os << a << ',' << b << ',' << symbol(Outcome(i)) << ',' << symbol(Outcome(j)) << ','
             << t.at(a, b, i, j) << '\n';
}

inline void write_chsh_csv(std::ostream& os, const ChshReport& r) {
  os << "quantity,alice_setting,bob_setting,value,sigma,N\n";
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      os << "E," << a << ',' << b << ',' << detail::num(r.E[a][b].E) << ',' << detail::num(r.E[a][b].sigma_E) << ','
         << r.E[a][b].N << '\n';
  os << "S,,," << detail::num(r.result.S) << ',' << detail::num(r.result.sigma_S) << ",\n";
  os << "n_sigma_violation,,," << detail::num(r.result.n_sigma_violation) << ",,\n";
  os << "bob_beta_bit,,," << r.bob_beta_bit << ",,\n";
}

inline void write_offset_csv(std::ostream& os, const OffsetEstimate& e) {
  os << "offset_s,coarse_peak_s,peak_height,background_mean,snr,fwhm_s\n";
  os << detail::num(e.offset) << ',' << detail::num(e.coarse_peak) << ',' << detail::num(e.peak_height) << ','
     << detail::num(e.background_mean) << ',' << detail::num(e.snr) << ',' << detail::num(e.fwhm) << '\n';
}

inline void write_no_signaling_csv(std::ostream& os, const NoSignalingReport& r) {
  os << "side,local_setting,p_plus_remote0,p_plus_remote1,n_remote0,n_remote1,delta,z,status\n";
  for (const auto& m : r.comparisons)
    os << (m.side == Side::Alice ? "alice" : "bob") << ',' << m.local_setting << ','
       << detail::num(m.p_plus_remote0) << ',' << detail::num(m.p_plus_remote1) << ',' << m.n_remote0 << ','
       << m.n_remote1 << ',' << detail::num(m.delta) << ',' << detail::num(m.z) << ',' << to_string(m.status)
       << '\n';
}

inline void write_singles_csv(std::ostream& os, const AnalysisReport& r) {
  os << "station,setting,detector,count,rate_per_s\n";
  auto rows = [&](const char* name, const SinglesCounts& c, double span) {
    for (int s = 0; s < 2; ++s)
      for (int d = 0; d < 2; ++d)
        os << name << ',' << s << ',' << symbol(Outcome(d)) << ',' << c[s][d] << ','
           << detail::num(span > 0 ? double(c[s][d]) / span : 0.0) << '\n';
  };
  rows("alice", r.alice_singles, r.alice_span);
  rows("bob", r.bob_singles, r.bob_span);
}

inline void write_locality_csv(std::ostream& os, const LocalityReport& r) {
  os << "light_time_s,measurement_duration_s,slack_s,margin_ratio,pass\n";
  os << detail::num(r.light_time) << ',' << detail::num(r.measurement_duration) << ',' << detail::num(r.slack)
     << ',' << detail::num(r.margin_ratio) << ',' << (r.pass ? "true" : "false") << '\n';
}

inline void write_stream_audit_csv(std::ostream& os, const StreamAuditReport& r) {
  os << "status,coincidences,violations,min_slack_s,max_time_difference_s\n";
  os << to_string(r.status) << ',' << r.coincidences << ',' << r.violations << ','
     << detail::num(r.status == AuditStatus::NoData ? 0.0 : r.min_slack) << ','
     << detail::num(r.max_time_difference) << '\n';
}

// One row per scan point: rotation, display voltage, the four plotted
// coincidence curves and the four singles counts.
inline void write_scan_csv(std::ostream& os, const ScanResult& s, const ScanParams& p) {
  os << "point,angle_deg,bias_volts";
  for (const auto& c : kScanCurves) os << ',' << c.label;
  os << ",alice_plus_singles,alice_minus_singles,bob_plus_singles,bob_minus_singles,total_coincidences\n";
  for (std::size_t k = 0; k < s.points.size(); ++k) {
    const auto& pt = s.points[k];
    const double deg = rad_to_deg(pt.angle);
    os << k << ',' << detail::num(deg) << ',' << detail::num(deg * p.volts_per_degree);
    for (const auto& c : kScanCurves)
      os << ',' << detail::num(pt.coincidences[CoincidenceTable::index(c.a, c.b, c.i, c.j)]);
    for (double v : pt.singles) os << ',' << detail::num(v);
    os << ',' << pt.total_coincidences << '\n';
  }
}

inline void write_scan_fit_csv(std::ostream& os, const ScanResult& s) {
  os << "curve,mean_level,visibility,sigma_visibility,phase_deg,sigma_phase_deg,chi2_per_dof,phase_unconstrained\n";
  for (std::size_t c = 0; c < kScanCurves.size(); ++c) {
    const auto& f = s.fits[c];
    os << kScanCurves[c].label << ',' << detail::num(f.mean_level) << ',' << detail::num(f.visibility) << ','
       << detail::num(f.sigma_visibility) << ',' << detail::num(rad_to_deg(f.phase)) << ','
       << detail::num(rad_to_deg(f.sigma_phase)) << ',' << detail::num(f.chi2_per_dof) << ','
       << (f.phase_unconstrained ? "true" : "false") << '\n';
  }
  os << "combined,," << detail::num(s.combined_visibility) << ',' << detail::num(s.combined_sigma) << ",,,,\n";
}

// Fitted curves sampled on a fine grid, for plotting next to the data.
inline void write_scan_curve_csv(std::ostream& os, const ScanResult& s, const ScanParams& p, int samples = 181) {
  os << "angle_deg";
  for (const auto& c : kScanCurves) os << ',' << c.label << "_fit";
  os << '\n';
  for (int k = 0; k < samples; ++k) {
    const double deg = p.start_deg + (p.stop_deg - p.start_deg) * k / double(samples - 1);
    os << detail::num(deg);
    for (const auto& f : s.fits) os << ',' << detail::num(f.eval(deg_to_rad(deg)));
    os << '\n';
  }
}

inline void write_summary(std::ostream& os, const AnalysisReport& r) {
  os << "clock offset (B - A):  " << detail::num(r.offset.offset * 1e9) << " ns\n"
     << "peak SNR / FWHM:       " << detail::num(r.offset.snr) << " / " << detail::num(r.offset.fwhm * 1e9)
     << " ns\n"
     << "coincidences:          " << r.matches.table.total() << '\n';
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      os << "E(" << a << ',' << b << ") = " << detail::num(r.chsh.E[a][b].E) << " +- "
         << detail::num(r.chsh.E[a][b].sigma_E) << "  (N = " << r.chsh.E[a][b].N << ")\n";
  os << "S = " << detail::num(r.chsh.result.S) << " +- " << detail::num(r.chsh.result.sigma_S) << "  ("
     << detail::num(r.chsh.result.n_sigma_violation) << " sigma above 2)\n"
     << "no-signaling: " << to_string(r.no_signaling.status) << ", max |dP| = "
     << detail::num(r.no_signaling.max_abs_delta) << " (z = " << detail::num(r.no_signaling.z_of_max_delta)
     << ")\n";
}

}  // namespace bellsim
