#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <future>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "bellsim/bell_analysis.hpp"
#include "bellsim/coincidence.hpp"
#include "bellsim/locality_audit.hpp"
#include "bellsim/outcome_models.hpp"
#include "bellsim/quantum_source.hpp"
#include "bellsim/random.hpp"
#include "bellsim/station.hpp"
#include "bellsim/tagstream.hpp"

namespace bellsim {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct AnalysisParams {
  double window = 6e-9;
  OffsetOptions offset;
  MatchMode match_mode = MatchMode::Nearest;
  ErrorModel error_model = ErrorModel::Multinomial;
};

// Coincidence rate of the default pipeline, used to scale noiseless scans.
inline constexpr double kNominalCoincidenceRate = 1390.0;

struct ScanParams {
  double start_deg = 0.0;
  double stop_deg = 180.0;
  int steps = 41;
  double dwell = 5.0;  // s per point
  double volts_per_degree = 200.0 / 180.0;  // display only
  bool noiseless = false;
};

struct ExperimentConfig {
  std::string model = "quantum";
  std::uint64_t seed = 1998;
  EntangledStateParams state;
  double pair_rate = kDefaultPairRate;
  double duration = 10.0;
  StationConfig alice = StationConfig::alice_default();
  StationConfig bob = StationConfig::bob_default();
  Geometry geometry;
  MeasurementBudget budget;
  AnalysisParams analysis;
  ScanParams scan;
  std::string output_dir = "run";

  void validate() const {
    try {
      state.validate();
      EmissionConfig{pair_rate, duration, 0}.validate();
      alice.validate();
      bob.validate();
      geometry.validate();
      budget.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (model != "quantum" && model != "lhv-deterministic" && model != "lhv-detection-loophole")
      throw ConfigError("unknown model '" + model + "'");
    if (!(analysis.window >= 0.0)) throw ConfigError("analysis window must be >= 0");
    if (scan.steps < 6) throw ConfigError("scan needs at least 6 steps");
    if (!(scan.dwell > 0.0)) throw ConfigError("scan dwell must be > 0");
  }
};

struct SimulationOutput {
  TagStream alice;
  TagStream bob;
  StationStats alice_stats;
  StationStats bob_stats;
  std::uint64_t pairs_emitted = 0;
  // Apparent B-minus-A shift of true coincidences. Test oracle only; the
  // analysis never reads it.
  double true_offset = 0.0;
};

inline StreamHeader make_header(Side side, const StationConfig& cfg) {
  StreamHeader h;
  h.station_id = static_cast<std::uint8_t>(side);
  const auto tick = from_seconds(cfg.tag_resolution).count();
  if (tick <= 0 || tick > std::int64_t{UINT32_MAX}) throw ConfigError("tag_resolution out of range");
  h.tick_unit = static_cast<std::uint32_t>(tick);
  h.start_time = static_cast<std::uint64_t>(clock_map(cfg.clock, Picoseconds{0}).count() / tick);
  return h;
}

// Source plus both stations. `alice_rotation` is added to both of Alice's
// analyzer angles (the bias scan knob).
inline SimulationOutput run_simulation(const ExperimentConfig& cfg, double alice_rotation = 0.0) {
  cfg.validate();
  const auto model = make_model(cfg.model, cfg.state);
  const auto duration = from_seconds(cfg.duration);

  StationConfig alice_cfg = cfg.alice;
  for (auto& a : alice_cfg.setting_angles) a += alice_rotation;

  Station alice{alice_cfg,
                {derive_seed(cfg.seed, seed_stream::kAlice), derive_seed(cfg.seed, seed_stream::kAliceSettings),
                 derive_seed(cfg.seed, seed_stream::kAliceDark)},
                duration};
  Station bob{cfg.bob,
              {derive_seed(cfg.seed, seed_stream::kBob), derive_seed(cfg.seed, seed_stream::kBobSettings),
               derive_seed(cfg.seed, seed_stream::kBobDark)},
              duration};

  SimulationOutput out;
  if (cfg.duration > 0.0) {
    PairSource source{{cfg.pair_rate, cfg.duration, derive_seed(cfg.seed, seed_stream::kSource)}};
    const auto delay_a = from_seconds(alice_cfg.fiber_delay);
    const auto delay_b = from_seconds(cfg.bob.fiber_delay);
    PairEvent ev;
    while (source.next(ev)) {
      ++out.pairs_emitted;
      const auto ta = ev.emission_time + delay_a;
      const auto tb = ev.emission_time + delay_b;
      const int sa = alice.setting_for_arrival(ta).bit;
      const int sb = bob.setting_for_arrival(tb).bit;
      PairDraws draws{{ev.lambda}, ev.shared_draw, alice.local_draw(), bob.local_draw()};
      const auto resp = model->respond_pair(alice.angle_for(sa), bob.angle_for(sb), draws);
      alice.process_arrival(ta, resp.alice);
      bob.process_arrival(tb, resp.bob);
    }
  }
  out.alice = {make_header(Side::Alice, alice_cfg), alice.finish()};
  out.bob = {make_header(Side::Bob, cfg.bob), bob.finish()};
  out.alice.header.record_count = out.alice.tags.size();
  out.bob.header.record_count = out.bob.tags.size();
  out.alice_stats = alice.stats();
  out.bob_stats = bob.stats();

  const auto mid = Picoseconds{duration.count() / 2};
  out.true_offset = to_seconds(clock_map(cfg.bob.clock, mid + from_seconds(cfg.bob.fiber_delay)) -
                               clock_map(alice_cfg.clock, mid + from_seconds(alice_cfg.fiber_delay)));
  return out;
}

// Per station: counts[setting][detector].
using SinglesCounts = std::array<std::array<std::uint64_t, 2>, 2>;

inline SinglesCounts count_singles(std::span<const TimeTag> tags) {
  SinglesCounts c{};
  for (const auto& t : tags) ++c[t.setting][static_cast<std::size_t>(t.detector)];
  return c;
}

inline double stream_span_seconds(std::span<const TimeTag> tags) {
  if (tags.size() < 2) return 0.0;
  return to_seconds(tags.back().timestamp - tags.front().timestamp);
}

struct AnalysisReport {
  OffsetEstimate offset;
  MatchResult matches;
  ChshReport chsh;
  NoSignalingReport no_signaling;
  SinglesCounts alice_singles{};
  SinglesCounts bob_singles{};
  double alice_span = 0.0;  // s covered by Alice's stream
  double bob_span = 0.0;
};

// Offline analysis of two independently recorded streams. Only the files'
// contents are used; the clock offset comes from the data.
inline AnalysisReport analyze(const TagStream& a, const TagStream& b, const AnalysisParams& p) {
  if (a.header.station_id != 0 || b.header.station_id != 1)
    throw ConfigError("analyze expects an Alice stream (station_id 0) and a Bob stream (station_id 1), got (" +
                      std::to_string(a.header.station_id) + ", " + std::to_string(b.header.station_id) + ")");
  if (a.tags.empty() || b.tags.empty()) throw std::invalid_argument("analyze: empty stream");
  AnalysisReport r;
  r.offset = recover_offset(a.tags, b.tags, p.offset);
  r.matches = match_coincidences(a.tags, b.tags, r.offset.offset_ticks(), from_seconds(p.window), p.match_mode);
  r.chsh = chsh_from_table(r.matches.table, p.error_model);
  r.no_signaling = no_signaling_check(r.matches.table);
  r.alice_singles = count_singles(a.tags);
  r.bob_singles = count_singles(b.tags);
  r.alice_span = stream_span_seconds(a.tags);
  r.bob_span = stream_span_seconds(b.tags);
  return r;
}

// The four coincidence curves plotted against Alice's rotation:
// (Alice setting, Alice detector, Bob setting, Bob detector).
struct CurveSpec {
  int a, i, b, j;
  const char* label;
};
inline constexpr std::array<CurveSpec, 4> kScanCurves{{
    {0, 0, 0, 0, "A+0/B+0"},
    {0, 0, 0, 1, "A+0/B-0"},
    {1, 0, 0, 1, "A+1/B-0"},
    {1, 1, 1, 1, "A-1/B-1"},
}};

struct ScanPoint {
  double angle = 0.0;  // rad, Alice rotation
  std::array<double, 16> coincidences{};  // CoincidenceTable::index layout
  std::array<double, 4> singles{};        // A+, A-, B+, B-
  std::uint64_t total_coincidences = 0;
};

struct OscillationTest {
  double amplitude = 0.0;      // fitted cos/sin amplitude
  double significance = 0.0;   // sqrt(chi2, 2 dof) of amplitude vs zero
  double mean = 0.0;
};

struct ScanResult {
  std::vector<ScanPoint> points;
  std::array<SinusoidFit, 4> fits{};
  double combined_visibility = 0.0;
  double combined_sigma = 0.0;
  std::array<OscillationTest, 4> singles_flatness{};
};

// Weighted linear fit of y = m + c cos 2t + s sin 2t; reports how far (c, s)
// is from zero in units of its covariance.
inline OscillationTest oscillation_significance(std::span<const FitPoint> pts) {
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (const auto& q : pts) {
    const double w = 1.0 / std::max(q.count, 1.0);
    const Eigen::Vector3d g{1.0, std::cos(2.0 * q.angle), std::sin(2.0 * q.angle)};
    a += w * g * g.transpose();
    rhs += w * q.count * g;
  }
  const Eigen::Matrix3d cov = a.inverse();
  const Eigen::Vector3d x = cov * rhs;
  const Eigen::Vector2d amp = x.tail<2>();
  const Eigen::Matrix2d amp_cov = cov.bottomRightCorner<2, 2>();
  OscillationTest t;
  t.mean = x[0];
  t.amplitude = amp.norm();
  t.significance = std::sqrt(std::max(0.0, amp.dot(amp_cov.inverse() * amp)));
  return t;
}

inline double scan_angle(const ScanParams& s, int k) {
  return deg_to_rad(s.start_deg + (s.stop_deg - s.start_deg) * k / double(s.steps - 1));
}

inline ScanPoint simulate_scan_point(const ExperimentConfig& cfg, int k) {
  ScanPoint pt;
  pt.angle = scan_angle(cfg.scan, k);
  ExperimentConfig c = cfg;
  c.duration = cfg.scan.dwell;
  c.seed = derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(k));
  if (cfg.scan.noiseless) {
    // Expected coincidence counts straight from the outcome law, at the
    // coincidence rate the default pipeline produces.
    if (cfg.model != "quantum") throw ConfigError("noiseless scan requires the quantum model");
    const double per_setting = kNominalCoincidenceRate * c.duration / 4.0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        const auto p = outcome_probabilities(cfg.alice.setting_angles[a] + pt.angle, cfg.bob.setting_angles[b],
                                             cfg.state);
        pt.coincidences[CoincidenceTable::index(a, b, 0, 0)] = per_setting * p.pp;
        pt.coincidences[CoincidenceTable::index(a, b, 1, 1)] = per_setting * p.mm;
        pt.coincidences[CoincidenceTable::index(a, b, 0, 1)] = per_setting * p.pm;
        pt.coincidences[CoincidenceTable::index(a, b, 1, 0)] = per_setting * p.mp;
      }
    pt.total_coincidences = static_cast<std::uint64_t>(4 * per_setting);
    const double singles = kNominalCoincidenceRate * c.duration / (2.0 * cfg.alice.efficiency);
    pt.singles = {singles, singles, singles, singles};
    return pt;
  }
  const auto sim = run_simulation(c, pt.angle);
  const auto rep = analyze(sim.alice, sim.bob, cfg.analysis);
  for (std::size_t n = 0; n < 16; ++n) pt.coincidences[n] = double(rep.matches.table.counts[n]);
  pt.total_coincidences = rep.matches.table.total();
  pt.singles = {double(rep.alice_singles[0][0] + rep.alice_singles[1][0]),
                double(rep.alice_singles[0][1] + rep.alice_singles[1][1]),
                double(rep.bob_singles[0][0] + rep.bob_singles[1][0]),
                double(rep.bob_singles[0][1] + rep.bob_singles[1][1])};
  return pt;
}

// Sweeps Alice's analyzer rotation; points run concurrently, each with its
// own derived seed, so results do not depend on scheduling.
inline ScanResult run_scan(const ExperimentConfig& cfg, unsigned threads = 0) {
  cfg.validate();
  const int n = cfg.scan.steps;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  ScanResult res;
  res.points.resize(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  std::vector<std::future<void>> workers;
  for (unsigned w = 0; w < std::min<unsigned>(threads, static_cast<unsigned>(n)); ++w) {
    workers.push_back(std::async(std::launch::async, [&] {
      for (int k = next++; k < n; k = next++) res.points[static_cast<std::size_t>(k)] = simulate_scan_point(cfg, k);
    }));
  }
  for (auto& f : workers) f.get();

  double wsum = 0.0, vsum = 0.0;
  for (std::size_t c = 0; c < kScanCurves.size(); ++c) {
    const auto& spec = kScanCurves[c];
    std::vector<FitPoint> pts;
    for (const auto& p : res.points)
      pts.push_back({p.angle, p.coincidences[CoincidenceTable::index(spec.a, spec.b, spec.i, spec.j)]});
    res.fits[c] = fit_sinusoid(pts);
    const double s = res.fits[c].sigma_visibility;
    const double w = s > 0.0 ? 1.0 / (s * s) : 1.0;
    wsum += w;
    vsum += w * res.fits[c].visibility;
  }
  res.combined_visibility = vsum / wsum;
  res.combined_sigma = std::sqrt(1.0 / wsum);
  for (std::size_t d = 0; d < 4; ++d) {
    std::vector<FitPoint> pts;
    for (const auto& p : res.points) pts.push_back({p.angle, p.singles[d]});
    res.singles_flatness[d] = oscillation_significance(pts);
  }
  return res;
}

inline LocalityReport audit_config(const ExperimentConfig& cfg) { return audit(cfg.geometry, cfg.budget); }

}  // namespace bellsim
