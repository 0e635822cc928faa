#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bellsim/outcome_models.hpp"
#include "bellsim/random.hpp"
#include "bellsim/units.hpp"

namespace bellsim {

// Station-local time base. The offset is realized once per run on the
// synchronization grid; per-event jitter is added at tagging time.
struct ClockModel {
  double offset = 0.0;                // s, >= 0
  double drift = 0.0;                 // s/s
  double jitter_sigma = 0.5e-9;       // s
  double sync_quantization = 20e-9;   // s

  void validate() const {
    if (!(offset >= 0.0) || !std::isfinite(offset))
      throw std::invalid_argument("clock offset must be finite and >= 0");
    if (!(std::abs(drift) < 1e-6)) throw std::invalid_argument("|clock drift| must be < 1e-6");
    if (!(jitter_sigma >= 0.0)) throw std::invalid_argument("jitter_sigma must be >= 0");
    if (!(sync_quantization >= 0.0)) throw std::invalid_argument("sync_quantization must be >= 0");
  }

  Picoseconds realized_offset() const {
    if (sync_quantization <= 0.0) return from_seconds(offset);
    const double q = sync_quantization;
    return from_seconds(std::round(offset / q) * q);
  }
};

// local = t (1 + drift) + realized offset
inline Picoseconds clock_map(const ClockModel& clock, Picoseconds t) {
  const double drifted = static_cast<double>(t.count()) * clock.drift;
  return t + Picoseconds{std::llround(drifted)} + clock.realized_offset();
}

struct StationConfig {
  std::array<double, 2> setting_angles{0.0, deg_to_rad(45.0)};  // rad, indexed by setting bit
  double sample_period = 100e-9;
  double slot_phase = 0.0;         // s, position of the first slot boundary
  double rng_bias = 0.5;           // P(bit = 1)
  double settle_delay = 75e-9;
  double settle_margin = 25e-9;
  double transition_blank = 20e-9;  // full width, centred on each boundary
  double efficiency = 0.05;
  double dark_rate = 300.0;         // per detector
  double dead_time = 1e-6;          // per detector channel, non-paralyzable
  double tag_resolution = 75e-12;
  double fiber_delay = 2.5e-6;      // source to detector
  ClockModel clock;

  static StationConfig alice_default() { return {}; }

  static StationConfig bob_default() {
    StationConfig c;
    c.setting_angles = {deg_to_rad(22.5), deg_to_rad(67.5)};
    c.fiber_delay = 2.503e-6;
    c.clock.offset = 87.654321e-6;
    return c;
  }

  void validate() const {
    for (double a : setting_angles)
      if (!std::isfinite(a)) throw std::invalid_argument("setting angles must be finite");
    if (!(sample_period > 0.0)) throw std::invalid_argument("sample_period must be > 0");
    if (!(rng_bias >= 0.48 && rng_bias <= 0.52))
      throw std::invalid_argument("rng_bias must lie in [0.48, 0.52]");
    if (!(settle_delay >= 0.0 && settle_margin >= 0.0))
      throw std::invalid_argument("settle_delay and settle_margin must be >= 0");
    if (!(transition_blank >= 0.0 && transition_blank < sample_period))
      throw std::invalid_argument("transition_blank must lie in [0, sample_period)");
    if (!(efficiency >= 0.0 && efficiency <= 1.0))
      throw std::invalid_argument("efficiency must lie in [0, 1]");
    if (!(dark_rate >= 0.0)) throw std::invalid_argument("dark_rate must be >= 0");
    if (!(dead_time >= 0.0)) throw std::invalid_argument("dead_time must be >= 0");
    if (!(tag_resolution > 0.0)) throw std::invalid_argument("tag_resolution must be > 0");
    if (!(fiber_delay >= 0.0)) throw std::invalid_argument("fiber_delay must be >= 0");
    clock.validate();
  }
};

struct TimeTag {
  Picoseconds timestamp{0};  // local clock, on the tag_resolution grid
  std::uint8_t setting = 0;
  Outcome detector = Outcome::Plus;

  bool operator==(const TimeTag&) const = default;
};

struct SettingSample {
  int bit = 0;
  std::int64_t slot = 0;
};

// Random setting bit latched once per sampling slot. Bits are a keyed hash
// of the slot index, so any slot can be replayed without running the
// generator forward.
class SettingSchedule {
 public:
  SettingSchedule(std::uint64_t seed, Picoseconds period, Picoseconds phase, double bias)
      : seed_(seed), period_(period), phase_(phase), bias_(bias) {
    if (period.count() <= 0) throw std::invalid_argument("sample period must be > 0");
    if (!(bias >= 0.0 && bias <= 1.0)) throw std::invalid_argument("bias must lie in [0, 1]");
  }

  std::int64_t slot_of(Picoseconds t) const {
    return floor_div((t - phase_).count(), period_.count());
  }

  int latched_bit(std::int64_t slot) const {
    const double u = to_unit_interval(splitmix64(seed_ ^ splitmix64(static_cast<std::uint64_t>(slot))));
    return u < bias_ ? 1 : 0;
  }

  SettingSample setting_at(Picoseconds t) const {
    const auto slot = slot_of(t);
    return {latched_bit(slot), slot};
  }

  // Distance from t to the nearest slot boundary.
  Picoseconds distance_to_boundary(Picoseconds t) const {
    const std::int64_t into = (t - phase_).count() - slot_of(t) * period_.count();
    return Picoseconds{std::min(into, period_.count() - into)};
  }

  Picoseconds period() const { return period_; }

 private:
  std::uint64_t seed_;
  Picoseconds period_;
  Picoseconds phase_;
  double bias_;
};

struct StationStats {
  std::uint64_t arrivals = 0;
  std::uint64_t not_detected = 0;  // model said no, or efficiency draw failed
  std::uint64_t blanked = 0;
  std::uint64_t dead = 0;
  std::uint64_t signal_tags = 0;
  std::uint64_t dark_generated = 0;
  std::uint64_t dark_tags = 0;
};

struct StationSeeds {
  std::uint64_t local = 0;     // efficiency, jitter, model draws
  std::uint64_t settings = 0;  // setting-bit hash key
  std::uint64_t dark = 0;      // dark-count arrival times
};

struct DarkArrival {
  Picoseconds time{0};
  Outcome detector = Outcome::Plus;
};

// Global arrival times of dark counts: one Poisson stream per detector over
// [0, duration), merged in time order.
inline std::vector<DarkArrival> dark_arrivals(Picoseconds duration, double rate, std::uint64_t seed) {
  std::vector<DarkArrival> out;
  if (rate <= 0.0 || duration.count() <= 0) return out;
  Rng rng{seed};
  for (Outcome det : {Outcome::Plus, Outcome::Minus}) {
    double t = 0.0;
    const double end = to_seconds(duration);
    while (true) {
      t += rng.exponential(rate);
      if (t >= end) break;
      out.push_back({from_seconds(t), det});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const DarkArrival& a, const DarkArrival& b) { return a.time < b.time; });
  return out;
}

// One observer station: random setting, detection, blanking around setting
// transitions, per-channel dead time and time-tagging on the local clock.
class Station {
 public:
  Station(const StationConfig& config, const StationSeeds& seeds, Picoseconds duration)
      : config_(config),
        schedule_(seeds.settings, from_seconds(config.sample_period), from_seconds(config.slot_phase),
                  config.rng_bias),
        rng_(seeds.local),
        settle_delay_(from_seconds(config.settle_delay)),
        half_blank_(from_seconds(config.transition_blank / 2.0)),
        dead_time_(from_seconds(config.dead_time)),
        resolution_(from_seconds(config.tag_resolution)),
        darks_(dark_arrivals(duration, config.dark_rate, seeds.dark)) {
    config.validate();
    if (resolution_.count() <= 0) throw std::invalid_argument("tag_resolution below 1 ps");
    stats_.dark_generated = darks_.size();
  }

  const StationConfig& config() const { return config_; }
  const SettingSchedule& schedule() const { return schedule_; }
  const StationStats& stats() const { return stats_; }

  // Setting optically applied at global time t (electronics lag by settle_delay).
  SettingSample setting_for_arrival(Picoseconds t) const { return schedule_.setting_at(t - settle_delay_); }

  double angle_for(int bit) const { return config_.setting_angles[static_cast<std::size_t>(bit)]; }

  double local_draw() { return rng_.uniform(); }

  bool in_transition(Picoseconds t) const {
    if (config_.transition_blank <= 0.0) return false;
    return schedule_.distance_to_boundary(t - settle_delay_) <= half_blank_;
  }

  Picoseconds quantize(Picoseconds local) const {
    const auto ticks = std::max<std::int64_t>(0, local.count());
    return Picoseconds{ticks - ticks % resolution_.count()};
  }

  // Signal photon arriving at global time t. Arrivals must be presented in
  // non-decreasing order.
  std::optional<TimeTag> process_arrival(Picoseconds t, const LocalResponse& response) {
    if (t < last_arrival_) throw std::logic_error("station: out-of-order arrival");
    last_arrival_ = t;
    flush_darks(t);
    ++stats_.arrivals;
    if (!response.detected || !rng_.bernoulli(config_.efficiency)) {
      ++stats_.not_detected;
      return std::nullopt;
    }
    auto tag = register_event(t, response.result);
    if (tag) ++stats_.signal_tags;
    return tag;
  }

  // Flushes outstanding dark counts and returns the time-sorted stream.
  std::vector<TimeTag> finish() {
    flush_darks(Picoseconds::max());
    std::stable_sort(tags_.begin(), tags_.end(),
                     [](const TimeTag& a, const TimeTag& b) { return a.timestamp < b.timestamp; });
    return std::move(tags_);
  }

 private:
  void flush_darks(Picoseconds until) {
    while (next_dark_ < darks_.size() && darks_[next_dark_].time <= until) {
      const auto& d = darks_[next_dark_++];
      if (register_event(d.time, d.detector)) ++stats_.dark_tags;
    }
  }

  std::optional<TimeTag> register_event(Picoseconds t, Outcome detector) {
    if (in_transition(t)) {
      ++stats_.blanked;
      return std::nullopt;
    }
    const double jitter_ps = rng_.normal(config_.clock.jitter_sigma * kPicosecondsPerSecond);
    const auto local = quantize(clock_map(config_.clock, t) + Picoseconds{std::llround(jitter_ps)});
    auto& last = last_tag_[static_cast<std::size_t>(detector)];
    if (dead_time_.count() > 0 && last && local - *last < dead_time_) {
      ++stats_.dead;
      return std::nullopt;
    }
    last = local;
    const TimeTag tag{local, static_cast<std::uint8_t>(setting_for_arrival(t).bit), detector};
    tags_.push_back(tag);
    return tag;
  }

  StationConfig config_;
  SettingSchedule schedule_;
  Rng rng_;
  Picoseconds settle_delay_;
  Picoseconds half_blank_;
  Picoseconds dead_time_;
  Picoseconds resolution_;
  std::vector<DarkArrival> darks_;
  std::size_t next_dark_ = 0;
  Picoseconds last_arrival_{Picoseconds::min()};
  std::array<std::optional<Picoseconds>, 2> last_tag_{};
  std::vector<TimeTag> tags_;
  StationStats stats_;
};

// Raw dark-count tags of one station over [0, duration): setting attribution,
// clock mapping and quantization applied; blanking and dead time are applied
// only when merged with the signal inside Station.
inline std::vector<TimeTag> dark_counts(Picoseconds duration, const StationConfig& config,
                                        const StationSeeds& seeds) {
  config.validate();
  const SettingSchedule schedule{seeds.settings, from_seconds(config.sample_period),
                                 from_seconds(config.slot_phase), config.rng_bias};
  const auto settle = from_seconds(config.settle_delay);
  const auto res = from_seconds(config.tag_resolution).count();
  std::vector<TimeTag> out;
  for (const auto& d : dark_arrivals(duration, config.dark_rate, seeds.dark)) {
    const auto local = std::max<std::int64_t>(0, clock_map(config.clock, d.time).count());
    out.push_back({Picoseconds{local - local % res},
                   static_cast<std::uint8_t>(schedule.setting_at(d.time - settle).bit), d.detector});
  }
  return out;
}

}  // namespace bellsim
