#pragma once

// JSON form of ExperimentConfig. Angles are in degrees, times in seconds.
// Every key is optional; missing keys keep their defaults.

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bellsim/experiment.hpp"

namespace bellsim {

using nlohmann::json;

namespace detail {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

inline void clock_from_json(const json& j, ClockModel& c) {
  read_opt(j, "offset", c.offset);
  read_opt(j, "drift", c.drift);
  read_opt(j, "jitter_sigma", c.jitter_sigma);
  read_opt(j, "sync_quantization", c.sync_quantization);
}

inline json clock_to_json(const ClockModel& c) {
  return {{"offset", c.offset},
          {"drift", c.drift},
          {"jitter_sigma", c.jitter_sigma},
          {"sync_quantization", c.sync_quantization}};
}

inline void station_from_json(const json& j, StationConfig& s) {
  if (j.contains("setting_angles_deg")) {
    const auto a = j.at("setting_angles_deg").get<std::vector<double>>();
    if (a.size() != 2) throw ConfigError("setting_angles_deg needs exactly two entries");
    s.setting_angles = {deg_to_rad(a[0]), deg_to_rad(a[1])};
  }
  read_opt(j, "sample_period", s.sample_period);
  read_opt(j, "slot_phase", s.slot_phase);
  read_opt(j, "rng_bias", s.rng_bias);
  read_opt(j, "settle_delay", s.settle_delay);
  read_opt(j, "settle_margin", s.settle_margin);
  read_opt(j, "transition_blank", s.transition_blank);
  read_opt(j, "efficiency", s.efficiency);
  read_opt(j, "dark_rate", s.dark_rate);
  read_opt(j, "dead_time", s.dead_time);
  read_opt(j, "tag_resolution", s.tag_resolution);
  read_opt(j, "fiber_delay", s.fiber_delay);
  if (j.contains("clock")) clock_from_json(j.at("clock"), s.clock);
}

inline json station_to_json(const StationConfig& s) {
  return {{"setting_angles_deg", {rad_to_deg(s.setting_angles[0]), rad_to_deg(s.setting_angles[1])}},
          {"sample_period", s.sample_period},
          {"slot_phase", s.slot_phase},
          {"rng_bias", s.rng_bias},
          {"settle_delay", s.settle_delay},
          {"settle_margin", s.settle_margin},
          {"transition_blank", s.transition_blank},
          {"efficiency", s.efficiency},
          {"dark_rate", s.dark_rate},
          {"dead_time", s.dead_time},
          {"tag_resolution", s.tag_resolution},
          {"fiber_delay", s.fiber_delay},
          {"clock", clock_to_json(s.clock)}};
}

inline MatchMode match_mode_from_string(const std::string& s) {
  if (s == "nearest") return MatchMode::Nearest;
  if (s == "all-pairs") return MatchMode::AllPairs;
  throw ConfigError("match_mode must be 'nearest' or 'all-pairs'");
}

inline ErrorModel error_model_from_string(const std::string& s) {
  if (s == "multinomial") return ErrorModel::Multinomial;
  if (s == "poisson-numerator") return ErrorModel::PoissonNumerator;
  throw ConfigError("error_model must be 'multinomial' or 'poisson-numerator'");
}

}  // namespace detail

inline const char* to_string(MatchMode m) { return m == MatchMode::Nearest ? "nearest" : "all-pairs"; }
inline const char* to_string(ErrorModel m) {
  return m == ErrorModel::Multinomial ? "multinomial" : "poisson-numerator";
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    detail::read_opt(j, "model", c.model);
    detail::read_opt(j, "seed", c.seed);
    detail::read_opt(j, "output_dir", c.output_dir);
    if (j.contains("source")) {
      const auto& s = j.at("source");
      detail::read_opt(s, "phase_phi", c.state.phase_phi);
      detail::read_opt(s, "visibility", c.state.visibility);
      detail::read_opt(s, "pair_rate", c.pair_rate);
      detail::read_opt(s, "duration", c.duration);
    }
    if (j.contains("alice")) detail::station_from_json(j.at("alice"), c.alice);
    if (j.contains("bob")) detail::station_from_json(j.at("bob"), c.bob);
    // The audit budget follows the stations unless given explicitly.
    c.budget.choice_to_application = std::max(c.alice.settle_delay + c.alice.settle_margin,
                                               c.bob.settle_delay + c.bob.settle_margin);
    if (j.contains("geometry")) {
      detail::read_opt(j.at("geometry"), "separation", c.geometry.separation);
      detail::read_opt(j.at("geometry"), "signal_speed", c.geometry.signal_speed);
    }
    if (j.contains("budget")) {
      const auto& b = j.at("budget");
      detail::read_opt(b, "choice_to_application", c.budget.choice_to_application);
      detail::read_opt(b, "application_to_registration", c.budget.application_to_registration);
      detail::read_opt(b, "source_sync_skew", c.budget.source_sync_skew);
    }
    if (j.contains("analysis")) {
      const auto& a = j.at("analysis");
      detail::read_opt(a, "window", c.analysis.window);
      detail::read_opt(a, "search_range", c.analysis.offset.coarse_range);
      detail::read_opt(a, "coarse_bin", c.analysis.offset.coarse_bin);
      detail::read_opt(a, "refine_bin", c.analysis.offset.refine_bin);
      detail::read_opt(a, "refine_half_width", c.analysis.offset.refine_half_width);
      detail::read_opt(a, "min_peak_ratio", c.analysis.offset.min_peak_ratio);
      detail::read_opt(a, "peak_exclusion", c.analysis.offset.peak_exclusion);
      detail::read_opt(a, "false_alarm", c.analysis.offset.false_alarm);
      if (a.contains("match_mode")) c.analysis.match_mode = detail::match_mode_from_string(a.at("match_mode"));
      if (a.contains("error_model")) c.analysis.error_model = detail::error_model_from_string(a.at("error_model"));
    }
    if (j.contains("scan")) {
      const auto& s = j.at("scan");
      detail::read_opt(s, "start_deg", c.scan.start_deg);
      detail::read_opt(s, "stop_deg", c.scan.stop_deg);
      detail::read_opt(s, "steps", c.scan.steps);
      detail::read_opt(s, "dwell", c.scan.dwell);
      detail::read_opt(s, "volts_per_degree", c.scan.volts_per_degree);
      detail::read_opt(s, "noiseless", c.scan.noiseless);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  return {{"model", c.model},
          {"seed", c.seed},
          {"output_dir", c.output_dir},
          {"source",
           {{"phase_phi", c.state.phase_phi},
            {"visibility", c.state.visibility},
            {"pair_rate", c.pair_rate},
            {"duration", c.duration}}},
          {"alice", detail::station_to_json(c.alice)},
          {"bob", detail::station_to_json(c.bob)},
          {"geometry", {{"separation", c.geometry.separation}, {"signal_speed", c.geometry.signal_speed}}},
          {"budget",
           {{"choice_to_application", c.budget.choice_to_application},
            {"application_to_registration", c.budget.application_to_registration},
            {"source_sync_skew", c.budget.source_sync_skew}}},
          {"analysis",
           {{"window", c.analysis.window},
            {"search_range", c.analysis.offset.coarse_range},
            {"coarse_bin", c.analysis.offset.coarse_bin},
            {"refine_bin", c.analysis.offset.refine_bin},
            {"refine_half_width", c.analysis.offset.refine_half_width},
            {"min_peak_ratio", c.analysis.offset.min_peak_ratio},
            {"peak_exclusion", c.analysis.offset.peak_exclusion},
            {"false_alarm", c.analysis.offset.false_alarm},
            {"match_mode", to_string(c.analysis.match_mode)},
            {"error_model", to_string(c.analysis.error_model)}}},
          {"scan",
           {{"start_deg", c.scan.start_deg},
            {"stop_deg", c.scan.stop_deg},
            {"steps", c.scan.steps},
            {"dwell", c.scan.dwell},
            {"volts_per_degree", c.scan.volts_per_degree},
            {"noiseless", c.scan.noiseless}}}};
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

}  // namespace bellsim
