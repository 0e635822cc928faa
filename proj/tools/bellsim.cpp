// bellsim: simulate a two-station Bell experiment to tag files, analyze the
// files offline, run the analyzer-rotation scan and the locality audit.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "bellsim/config_io.hpp"
#include "bellsim/experiment.hpp"
#include "bellsim/locality_audit.hpp"
#include "bellsim/report.hpp"
#include "bellsim/tagstream.hpp"

namespace fs = std::filesystem;
using namespace bellsim;

namespace {

struct CommonOverrides {
  std::string config_path;
  std::optional<std::string> model;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;
  std::optional<double> visibility;
  std::optional<std::string> out_dir;
};

ExperimentConfig load_with_overrides(const CommonOverrides& o) {
  ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (o.model) cfg.model = *o.model;
  if (o.seed) cfg.seed = *o.seed;
  if (o.duration) cfg.duration = *o.duration;
  if (o.visibility) cfg.state.visibility = *o.visibility;
  if (o.out_dir) cfg.output_dir = *o.out_dir;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOverrides& o) {
  cmd->add_option("-c,--config", o.config_path, "Experiment config (JSON); defaults apply when omitted");
  cmd->add_option("--model", o.model, "quantum | lhv-deterministic | lhv-detection-loophole");
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--duration", o.duration, "Run duration in seconds");
  cmd->add_option("--visibility", o.visibility, "Source visibility V");
  cmd->add_option("-o,--out", o.out_dir, "Output directory");
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  return os;
}

int cmd_simulate(const CommonOverrides& o, bool text_export) {
  const auto cfg = load_with_overrides(o);
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  const auto t0 = std::chrono::steady_clock::now();
  const auto sim = run_simulation(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_stream_file((dir / "alice.tags").string(), sim.alice.header, sim.alice.tags);
  write_stream_file((dir / "bob.tags").string(), sim.bob.header, sim.bob.tags);
  if (text_export) {
    auto a = open_out(dir / "alice.tags.csv");
    write_text(a, sim.alice.header, sim.alice.tags);
    auto b = open_out(dir / "bob.tags.csv");
    write_text(b, sim.bob.header, sim.bob.tags);
  }

  auto stats_json = [](const StationStats& s, std::size_t tags) {
    return nlohmann::json{{"arrivals", s.arrivals},     {"not_detected", s.not_detected},
                          {"blanked", s.blanked},       {"dead", s.dead},
                          {"signal_tags", s.signal_tags}, {"dark_generated", s.dark_generated},
                          {"dark_tags", s.dark_tags},   {"tags_written", tags}};
  };
  nlohmann::json manifest{{"config", config_to_json(cfg)},
                          {"pairs_emitted", sim.pairs_emitted},
                          {"alice", stats_json(sim.alice_stats, sim.alice.tags.size())},
                          {"bob", stats_json(sim.bob_stats, sim.bob.tags.size())},
                          {"files", {"alice.tags", "bob.tags"}},
                          {"oracle_file", "oracle_true_offset.json"}};
  open_out(dir / "manifest.json") << manifest.dump(2) << '\n';
  // Kept apart from the manifest so any use of it by analysis is obvious.
  open_out(dir / "oracle_true_offset.json")
      << nlohmann::json{{"note", "simulation ground truth; never read by analyze"},
                        {"true_offset_s", sim.true_offset}}
             .dump(2)
      << '\n';

  std::cout << "pairs emitted: " << sim.pairs_emitted << "\n"
            << "alice tags:    " << sim.alice.tags.size() << "\n"
            << "bob tags:      " << sim.bob.tags.size() << "\n"
            << "wrote " << dir.string() << " (" << secs << " s)\n";
  return 0;
}

struct AnalyzeArgs {
  std::string alice_file, bob_file;
  std::optional<std::string> config_path;
  std::optional<double> window_ns;
  std::optional<double> search_range_ns;
  std::optional<std::string> match_mode;
  std::optional<std::string> error_model;
  std::string out_dir;
};

AnalysisParams analysis_params(const AnalyzeArgs& a) {
  AnalysisParams p = a.config_path ? load_config(*a.config_path).analysis : AnalysisParams{};
  if (a.window_ns) p.window = *a.window_ns * 1e-9;
  if (a.search_range_ns) p.offset.coarse_range = *a.search_range_ns * 1e-9;
  if (a.match_mode) p.match_mode = detail::match_mode_from_string(*a.match_mode);
  if (a.error_model) p.error_model = detail::error_model_from_string(*a.error_model);
  return p;
}

int cmd_analyze(const AnalyzeArgs& args) {
  const auto params = analysis_params(args);
  const auto a = read_stream_file(args.alice_file);
  const auto b = read_stream_file(args.bob_file);
  const auto rep = analyze(a, b, params);
  write_summary(std::cout, rep);
  if (!args.out_dir.empty()) {
    const fs::path dir = args.out_dir;
    fs::create_directories(dir);
    auto t = open_out(dir / "coincidences.csv");
    write_table_csv(t, rep.matches.table);
    auto c = open_out(dir / "chsh.csv");
    write_chsh_csv(c, rep.chsh);
    auto o = open_out(dir / "offset.csv");
    write_offset_csv(o, rep.offset);
    auto n = open_out(dir / "no_signaling.csv");
    write_no_signaling_csv(n, rep.no_signaling);
    auto s = open_out(dir / "singles.csv");
    write_singles_csv(s, rep);
    std::cout << "wrote " << dir.string() << "\n";
  }
  return 0;
}

int cmd_scan(const CommonOverrides& o, std::optional<int> steps, std::optional<double> dwell, bool noiseless,
             unsigned threads) {
  auto cfg = load_with_overrides(o);
  if (steps) cfg.scan.steps = *steps;
  if (dwell) cfg.scan.dwell = *dwell;
  if (noiseless) cfg.scan.noiseless = true;
  const auto res = run_scan(cfg, threads);
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  auto s = open_out(dir / "scan.csv");
  write_scan_csv(s, res, cfg.scan);
  auto f = open_out(dir / "scan_fit.csv");
  write_scan_fit_csv(f, res);
  auto c = open_out(dir / "scan_curves.csv");
  write_scan_curve_csv(c, res, cfg.scan);
  for (std::size_t k = 0; k < kScanCurves.size(); ++k)
    std::cout << kScanCurves[k].label << ": V = " << res.fits[k].visibility << " +- "
              << res.fits[k].sigma_visibility << ", chi2/dof = " << res.fits[k].chi2_per_dof << "\n";
  std::cout << "combined visibility: " << res.combined_visibility << " +- " << res.combined_sigma << "\n";
  const char* names[] = {"alice +", "alice -", "bob +", "bob -"};
  for (std::size_t d = 0; d < 4; ++d)
    std::cout << "singles " << names[d] << ": oscillation " << res.singles_flatness[d].significance
              << " sigma\n";
  std::cout << "wrote " << dir.string() << "\n";
  return 0;
}

int cmd_audit(const CommonOverrides& o, const std::optional<std::string>& alice_file,
              const std::optional<std::string>& bob_file) {
  const auto cfg = load_with_overrides(o);
  const auto rep = audit_config(cfg);
  std::cout << "light time:            " << rep.light_time * 1e6 << " us\n"
            << "measurement duration:  " << rep.measurement_duration * 1e9 << " ns\n"
            << "slack:                 " << rep.slack * 1e6 << " us\n"
            << "margin ratio:          " << rep.margin_ratio << "\n"
            << "space-like separated:  " << (rep.pass ? "yes" : "NO") << "\n";
  const bool write = o.out_dir.has_value();
  const fs::path dir = cfg.output_dir;
  if (write) {
    fs::create_directories(dir);
    auto os = open_out(dir / "locality.csv");
    write_locality_csv(os, rep);
  }
  bool pass = rep.pass;
  if (alice_file && bob_file) {
    const auto a = read_stream_file(*alice_file);
    const auto b = read_stream_file(*bob_file);
    const auto off = recover_offset(a.tags, b.tags, cfg.analysis.offset);
    const auto s = audit_streams(a.tags, b.tags, cfg.geometry, cfg.budget, off.offset_ticks(),
                                 from_seconds(cfg.analysis.window));
    std::cout << "per-coincidence audit: " << to_string(s.status) << " (" << s.coincidences << " coincidences, "
              << s.violations << " violations, min slack " << s.min_slack * 1e6 << " us)\n";
    if (write) {
      auto os = open_out(dir / "locality_streams.csv");
      write_stream_audit_csv(os, s);
    }
    pass = pass && s.status != AuditStatus::Fail;
  }
  return pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-station Bell experiment simulator and offline analyzer"};
  app.require_subcommand(1);

  CommonOverrides sim_o;
  bool text_export = false;
  auto* sim = app.add_subcommand("simulate", "Run source and both stations, write alice.tags / bob.tags");
  add_common(sim, sim_o);
  sim->add_flag("--text", text_export, "Also write CSV text dumps of both streams");

  AnalyzeArgs an;
  auto* ana = app.add_subcommand("analyze", "Recover the clock offset, count coincidences, compute CHSH");
  ana->add_option("alice", an.alice_file, "Alice's tag file")->required()->check(CLI::ExistingFile);
  ana->add_option("bob", an.bob_file, "Bob's tag file")->required()->check(CLI::ExistingFile);
  ana->add_option("-c,--config", an.config_path, "Take analysis parameters from this config");
  ana->add_option("--window-ns", an.window_ns, "Coincidence window, full width in ns (default 6)");
  ana->add_option("--search-range-ns", an.search_range_ns, "Offset search half-range in ns (default 1e6)");
  ana->add_option("--match-mode", an.match_mode, "nearest | all-pairs");
  ana->add_option("--error-model", an.error_model, "multinomial | poisson-numerator");
  ana->add_option("-o,--out", an.out_dir, "Directory for CSV outputs");

  CommonOverrides scan_o;
  std::optional<int> steps;
  std::optional<double> dwell;
  bool noiseless = false;
  unsigned threads = 0;
  auto* scan = app.add_subcommand("scan", "Sweep Alice's analyzer rotation and fit the coincidence curves");
  add_common(scan, scan_o);
  scan->add_option("--steps", steps, "Number of scan points (default 41)");
  scan->add_option("--dwell", dwell, "Seconds per point (default 5)");
  scan->add_flag("--noiseless", noiseless, "Use expected counts instead of simulation");
  scan->add_option("--threads", threads, "Worker threads (0 = all cores)");

  CommonOverrides audit_o;
  std::optional<std::string> audit_a, audit_b;
  auto* aud = app.add_subcommand("audit", "Check space-like separation of the two measurement processes");
  add_common(aud, audit_o);
  aud->add_option("--alice", audit_a, "Alice's tag file for a per-coincidence audit")->check(CLI::ExistingFile);
  aud->add_option("--bob", audit_b, "Bob's tag file for a per-coincidence audit")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(sim_o, text_export);
    if (*ana) return cmd_analyze(an);
    if (*scan) return cmd_scan(scan_o, steps, dwell, noiseless, threads);
    if (*aud) return cmd_audit(audit_o, audit_a, audit_b);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
