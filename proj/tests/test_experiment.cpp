#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bellsim/config_io.hpp"
#include "bellsim/experiment.hpp"
#include "bellsim/report.hpp"

using namespace bellsim;
namespace fs = std::filesystem;

namespace {

ExperimentConfig short_run(double seconds, std::uint64_t seed = 1) {
  ExperimentConfig c;
  c.duration = seconds;
  c.seed = seed;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream is(p);
  std::string line;
  std::getline(is, line);
  return line;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BELLSIM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("bellsim_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Config, DefaultsRoundTripThroughJson) {
  const ExperimentConfig c;
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Config, CheckedInDefaultMatchesBuiltIn) {
  const auto c = load_config(std::string(BELLSIM_SOURCE_DIR) + "/configs/default.json");
  EXPECT_EQ(config_to_json(c), config_to_json(ExperimentConfig{}));
}

TEST(Config, PartialOverride) {
  const auto c = config_from_json(json::parse(R"({"source": {"visibility": 1.0}, "bob": {"clock": {"offset": 1e-4}}})"));
  EXPECT_EQ(c.state.visibility, 1.0);
  EXPECT_EQ(c.bob.clock.offset, 1e-4);
  EXPECT_EQ(c.alice.efficiency, 0.05);
}

TEST(Config, BudgetFollowsStations) {
  const auto c = config_from_json(json::parse(R"({"alice": {"settle_delay": 150e-9}})"));
  EXPECT_NEAR(c.budget.choice_to_application, 175e-9, 1e-18);
}

TEST(Config, Errors) {
  EXPECT_THROW(config_from_json(json::parse(R"({"model": "magic"})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"source": {"visibility": 2}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"alice": {"setting_angles_deg": [0]}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"analysis": {"match_mode": "greedy"}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"source": {"duration": "long"}})")), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Simulation, ZeroDurationGivesEmptyValidStreams) {
  const auto sim = run_simulation(short_run(0.0));
  EXPECT_TRUE(sim.alice.tags.empty());
  EXPECT_TRUE(sim.bob.tags.empty());
  EXPECT_EQ(sim.alice.header.station_id, 0);
  EXPECT_EQ(sim.bob.header.station_id, 1);
  std::ostringstream os;
  write_stream(os, sim.alice.header, sim.alice.tags);
  EXPECT_EQ(os.str().size(), kHeaderSize);
}

TEST(Simulation, Deterministic) {
  const auto s1 = run_simulation(short_run(0.2, 5));
  const auto s2 = run_simulation(short_run(0.2, 5));
  const auto s3 = run_simulation(short_run(0.2, 6));
  EXPECT_EQ(s1.alice.tags, s2.alice.tags);
  EXPECT_EQ(s1.bob.tags, s2.bob.tags);
  EXPECT_NE(s1.alice.tags, s3.alice.tags);
}

TEST(Simulation, SinglesRateInRange) {
  const auto sim = run_simulation(short_run(2.0, 7));
  for (const auto* s : {&sim.alice, &sim.bob}) {
    const auto c = count_singles(s->tags);
    for (int d = 0; d < 2; ++d) {
      const double rate = double(c[0][d] + c[1][d]) / 2.0;
      EXPECT_GT(rate, 10'000.0);
      EXPECT_LT(rate, 15'000.0);
    }
  }
}

TEST(Simulation, AnalyzeRecoversOffsetAndViolation) {
  const auto cfg = short_run(3.0, 8);
  const auto sim = run_simulation(cfg);
  const auto rep = analyze(sim.alice, sim.bob, cfg.analysis);
  EXPECT_NEAR(rep.offset.offset, sim.true_offset, 0.5e-9);
  EXPECT_GT(rep.offset.snr, 100.0);
  EXPECT_GT(rep.chsh.result.S, 2.5);
  EXPECT_EQ(rep.no_signaling.status, SignalingStatus::Ok);
}

TEST(Simulation, DeterministicLhvRespectsBound) {
  auto cfg = short_run(5.0, 9);
  cfg.model = "lhv-deterministic";
  const auto sim = run_simulation(cfg);
  const auto rep = analyze(sim.alice, sim.bob, cfg.analysis);
  EXPECT_LE(rep.chsh.result.S, 2.0 + 3 * rep.chsh.result.sigma_S);
}

TEST(Simulation, StreamAuditPasses) {
  const auto cfg = short_run(1.0, 10);
  const auto sim = run_simulation(cfg);
  const auto rep = analyze(sim.alice, sim.bob, cfg.analysis);
  const auto a = audit_streams(rep.matches.pairs, cfg.geometry, cfg.budget);
  EXPECT_EQ(a.status, AuditStatus::Pass);
  EXPECT_NEAR(a.min_slack, 1.2e-6, 0.05e-6);
}

TEST(Analyze, RejectsMismatchedStations) {
  const auto sim = run_simulation(short_run(0.1, 11));
  EXPECT_THROW(analyze(sim.alice, sim.alice, {}), ConfigError);
  EXPECT_THROW(analyze(sim.bob, sim.alice, {}), ConfigError);
}

TEST(Scan, NoiselessUnitVisibility) {
  auto cfg = short_run(1.0);
  cfg.state.visibility = 1.0;
  cfg.scan.noiseless = true;
  const auto res = run_scan(cfg, 2);
  for (const auto& f : res.fits) EXPECT_NEAR(f.visibility, 1.0, 1e-3);
  EXPECT_NEAR(res.combined_visibility, 1.0, 1e-3);
}

TEST(Scan, NoiselessRequiresQuantumModel) {
  auto cfg = short_run(1.0);
  cfg.model = "lhv-deterministic";
  cfg.scan.noiseless = true;
  EXPECT_THROW(run_scan(cfg, 1), ConfigError);
}

TEST(Report, CsvHeaders) {
  const auto cfg = short_run(0.5, 12);
  const auto sim = run_simulation(cfg);
  const auto rep = analyze(sim.alice, sim.bob, cfg.analysis);
  std::ostringstream t, c, o, n, s;
  write_table_csv(t, rep.matches.table);
  write_chsh_csv(c, rep.chsh);
  write_offset_csv(o, rep.offset);
  write_no_signaling_csv(n, rep.no_signaling);
  write_singles_csv(s, rep);
  EXPECT_EQ(t.str().substr(0, t.str().find('\n')), "alice_setting,bob_setting,alice_detector,bob_detector,count");
  const auto table = t.str();
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 17);
  EXPECT_EQ(c.str().rfind("quantity,", 0), 0u);
  EXPECT_EQ(o.str().rfind("offset_s,", 0), 0u);
  EXPECT_EQ(n.str().rfind("side,", 0), 0u);
  EXPECT_EQ(s.str().rfind("station,", 0), 0u);
}

TEST(Cli, SimulateAnalyzeAuditRoundTrip) {
  const auto dir = scratch("cli");
  ASSERT_EQ(run_cli("simulate --duration 1 --seed 3 --out " + dir.string()), 0);
  for (const char* f : {"alice.tags", "bob.tags", "manifest.json", "oracle_true_offset.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto manifest = json::parse(slurp(dir / "manifest.json"));
  EXPECT_FALSE(manifest.contains("true_offset_s"));
  EXPECT_TRUE(json::parse(slurp(dir / "oracle_true_offset.json")).contains("true_offset_s"));

  // Same seed, byte-identical files.
  const auto again = scratch("cli_again");
  ASSERT_EQ(run_cli("simulate --duration 1 --seed 3 --out " + again.string()), 0);
  EXPECT_EQ(slurp(dir / "alice.tags"), slurp(again / "alice.tags"));
  EXPECT_EQ(slurp(dir / "bob.tags"), slurp(again / "bob.tags"));

  // Analysis works from the two files alone, in a fresh directory.
  const auto out = scratch("cli_analysis");
  fs::copy_file(dir / "alice.tags", out / "a.tags");
  fs::copy_file(dir / "bob.tags", out / "b.tags");
  ASSERT_EQ(run_cli("analyze " + (out / "a.tags").string() + " " + (out / "b.tags").string() + " --out " +
                    (out / "report").string()),
            0);
  EXPECT_EQ(first_line(out / "report" / "coincidences.csv"),
            "alice_setting,bob_setting,alice_detector,bob_detector,count");
  for (const char* f : {"chsh.csv", "offset.csv", "no_signaling.csv", "singles.csv"})
    EXPECT_FALSE(first_line(out / "report" / f).empty()) << f;

  EXPECT_EQ(run_cli("audit --alice " + (dir / "alice.tags").string() + " --bob " + (dir / "bob.tags").string() +
                    " --out " + (out / "audit").string()),
            0);
  EXPECT_EQ(first_line(out / "audit" / "locality.csv"), "light_time_s,measurement_duration_s,slack_s,margin_ratio,pass");

  fs::remove_all(dir);
  fs::remove_all(again);
  fs::remove_all(out);
}

TEST(Cli, ErrorsGiveNonzeroExit) {
  const auto dir = scratch("cli_err");
  EXPECT_NE(run_cli(""), 0);
  EXPECT_NE(run_cli("simulate --model nonsense --out " + dir.string()), 0);
  EXPECT_NE(run_cli("analyze /nonexistent/a.tags /nonexistent/b.tags"), 0);
  std::ofstream(dir / "junk.tags") << "not a tag file";
  EXPECT_NE(run_cli("analyze " + (dir / "junk.tags").string() + " " + (dir / "junk.tags").string()), 0);
  ASSERT_EQ(run_cli("simulate --duration 0.1 --out " + dir.string()), 0);
  // Two copies of Alice's stream: wrong station pair.
  EXPECT_NE(run_cli("analyze " + (dir / "alice.tags").string() + " " + (dir / "alice.tags").string()), 0);
  // A 10 m baseline cannot be space-like separated.
  std::ofstream(dir / "short.json") << R"({"geometry": {"separation": 10}})";
  EXPECT_NE(run_cli("audit --config " + (dir / "short.json").string()), 0);
  fs::remove_all(dir);
}

TEST(Cli, NoiselessScanWritesCsv) {
  const auto dir = scratch("cli_scan");
  ASSERT_EQ(run_cli("scan --noiseless --visibility 1 --threads 2 --out " + dir.string()), 0);
  EXPECT_EQ(first_line(dir / "scan.csv").rfind("point,angle_deg,bias_volts", 0), 0u);
  EXPECT_EQ(first_line(dir / "scan_fit.csv").rfind("curve,", 0), 0u);
  EXPECT_EQ(first_line(dir / "scan_curves.csv").rfind("angle_deg", 0), 0u);
  fs::remove_all(dir);
}
