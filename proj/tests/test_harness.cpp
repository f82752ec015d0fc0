#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rmps/harness.hpp"

using namespace rmps;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("rmps-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Small particle grid that needs no tube: the obstacle margin is fixed and
// only the tube-free modes run.
ScenarioConfig small_config(const std::string& name) {
  ScenarioConfig c = default_config("holonomic");
  c.modes = {ShieldMode::kNone, ShieldMode::kNonrobust};
  c.episode_length = 25;
  c.scenarios = 3;
  c.seeds = {4};
  c.obstacles.margin = 0.1;
  c.out_dir = scratch_dir(name);
  return c;
}

std::vector<std::string> lines_of(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("zero policy without noise stays put, safe and away from the goal") {
  ScenarioConfig c = small_config("zero");
  c.noise_scale = 0.0;
  c.policy = PolicyKind::kZero;
  const auto ctx = prepare_context(c);
  for (ShieldMode m : c.modes) {
    const EpisodeResult r = run_episode(ctx, m, 4, 0);
    CHECK(r.safe);
    CHECK_FALSE(r.goal);
    CHECK_FALSE(r.aborted);
    CHECK(r.steps == c.episode_length);
    CHECK(r.states.size() == static_cast<std::size_t>(r.steps + 1));
    CHECK(r.states.back() == r.states.front());
  }
}

TEST_CASE("episodes are reproducible and scenarios are shared across modes") {
  const ScenarioConfig c = small_config("repro");
  const auto ctx = prepare_context(c);
  const EpisodeResult a = run_episode(ctx, ShieldMode::kNonrobust, 4, 1);
  const EpisodeResult b = run_episode(ctx, ShieldMode::kNonrobust, 4, 1);
  CHECK(a == b);
  const EpisodeResult none = run_episode(ctx, ShieldMode::kNone, 4, 1);
  CHECK(none.states.front() == a.states.front());
  CHECK(none.obstacles.size() == a.obstacles.size());
  for (std::size_t i = 0; i < a.obstacles.size(); ++i) CHECK(none.obstacles[i].center == a.obstacles[i].center);
  const EpisodeResult other = run_episode(ctx, ShieldMode::kNonrobust, 5, 1);
  CHECK(other.states.front() != a.states.front());
}

TEST_CASE("an episode does not depend on the rest of the grid") {
  ScenarioConfig c = small_config("isolation");
  const auto ctx = prepare_context(c);
  const BenchmarkResult grid = run_benchmark(ctx);
  REQUIRE(grid.episodes.size() == 2 * 3);
  c.scenarios = 1;
  c.seeds = {4};
  for (const auto& e : grid.episodes) {
    if (e.scenario == 0) CHECK(e == run_episode(prepare_context(c), e.mode, 4, 0));
  }
}

TEST_CASE("unshielded episodes count every step as learned") {
  const ScenarioConfig c = small_config("none");
  const auto ctx = prepare_context(c);
  const BenchmarkResult res = run_benchmark(ctx);
  const Metrics& none = res.metrics.at(0);
  REQUIRE(none.mode == ShieldMode::kNone);
  CHECK(none.backup_steps == 0);
  CHECK(none.check_cost == 0);
  CHECK(none.learned_fraction() == 1.0);
  for (const auto& e : res.episodes) {
    if (e.mode != ShieldMode::kNone) continue;
    CHECK(e.learned_steps == e.steps);
    for (auto s : e.sources) CHECK(s == DecisionSource::kLearned);
  }
}

TEST_CASE("metrics aggregate per-episode counters") {
  std::vector<EpisodeResult> eps(4);
  for (auto& e : eps) e.environment = "holonomic", e.mode = ShieldMode::kRobust;
  eps[0].safe = true, eps[0].goal = true, eps[0].learned_steps = 3, eps[0].backup_steps = 1;
  eps[1].safe = false, eps[1].goal = false, eps[1].learned_steps = 2;
  eps[2].safe = true, eps[2].goal = false, eps[2].backup_steps = 2;
  eps[3].safe = false, eps[3].aborted = true;
  const Metrics m = aggregate("holonomic", ShieldMode::kRobust, eps);
  CHECK(m.episodes == 4);
  CHECK(m.safety_rate() == 0.5);
  CHECK(m.goal_rate() == 0.25);
  CHECK(m.safe_goal_rate() == 0.5);
  CHECK(m.aborted == 1);
  CHECK(m.learned_fraction() == doctest::Approx(5.0 / 8.0));
  CHECK(m.backup_fraction() == doctest::Approx(3.0 / 8.0));
}

TEST_CASE("csv outputs") {
  const auto dir = scratch_dir("csv");
  write_metrics_csv({}, dir / "empty.csv");
  const auto empty = lines_of(dir / "empty.csv");
  REQUIRE(empty.size() == 1);
  CHECK(empty[0] == "environment,mode,safety_rate,goal_rate,learned_fraction,backup_fraction,episodes");

  const ScenarioConfig c = small_config("csv-run");
  const EpisodeResult e = run_episode(prepare_context(c), ShieldMode::kNonrobust, 4, 2);
  CHECK(trace_file_name(e) == "holonomic_nonrobust-mps_seed4_scenario2.csv");
  write_trace_csv(e, dir / "trace.csv");
  const auto rows = lines_of(dir / "trace.csv");
  CHECK(rows.size() == static_cast<std::size_t>(e.steps + 2));
  CHECK(rows.back().ends_with(",end"));
}

TEST_CASE("config parsing rejects bad input") {
  CHECK_THROWS_AS(parse_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"environment": "boat"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"environment": "holonomic", "modes": ["rmps", "safe"]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"environment": "holonomic", "episode_length": -3})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"environment": "holonomic", "tube": {"delta": 1.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"environment": "cartpole", "env": {"start_low": [0, 0]}})"), ConfigError);
  const ScenarioConfig ok = parse_config(R"({"environment": "nonholonomic", "horizon": 35, "seeds": [9]})");
  CHECK(ok.environment == "nonholonomic");
  CHECK(ok.horizon == 35);
  CHECK(ok.seeds == std::vector<std::uint64_t>{9});
}

TEST_CASE("region scan: linear backup cells are a subset of nonlinear ones") {
  ScenarioConfig c = default_config("cartpole");
  c.scan_resolution = 5;
  c.out_dir = scratch_dir("scan");
  const auto cells = stabilizable_region_scan(c);
  REQUIRE(cells.size() == 25);
  int nmpc = 0;
  for (const auto& cell : cells) {
    if (cell.lmpc_ok) CHECK(cell.nmpc_ok);
    nmpc += cell.nmpc_ok;
    if (cell.theta == 0.0 && cell.omega == 0.0) CHECK(cell.lmpc_ok);
  }
  CHECK(nmpc > 1);
  CHECK_THROWS_AS(stabilizable_region_scan(default_config("holonomic")), ConfigError);
}
