#pragma once

// Scenario configuration, seeded episodes, benchmark aggregation, the
// stabilizable-region scan and CSV output.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rmps/dynamics.hpp"
#include "rmps/policy.hpp"
#include "rmps/shield.hpp"
#include "rmps/tube.hpp"

namespace rmps {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PolicyKind { kDefault, kZero, kExternal };

struct ObstacleSettings {
  bool random = true;
  int count = 5;
  double radius = 0.5;
  // Box for random obstacle centers (position coordinates).
  StateVec region_lo;
  StateVec region_hi;
  std::vector<DiskObstacle> fixed;
  // Extra gap between obstacle edges, starts and the goal on top of twice the
  // particle radius; negative means "use the widest rmps tube position width".
  double margin = -1.0;
};

struct ScenarioConfig {
  std::string environment = "cartpole";  // cartpole | holonomic | nonholonomic
  std::vector<ShieldMode> modes{ShieldMode::kNone, ShieldMode::kNonrobust, ShieldMode::kRobust,
                                ShieldMode::kLinearRobust};
  int episode_length = 300;
  int scenarios = 50;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int horizon = 100;
  // Diagonals of the stage-cost weights Q and R; empty means the defaults
  // (identity Q, R = 0.1 I).
  std::vector<double> q_diag;
  std::vector<double> r_diag;
  // Fraction of the control bounds available to reference plans.
  double plan_control_scale = 0.8;

  TubeMode tube_mode = TubeMode::kPrecomputed;
  long samples = 1500;
  double delta = 0.01;
  std::optional<double> epsilon;  // when set, samples = solve_sample_count(n, epsilon, delta)
  std::uint64_t tube_seed = 7;
  StateVec tube_start;  // start state for tube precomputation

  int invariant_horizon = 200;
  long invariant_samples = 1500;
  std::uint64_t invariant_seed = 1;

  CartPoleParams cartpole;
  ParticleParams particle;
  double noise_scale = 1.0;
  double goal_radius = 0.2;
  StateVec start_lo;
  StateVec start_hi;
  ObstacleSettings obstacles;

  PolicyKind policy = PolicyKind::kDefault;
  std::vector<std::string> policy_command;

  int scan_resolution = 21;
  double scan_cart_speed = 0.0;

  std::filesystem::path out_dir = "out";
  std::filesystem::path tube_cache_dir;  // empty: out_dir / "tubes"
  bool write_traces = true;
  int jobs = 1;
};

// Defaults for one environment (start region, goal, obstacles, horizon).
ScenarioConfig default_config(const std::string& environment);
// Reads a JSON config; keys not present keep the environment's defaults.
// Throws ConfigError on unknown values or invalid numbers.
ScenarioConfig load_config(const std::filesystem::path& path);
ScenarioConfig parse_config(const std::string& json_text);
void validate_config(const ScenarioConfig& config);

// Shared, read-only state for a benchmark grid: per-mode tubes, the
// equilibrium cache and the obstacle margin.
struct BenchmarkContext {
  ScenarioConfig config;
  std::shared_ptr<EquilibriumCache> cache;
  std::map<ShieldMode, Tube> tubes;
  double obstacle_margin = 0.0;
  long samples = 0;
};

BenchmarkContext prepare_context(const ScenarioConfig& config);

// Obstacle-free model for the configured environment.
std::shared_ptr<DynamicsModel> make_model(const ScenarioConfig& config);
BackupConfig backup_config(const ScenarioConfig& config, bool linear);

struct EpisodeResult {
  std::string environment;
  ShieldMode mode = ShieldMode::kNone;
  std::uint64_t seed = 0;
  int scenario = 0;
  bool safe = true;
  bool goal = false;
  bool aborted = false;
  std::string abort_reason;
  int steps = 0;
  int learned_steps = 0;
  int backup_steps = 0;
  long check_cost = 0;
  std::vector<StateVec> states;      // steps + 1
  std::vector<ControlVec> controls;  // steps
  std::vector<DecisionSource> sources;
  std::vector<DiskObstacle> obstacles;

  friend bool operator==(const EpisodeResult&, const EpisodeResult&) = default;
};

// One seeded episode. Scenario draws (start, obstacles) and the noise stream
// depend only on (seed, scenario), so all modes face the same episode.
EpisodeResult run_episode(const BenchmarkContext& context, ShieldMode mode, std::uint64_t seed, int scenario);

struct Metrics {
  std::string environment;
  ShieldMode mode = ShieldMode::kNone;
  long episodes = 0;
  long safe = 0;
  long goal = 0;
  long safe_goal = 0;
  long aborted = 0;
  long learned_steps = 0;
  long backup_steps = 0;
  long check_cost = 0;

  double safety_rate() const;
  double goal_rate() const;
  // Goal rate among episodes that stayed safe.
  double safe_goal_rate() const;
  double learned_fraction() const;
  double backup_fraction() const;
  double mean_check_cost() const;  // rollouts per step
};

Metrics aggregate(const std::string& environment, ShieldMode mode, const std::vector<EpisodeResult>& episodes);

struct BenchmarkResult {
  std::vector<Metrics> metrics;  // one per mode, in config order
  std::vector<EpisodeResult> episodes;
};

BenchmarkResult run_benchmark(const ScenarioConfig& config);
BenchmarkResult run_benchmark(const BenchmarkContext& context);

struct ScanCell {
  double theta = 0.0;
  double omega = 0.0;
  bool nmpc_ok = false;
  bool lmpc_ok = false;
};

// Cart-pole only: which (theta, omega) starts at the fixed cart speed the
// nonlinear and the linear backup can bring into the invariant set.
std::vector<ScanCell> stabilizable_region_scan(const ScenarioConfig& config);

void write_metrics_csv(const std::vector<Metrics>& metrics, const std::filesystem::path& path);
void write_trace_csv(const EpisodeResult& episode, const std::filesystem::path& path);
void write_scan_csv(const std::vector<ScanCell>& cells, const std::filesystem::path& path);
std::string trace_file_name(const EpisodeResult& episode);
// metrics.csv plus traces/ under out_dir.
void emit_outputs(const BenchmarkResult& result, const std::filesystem::path& out_dir, bool traces);

}  // namespace rmps
