#include "rmps/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "rmps/parallel.hpp"

namespace rmps {

namespace {

using nlohmann::json;

StateVec vec(std::initializer_list<double> v) {
  StateVec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) out[i++] = d;
  return out;
}

bool is_particle(const std::string& env) { return env == "holonomic" || env == "nonholonomic"; }

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Config parsing

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

StateVec get_vec(const json& j, const std::string& key) {
  const auto v = get_as<std::vector<double>>(j, key);
  if (v.empty() || v.size() > kMaxStateDim) throw ConfigError("config key '" + key + "': bad vector length");
  StateVec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end() && !it->is_null()) out = get_as<T>(*it, key);
}

void read_vec(const json& obj, const char* key, StateVec& out) {
  if (auto it = obj.find(key); it != obj.end() && !it->is_null()) out = get_vec(*it, key);
}

const json& section(const json& root, const char* key) {
  static const json empty = json::object();
  auto it = root.find(key);
  if (it == root.end() || it->is_null()) return empty;
  if (!it->is_object()) throw ConfigError(std::string("config key '") + key + "' must be an object");
  return *it;
}

// ---------------------------------------------------------------------------
// Scenario sampling

std::vector<DiskObstacle> sample_obstacles(const ScenarioConfig& cfg, double margin, const StateVec& start_pos,
                                           const StateVec& goal, RandomStream& rng) {
  const ObstacleSettings& o = cfg.obstacles;
  if (!o.random) return o.fixed;
  const double gap = 2.0 * cfg.particle.radius + margin;
  std::vector<DiskObstacle> out;
  constexpr int kMaxTries = 10000;
  for (int tries = 0; static_cast<int>(out.size()) < o.count; ++tries) {
    if (tries >= kMaxTries) throw ConfigError("obstacle sampling: cannot place obstacles with the requested clearance");
    StateVec c(2);
    c[0] = rng.uniform(o.region_lo[0], o.region_hi[0]);
    c[1] = rng.uniform(o.region_lo[1], o.region_hi[1]);
    bool ok = (c - goal).norm() >= o.radius + gap && (c - start_pos).norm() >= o.radius + gap;
    for (const auto& other : out) ok = ok && (c - other.center).norm() >= o.radius + other.radius + gap;
    if (ok) out.push_back({c, o.radius});
  }
  return out;
}

StateVec sample_box(const StateVec& lo, const StateVec& hi, RandomStream& rng) {
  StateVec x(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) x[i] = rng.uniform(lo[i], hi[i]);
  return x;
}

bool in_goal(const ScenarioConfig& cfg, const DynamicsModel& model, const StateVec& x) {
  if (cfg.environment == "cartpole") return std::abs(x[0] - cfg.cartpole.x_target) <= cfg.goal_radius;
  return (x.head(2) - model.goal()).norm() <= cfg.goal_radius;
}

std::unique_ptr<Policy> make_policy(const ScenarioConfig& cfg, const std::shared_ptr<const DynamicsModel>& model) {
  switch (cfg.policy) {
    case PolicyKind::kZero:
      return constant_policy(model, ControlVec::Zero(model->control_dim()));
    case PolicyKind::kExternal:
      return external_policy(model, cfg.policy_command);
    case PolicyKind::kDefault:
      break;
  }
  if (auto cp = std::dynamic_pointer_cast<const CartPole>(model)) return aggressive_cartpole_policy(cp);
  if (auto p = std::dynamic_pointer_cast<const ParticleBase>(model)) return greedy_goal_policy(p);
  throw ConfigError("no default policy for environment " + cfg.environment);
}

std::string tube_key(const ScenarioConfig& cfg, const DynamicsModel& model, bool linear, long samples) {
  std::ostringstream os;
  os << model.fingerprint() << "|start=";
  for (Eigen::Index i = 0; i < cfg.tube_start.size(); ++i) os << number(cfg.tube_start[i]) << ',';
  os << "|T=" << cfg.horizon << "|N=" << samples << "|delta=" << number(cfg.delta) << "|seed=" << cfg.tube_seed;
  os << "|Q=";
  for (double q : cfg.q_diag) os << number(q) << ',';
  os << "|R=";
  for (double r : cfg.r_diag) os << number(r) << ',';
  os << "|uscale=" << number(cfg.plan_control_scale) << "|linear=" << linear << "|inv=" << cfg.invariant_horizon
     << ',' << cfg.invariant_samples << ',' << cfg.invariant_seed;
  return os.str();
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw std::runtime_error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

void close_output(std::ofstream& out, const std::filesystem::path& path) {
  out.close();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

// ---------------------------------------------------------------------------

ScenarioConfig default_config(const std::string& environment) {
  ScenarioConfig c;
  c.environment = environment;
  if (environment == "cartpole") {
    c.horizon = 100;
    c.start_lo = vec({-1.8, -0.05, -0.05, -0.05});
    c.start_hi = vec({-0.8, 0.05, 0.05, 0.05});
    c.tube_start = vec({0.0, 0.0, 0.1, 0.0});
    c.obstacles.random = false;
    c.obstacles.count = 0;
  } else if (is_particle(environment)) {
    c.horizon = 30;
    c.particle.goal = vec({3.5, 3.5});
    if (environment == "holonomic") {
      c.start_lo = vec({-4.0, -4.0, 0.0, 0.0});
      c.start_hi = vec({-3.0, -3.0, 0.0, 0.0});
      c.tube_start = vec({0.0, 0.0, 0.7, 0.7});
    } else {
      const double h = std::numbers::pi / 4.0;
      c.start_lo = vec({-4.0, -4.0, 0.0, h - 0.3});
      c.start_hi = vec({-3.0, -3.0, 0.0, h + 0.3});
      c.tube_start = vec({0.0, 0.0, 1.0, 0.0});
    }
    c.obstacles.region_lo = vec({-2.5, -2.5});
    c.obstacles.region_hi = vec({2.5, 2.5});
  } else {
    throw ConfigError("unknown environment: " + environment);
  }
  return c;
}

ScenarioConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be an object");
  std::string env = "cartpole";
  read(root, "environment", env);
  ScenarioConfig c = default_config(env);

  if (auto it = root.find("modes"); it != root.end()) {
    c.modes.clear();
    for (const auto& m : get_as<std::vector<std::string>>(*it, "modes")) {
      try {
        c.modes.push_back(parse_shield_mode(m));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
  }
  read(root, "episode_length", c.episode_length);
  read(root, "scenarios", c.scenarios);
  read(root, "seeds", c.seeds);
  read(root, "horizon", c.horizon);
  read(root, "plan_control_scale", c.plan_control_scale);
  const json& weights = section(root, "weights");
  read(weights, "q_diag", c.q_diag);
  read(weights, "r_diag", c.r_diag);
  read(root, "jobs", c.jobs);

  const json& tube = section(root, "tube");
  if (auto it = tube.find("mode"); it != tube.end()) {
    const auto m = get_as<std::string>(*it, "tube.mode");
    if (m == "precomputed") c.tube_mode = TubeMode::kPrecomputed;
    else if (m == "fresh") c.tube_mode = TubeMode::kFresh;
    else throw ConfigError("tube.mode must be 'fresh' or 'precomputed', got '" + m + "'");
  }
  read(tube, "samples", c.samples);
  read(tube, "delta", c.delta);
  if (auto it = tube.find("epsilon"); it != tube.end() && !it->is_null()) c.epsilon = get_as<double>(*it, "tube.epsilon");
  read(tube, "seed", c.tube_seed);
  read_vec(tube, "start", c.tube_start);

  const json& inv = section(root, "invariant");
  read(inv, "horizon", c.invariant_horizon);
  read(inv, "samples", c.invariant_samples);
  read(inv, "seed", c.invariant_seed);

  const json& e = section(root, "env");
  read(e, "noise_scale", c.noise_scale);
  read(e, "goal_radius", c.goal_radius);
  read_vec(e, "start_low", c.start_lo);
  read_vec(e, "start_high", c.start_hi);
  read(e, "x_target", c.cartpole.x_target);
  read(e, "dt", env == "cartpole" ? c.cartpole.dt : c.particle.dt);
  if (auto it = e.find("goal"); it != e.end()) c.particle.goal = get_vec(*it, "env.goal");
  const json& obs = section(e, "obstacles");
  if (auto it = obs.find("placement"); it != obs.end()) {
    const auto p = get_as<std::string>(*it, "env.obstacles.placement");
    if (p == "random") c.obstacles.random = true;
    else if (p == "fixed") c.obstacles.random = false;
    else throw ConfigError("env.obstacles.placement must be 'random' or 'fixed', got '" + p + "'");
  }
  read(obs, "count", c.obstacles.count);
  read(obs, "radius", c.obstacles.radius);
  read(obs, "margin", c.obstacles.margin);
  read_vec(obs, "region_low", c.obstacles.region_lo);
  read_vec(obs, "region_high", c.obstacles.region_hi);
  if (auto it = obs.find("list"); it != obs.end()) {
    c.obstacles.fixed.clear();
    for (const auto& item : *it) {
      if (!item.is_object() || !item.contains("center") || !item.contains("radius")) {
        throw ConfigError("env.obstacles.list entries need 'center' and 'radius'");
      }
      c.obstacles.fixed.push_back(
          {get_vec(item["center"], "env.obstacles.list.center"), get_as<double>(item["radius"], "radius")});
    }
  }

  const json& pol = section(root, "policy");
  if (auto it = pol.find("kind"); it != pol.end()) {
    const auto k = get_as<std::string>(*it, "policy.kind");
    if (k == "default") c.policy = PolicyKind::kDefault;
    else if (k == "zero") c.policy = PolicyKind::kZero;
    else if (k == "external") c.policy = PolicyKind::kExternal;
    else throw ConfigError("policy.kind must be default, zero or external, got '" + k + "'");
  }
  read(pol, "command", c.policy_command);

  const json& scan = section(root, "scan");
  read(scan, "resolution", c.scan_resolution);
  read(scan, "cart_speed", c.scan_cart_speed);

  const json& out = section(root, "output");
  if (auto it = out.find("dir"); it != out.end()) c.out_dir = get_as<std::string>(*it, "output.dir");
  if (auto it = out.find("tube_cache"); it != out.end()) c.tube_cache_dir = get_as<std::string>(*it, "output.tube_cache");
  read(out, "traces", c.write_traces);

  validate_config(c);
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate_config(const ScenarioConfig& c) {
  auto positive = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string(what) + " must be positive");
  };
  if (c.environment != "cartpole" && !is_particle(c.environment)) {
    throw ConfigError("unknown environment: " + c.environment);
  }
  positive(c.episode_length > 0, "episode_length");
  positive(c.scenarios > 0, "scenarios");
  positive(!c.seeds.empty(), "number of seeds");
  positive(c.horizon > 0, "horizon");
  positive(c.plan_control_scale > 0.0 && c.plan_control_scale <= 1.0, "plan_control_scale (and at most 1)");
  positive(c.samples > 0, "tube.samples");
  positive(c.delta > 0.0 && c.delta < 1.0, "tube.delta (and below 1)");
  if (c.epsilon) positive(*c.epsilon > 0.0 && *c.epsilon < 1.0, "tube.epsilon (and below 1)");
  positive(c.invariant_horizon > 0, "invariant.horizon");
  positive(c.invariant_samples > 0, "invariant.samples");
  positive(c.noise_scale >= 0.0, "env.noise_scale");
  positive(c.goal_radius > 0.0, "env.goal_radius");
  positive(c.scan_resolution > 1, "scan.resolution");
  positive(c.jobs > 0, "jobs");
  positive(c.modes.size() > 0, "number of modes");
  const int n = 4;
  if (c.start_lo.size() != n || c.start_hi.size() != n) throw ConfigError("start region must have 4 entries");
  if ((c.start_hi - c.start_lo).minCoeff() < 0.0) throw ConfigError("start_high must be >= start_low");
  if (c.tube_start.size() != n) throw ConfigError("tube.start must have 4 entries");
  if (is_particle(c.environment)) {
    if (c.particle.goal.size() != 2) throw ConfigError("env.goal must have 2 entries");
    if (c.obstacles.random) {
      if (c.obstacles.count < 0) throw ConfigError("env.obstacles.count must be non-negative");
      positive(c.obstacles.radius > 0.0, "env.obstacles.radius");
      if (c.obstacles.region_lo.size() != 2 || c.obstacles.region_hi.size() != 2) {
        throw ConfigError("obstacle region must be 2-D");
      }
    }
  }
  const std::size_t m = c.environment == "cartpole" ? 1 : 2;
  if (!c.q_diag.empty() && c.q_diag.size() != 4) throw ConfigError("weights.q_diag must have 4 entries");
  if (!c.r_diag.empty() && c.r_diag.size() != m) throw ConfigError("weights.r_diag has the wrong length");
  for (double q : c.q_diag) positive(q > 0.0, "weights.q_diag entries");
  for (double r : c.r_diag) positive(r > 0.0, "weights.r_diag entries");
  if (c.policy == PolicyKind::kExternal && c.policy_command.empty()) {
    throw ConfigError("policy.command is required for external policies");
  }
}

std::shared_ptr<DynamicsModel> make_model(const ScenarioConfig& c) {
  if (c.environment == "cartpole") {
    CartPoleParams p = c.cartpole;
    p.noise *= c.noise_scale;
    auto m = std::make_shared<CartPole>(p);
    m->set_goal(vec({p.x_target}));
    return m;
  }
  ParticleParams p = c.particle;
  p.noise *= c.noise_scale;
  std::shared_ptr<DynamicsModel> m;
  if (c.environment == "holonomic") m = std::make_shared<HolonomicParticle>(p);
  else m = std::make_shared<NonholonomicParticle>(p);
  m->set_goal(p.goal);
  return m;
}

BackupConfig backup_config(const ScenarioConfig& c, bool linear) {
  BackupConfig b;
  b.horizon = c.horizon;
  const int m = c.environment == "cartpole" ? 1 : 2;
  b.weights = CostWeights::identity(4, m);
  if (!c.q_diag.empty() || !c.r_diag.empty()) {
    StateMat Q = b.weights.Q;
    ControlMat R = b.weights.R;
    for (std::size_t i = 0; i < c.q_diag.size(); ++i) Q(i, i) = c.q_diag[i];
    for (std::size_t i = 0; i < c.r_diag.size(); ++i) R(i, i) = c.r_diag[i];
    b.weights = CostWeights(Q, R);
  }
  b.linear = linear;
  b.solver.control_scale = c.plan_control_scale;
  b.invariant_horizon = c.invariant_horizon;
  b.invariant_samples = c.invariant_samples;
  b.seed = c.invariant_seed;
  return b;
}

BenchmarkContext prepare_context(const ScenarioConfig& config) {
  validate_config(config);
  BenchmarkContext ctx;
  ctx.config = config;
  ctx.cache = std::make_shared<EquilibriumCache>();
  auto model = make_model(config);
  ctx.samples = config.epsilon ? solve_sample_count(model->state_dim(), *config.epsilon, config.delta) : config.samples;

  const std::filesystem::path dir = config.tube_cache_dir.empty() ? config.out_dir / "tubes" : config.tube_cache_dir;
  TubeCache tubes(dir);
  TubeOptions opts;
  opts.samples = ctx.samples;
  opts.delta = config.delta;
  opts.jobs = config.jobs;
  auto tube_for = [&](bool linear) {
    const std::string key = tube_key(config, *model, linear, ctx.samples);
    return tubes.get_or_compute(key, model->fingerprint(), [&] {
      return precompute_tube(*model, config.tube_start, backup_config(config, linear), config.horizon,
                             config.tube_seed, opts);
    });
  };

  for (ShieldMode m : config.modes) {
    if (m == ShieldMode::kRobust) ctx.tubes.emplace(m, tube_for(false));
    if (m == ShieldMode::kLinearRobust) ctx.tubes.emplace(m, tube_for(true));
  }

  if (is_particle(config.environment) && config.obstacles.random) {
    if (config.obstacles.margin >= 0.0) {
      ctx.obstacle_margin = config.obstacles.margin;
    } else {
      // Layouts must not depend on which modes run, so the margin always
      // comes from the (cached) rmps tube.
      double w = 0.0;
      for (const auto& b : tube_for(false).boxes) w = std::max(w, b.widths().head(2).maxCoeff());
      ctx.obstacle_margin = w;
    }
  }
  return ctx;
}

// ---------------------------------------------------------------------------

EpisodeResult run_episode(const BenchmarkContext& ctx, ShieldMode mode, std::uint64_t seed, int scenario) {
  const ScenarioConfig& cfg = ctx.config;
  EpisodeResult r;
  r.environment = cfg.environment;
  r.mode = mode;
  r.seed = seed;
  r.scenario = scenario;

  const auto s = static_cast<std::uint64_t>(scenario);
  RandomStream scenario_rng(mix_seed(seed, 2 * s));
  RandomStream noise_rng(mix_seed(seed, 2 * s + 1));

  auto model = make_model(cfg);
  StateVec x = sample_box(cfg.start_lo, cfg.start_hi, scenario_rng);
  if (auto* p = dynamic_cast<ParticleBase*>(model.get())) {
    if (cfg.obstacles.random || !cfg.obstacles.fixed.empty()) {
      r.obstacles = sample_obstacles(cfg, ctx.obstacle_margin, x.head(2), model->goal(), scenario_rng);
      p->set_obstacles(r.obstacles);
    }
  }
  std::shared_ptr<const DynamicsModel> plant = model;

  std::unique_ptr<Shield> shield;
  if (mode != ShieldMode::kNone) {
    const bool linear = mode == ShieldMode::kLinearRobust;
    std::shared_ptr<TubeProvider> tubes;
    if (mode == ShieldMode::kNonrobust) {
      tubes = std::make_shared<ZeroTubeProvider>(plant->state_dim(), cfg.horizon);
    } else {
      const Tube& pre = ctx.tubes.at(mode);
      std::unique_ptr<TubeProvider> base;
      if (cfg.tube_mode == TubeMode::kFresh) {
        TubeOptions opts;
        opts.samples = ctx.samples;
        opts.delta = cfg.delta;
        base = std::make_unique<FreshTubeProvider>(pre, opts, mix_seed(seed, 2 * s + 2));
      } else {
        base = std::make_unique<PrecomputedTubeProvider>(pre, cfg.tube_start);
      }
      if (linear) tubes = std::make_shared<LinearMismatchTubeProvider>(std::move(base));
      else tubes = std::move(base);
    }
    auto checker = std::make_shared<RecoverabilityChecker>(plant, backup_config(cfg, linear), tubes, ctx.cache);
    shield = std::make_unique<Shield>(checker);
  }

  r.states.push_back(x);
  r.safe = plant->safe_set().contains(x);
  if (!r.safe) return r;
  try {
    auto policy = make_policy(cfg, plant);
    for (int k = 0; k < cfg.episode_length; ++k) {
      const ControlVec learned = policy->act(x);
      ControlVec u = learned;
      DecisionSource src = DecisionSource::kLearned;
      if (shield) {
        const ShieldDecision d = shield->act(x, learned);
        u = d.action;
        src = d.source;
        r.check_cost += d.check_cost;
      }
      if (src == DecisionSource::kLearned) ++r.learned_steps;
      else ++r.backup_steps;
      x = step_stochastic(*plant, x, u, noise_rng);
      r.controls.push_back(u);
      r.sources.push_back(src);
      r.states.push_back(x);
      ++r.steps;
      if (!plant->safe_set().contains(x)) {
        r.safe = false;
        break;
      }
      if (in_goal(cfg, *plant, x)) {
        r.goal = true;
        break;
      }
    }
  } catch (const std::exception& e) {
    r.aborted = true;
    r.safe = false;
    r.abort_reason = e.what();
  }
  return r;
}

double Metrics::safety_rate() const { return episodes ? static_cast<double>(safe) / episodes : 0.0; }
double Metrics::goal_rate() const { return episodes ? static_cast<double>(goal) / episodes : 0.0; }
double Metrics::safe_goal_rate() const { return safe ? static_cast<double>(safe_goal) / safe : 0.0; }
double Metrics::learned_fraction() const {
  const long total = learned_steps + backup_steps;
  return total ? static_cast<double>(learned_steps) / total : 1.0;
}
double Metrics::backup_fraction() const { return 1.0 - learned_fraction(); }
double Metrics::mean_check_cost() const {
  const long total = learned_steps + backup_steps;
  return total ? static_cast<double>(check_cost) / total : 0.0;
}

Metrics aggregate(const std::string& environment, ShieldMode mode, const std::vector<EpisodeResult>& episodes) {
  Metrics m;
  m.environment = environment;
  m.mode = mode;
  for (const auto& e : episodes) {
    if (e.mode != mode || e.environment != environment) continue;
    ++m.episodes;
    m.safe += e.safe;
    m.goal += e.goal;
    m.safe_goal += e.safe && e.goal;
    m.aborted += e.aborted;
    m.learned_steps += e.learned_steps;
    m.backup_steps += e.backup_steps;
    m.check_cost += e.check_cost;
  }
  return m;
}

BenchmarkResult run_benchmark(const ScenarioConfig& config) { return run_benchmark(prepare_context(config)); }

BenchmarkResult run_benchmark(const BenchmarkContext& ctx) {
  const ScenarioConfig& cfg = ctx.config;
  struct Job {
    ShieldMode mode;
    std::uint64_t seed;
    int scenario;
  };
  std::vector<Job> jobs;
  for (ShieldMode m : cfg.modes) {
    for (std::uint64_t seed : cfg.seeds) {
      for (int s = 0; s < cfg.scenarios; ++s) jobs.push_back({m, seed, s});
    }
  }
  BenchmarkResult result;
  result.episodes.resize(jobs.size());
  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t i) {
    result.episodes[i] = run_episode(ctx, jobs[i].mode, jobs[i].seed, jobs[i].scenario);
  });
  for (ShieldMode m : cfg.modes) result.metrics.push_back(aggregate(cfg.environment, m, result.episodes));
  return result;
}

// ---------------------------------------------------------------------------

std::vector<ScanCell> stabilizable_region_scan(const ScenarioConfig& config) {
  if (config.environment != "cartpole") throw ConfigError("the region scan needs the cartpole environment");
  validate_config(config);
  // The configured noise only shapes the invariant sets here; checks use the
  // zero tube and the closed-loop runs below use the nominal dynamics.
  std::shared_ptr<const DynamicsModel> model = make_model(config);
  auto cache = std::make_shared<EquilibriumCache>();
  const int T = config.horizon;

  auto checker_for = [&](bool linear) {
    std::unique_ptr<TubeProvider> zero = std::make_unique<ZeroTubeProvider>(model->state_dim(), T);
    std::shared_ptr<TubeProvider> tubes;
    if (linear) tubes = std::make_shared<LinearMismatchTubeProvider>(std::move(zero));
    else tubes = std::move(zero);
    BackupConfig b = backup_config(config, linear);
    return RecoverabilityChecker(model, b, tubes, cache);
  };
  RecoverabilityChecker nmpc = checker_for(false);
  RecoverabilityChecker lmpc = checker_for(true);

  // Certified reference plus a noise-free closed-loop run on the true plant
  // that stays safe and ends inside the invariant box.
  auto reaches = [&](RecoverabilityChecker& checker, const StateVec& x0) {
    RecoverabilityCheck c = checker.check(x0);
    if (!c.report.recoverable || !c.session) return false;
    BackupSession session = c.session->fresh_copy();
    StateVec x = x0;
    for (int t = 0; t < T; ++t) {
      x = model->f(x, session.act(x));
      if (!x.allFinite() || !model->safe_set().contains(x)) return false;
    }
    return session.invariant().box.contains(x - session.equilibrium().x);
  };

  const int n = config.scan_resolution;
  std::vector<ScanCell> cells(static_cast<std::size_t>(n) * n);
  parallel_for(cells.size(), config.jobs, [&](std::size_t idx) {
    const int i = static_cast<int>(idx) / n;
    const int j = static_cast<int>(idx) % n;
    ScanCell& c = cells[idx];
    c.theta = -0.2 + 0.4 * i / (n - 1);
    c.omega = -1.0 + 2.0 * j / (n - 1);
    StateVec x(4);
    x << 0.0, config.scan_cart_speed, c.theta, c.omega;
    c.nmpc_ok = reaches(nmpc, x);
    c.lmpc_ok = reaches(lmpc, x);
  });
  return cells;
}

// ---------------------------------------------------------------------------

void write_metrics_csv(const std::vector<Metrics>& metrics, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << "environment,mode,safety_rate,goal_rate,learned_fraction,backup_fraction,episodes\n";
  for (const auto& m : metrics) {
    out << m.environment << ',' << shield_mode_name(m.mode) << ',' << number(m.safety_rate()) << ','
        << number(m.goal_rate()) << ',' << number(m.learned_fraction()) << ',' << number(m.backup_fraction()) << ','
        << m.episodes << '\n';
  }
  close_output(out, path);
}

void write_trace_csv(const EpisodeResult& e, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  const Eigen::Index nx = e.states.empty() ? 0 : e.states.front().size();
  const Eigen::Index nu = e.controls.empty() ? 0 : e.controls.front().size();
  out << "step";
  for (Eigen::Index i = 0; i < nx; ++i) out << ",x" << i;
  for (Eigen::Index i = 0; i < nu; ++i) out << ",u" << i;
  out << ",source\n";
  for (std::size_t k = 0; k < e.states.size(); ++k) {
    out << k;
    for (Eigen::Index i = 0; i < nx; ++i) out << ',' << number(e.states[k][i]);
    if (k < e.controls.size()) {
      for (Eigen::Index i = 0; i < nu; ++i) out << ',' << number(e.controls[k][i]);
      out << ',' << decision_source_name(e.sources[k]) << '\n';
    } else {
      for (Eigen::Index i = 0; i < nu; ++i) out << ',';
      out << ",end\n";
    }
  }
  close_output(out, path);
}

void write_scan_csv(const std::vector<ScanCell>& cells, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << "theta,omega,nmpc_ok,lmpc_ok\n";
  for (const auto& c : cells) {
    out << number(c.theta) << ',' << number(c.omega) << ',' << int(c.nmpc_ok) << ',' << int(c.lmpc_ok) << '\n';
  }
  close_output(out, path);
}

std::string trace_file_name(const EpisodeResult& e) {
  return e.environment + "_" + shield_mode_name(e.mode) + "_seed" + std::to_string(e.seed) + "_scenario" +
         std::to_string(e.scenario) + ".csv";
}

void emit_outputs(const BenchmarkResult& result, const std::filesystem::path& out_dir, bool traces) {
  write_metrics_csv(result.metrics, out_dir / "metrics.csv");
  if (!traces) return;
  for (const auto& e : result.episodes) write_trace_csv(e, out_dir / "traces" / trace_file_name(e));
}

}  // namespace rmps
