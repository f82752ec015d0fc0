// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Run from the build directory; outputs go to ./acceptance.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rmps/geometry.hpp"
#include "rmps/harness.hpp"
#include "rmps/lqr.hpp"
#include "rmps/policy.hpp"
#include "rmps/shield.hpp"
#include "rmps/tube.hpp"

using namespace rmps;
namespace fs = std::filesystem;

namespace {

// Tolerances and sizes, fixed here rather than read from any config.
constexpr double kCoverageLevel = 0.8;          // 1 - eps for eps = 0.2
constexpr double kCoveragePassFraction = 0.95;
constexpr int kCoverageTrials = 200;
constexpr long kCoverageHoldout = 10000;
constexpr double kEpsilonLo = 0.150, kEpsilonHi = 0.162;
constexpr double kGoldenTol = 1e-9;
constexpr double kRiccatiResidualTol = 1e-8;
constexpr double kRmpsSafetyMin = 0.98;
constexpr double kNoneSafetyMax = 0.8;
constexpr double kHolonomicGoalAgreement = 0.05;
constexpr double kGoalDropLo = 0.05, kGoalDropHi = 0.35;
constexpr double kNmpcExtraCells = 0.10;
constexpr int kInvarianceStates = 50;
constexpr double kInvarianceRate = 0.95;
constexpr int kGeometryInstances = 10000;
constexpr double kGeometrySlack = 1e-9;

const fs::path kSourceDir = RMPS_SOURCE_DIR;
const fs::path kWorkDir = "acceptance";

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail, double seconds) {
  std::printf("%s %2d %-28s %s (%.1fs)\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++failures;
}

struct Result {
  bool pass = false;
  std::string detail;
};

void run(int id, const std::string& name, const std::function<Result()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Result r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(id, name, r.pass, r.detail, s);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

StateVec vec(std::initializer_list<double> v) {
  StateVec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

int jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

ScenarioConfig environment_config(const std::string& env) {
  ScenarioConfig c = load_config(kSourceDir / "configs" / (env + ".json"));
  c.out_dir = kWorkDir / env;
  c.tube_cache_dir = kWorkDir / "tubes";
  c.jobs = jobs();
  return c;
}

// ---------------------------------------------------------------------------

Result lemma_coverage() {
  const double eps = 1.0 - kCoverageLevel;
  const CoverageStudy s = box_coverage_study(2, eps, 0.05, kCoverageTrials, kCoverageHoldout, 2024);
  return {s.pass_fraction() >= kCoveragePassFraction,
          fmt("N=%ld passing %d/%d (%.3f) min coverage %.4f", s.samples, s.passing, s.trials, s.pass_fraction(),
              s.min_coverage)};
}

Result sample_bound() {
  const double e = epsilon_from_samples(4, 1500, 0.01);
  bool ok = e >= kEpsilonLo && e <= kEpsilonHi;
  int grid = 0, held = 0;
  for (int n : {1, 2, 3, 4, 6}) {
    for (double eps : {0.3, 0.2, 0.1, 0.05}) {
      const double delta = 0.01;
      const long N = solve_sample_count(n, eps, delta);
      ++grid;
      // N eps^2 >= n ln(2eN/n) + ln(4/delta), evaluated here independently.
      const double rhs = n * std::log(2.0 * M_E * static_cast<double>(N) / n) + std::log(4.0 / delta);
      if (static_cast<double>(N) * eps * eps >= rhs) ++held;
    }
  }
  ok = ok && held == grid;
  return {ok, fmt("eps(4,1500,0.01)=%.5f plug-back %d/%d", e, held, grid)};
}

Result riccati_oracle() {
  StateMat one = StateMat::Ones(1, 1);
  const LqrSolution s = solve_dare(one, InputMat::Ones(1, 1), one, ControlMat::Ones(1, 1));
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  const double gerr = std::abs(s.P(0, 0) - golden);

  double worst = 0.0;
  auto residual = [&](const DynamicsModel& m, const Equilibrium& eq, const CostWeights& w) {
    const Linearization lin = linearize(m, eq);
    const LqrSolution l = solve_dare(lin.A, lin.B, w.Q, w.R);
    worst = std::max(worst, riccati_residual(l, lin.A, lin.B, w.Q, w.R));
  };
  CartPole cp;
  residual(cp, cp.equilibrium(StateVec::Zero(4)), CostWeights::identity(4, 1));
  HolonomicParticle hp;
  residual(hp, hp.equilibrium(vec({1, -2, 0, 0})), CostWeights::identity(4, 2));
  return {gerr <= kGoldenTol && worst <= kRiccatiResidualTol, fmt("|P-phi|=%.2e max residual %.2e", gerr, worst)};
}

Result geometry_oracle() {
  RandomStream rng(4242);
  long violations = 0, contained = 0, excluded = 0;
  for (int k = 0; k < kGeometryInstances; ++k) {
    const int n = 1 + static_cast<int>(rng.uniform01() * 4);
    StateVec lo(n), hi(n), mlo(n), mhi(n);
    for (int d = 0; d < n; ++d) {
      const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
      lo[d] = std::min(a, b), hi[d] = std::max(a, b);
      const double c = rng.uniform(-0.6, 0.6), e = rng.uniform(-0.6, 0.6);
      mlo[d] = std::min(c, e), mhi[d] = std::max(c, e);
    }
    const Box outer(lo, hi), margin(mlo, mhi);
    const auto eroded = erode_box(outer, margin);
    const bool feasible = ((hi - lo).array() >= (mhi - mlo).array()).all();
    if (eroded.has_value() != feasible) {
      ++violations;
      continue;
    }
    // Every corner of c + margin must lie in outer exactly when c is in the eroded box.
    for (int s = 0; s < 4; ++s) {
      StateVec c(n);
      for (int d = 0; d < n; ++d) c[d] = rng.uniform(lo[d] - mhi[d] - 0.3, hi[d] - mlo[d] + 0.3);
      bool all_in = true;
      for (int corner = 0; corner < (1 << n); ++corner) {
        StateVec p = c;
        for (int d = 0; d < n; ++d) p[d] += (corner >> d & 1) ? mhi[d] : mlo[d];
        for (int d = 0; d < n; ++d) {
          if (p[d] < lo[d] - kGeometrySlack || p[d] > hi[d] + kGeometrySlack) all_in = false;
        }
      }
      const bool in = eroded && eroded->contains(c);
      if (in) ++contained;
      else ++excluded;
      if (in && !all_in) ++violations;
      if (!in && all_in && eroded) {
        // Allowed only within rounding of the eroded boundary.
        bool near = false;
        for (int d = 0; d < n; ++d) {
          near |= std::abs(c[d] - eroded->lo()[d]) <= 2 * kGeometrySlack || std::abs(c[d] - eroded->hi()[d]) <= 2 * kGeometrySlack;
        }
        if (!near) ++violations;
      }
    }

    // Safe sets in a 4-D state with a 2-D position: c in the eroded set must
    // keep every sampled translate c + m safe.
    SafeSet safe(4, {0, 1});
    const int nh = 1 + static_cast<int>(rng.uniform01() * 3);
    for (int h = 0; h < nh; ++h) {
      StateVec a = StateVec::Zero(4);
      for (int d = 0; d < 4; ++d) a[d] = rng.uniform(-1, 1);
      safe.add_halfspace(a, rng.uniform(0.5, 3));
    }
    const int no = static_cast<int>(rng.uniform01() * 3);
    for (int o = 0; o < no; ++o) safe.add_obstacle(vec({rng.uniform(-2, 2), rng.uniform(-2, 2)}), rng.uniform(0.1, 0.8));
    StateVec h4(4);
    for (int d = 0; d < 4; ++d) h4[d] = rng.uniform(0, 0.4);
    const Box m4 = Box::symmetric(h4);
    const SafeSet inner = erode_safe_set(safe, m4);
    for (int s = 0; s < 4; ++s) {
      StateVec c(4);
      for (int d = 0; d < 4; ++d) c[d] = rng.uniform(-3, 3);
      if (!inner.contains(c)) continue;
      ++contained;
      for (int corner = 0; corner < 16 + 16; ++corner) {
        StateVec p = c;
        for (int d = 0; d < 4; ++d) {
          p[d] += corner < 16 ? ((corner >> d & 1) ? h4[d] : -h4[d]) : rng.uniform(-h4[d], h4[d]);
        }
        if (safe.max_violation(p) > kGeometrySlack) {
          ++violations;
          break;
        }
      }
    }
  }
  return {violations == 0 && contained > 0 && excluded > 0,
          fmt("%d instances, %ld inside / %ld outside samples, %ld violations", kGeometryInstances, contained, excluded,
              violations)};
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> files_under(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

Result determinism() {
  ScenarioConfig c = default_config("holonomic");
  c.modes = {ShieldMode::kNone, ShieldMode::kRobust};
  c.scenarios = 2;
  c.seeds = {3};
  c.episode_length = 40;
  c.samples = 150;
  c.invariant_samples = 300;
  c.jobs = jobs();
  std::vector<std::map<std::string, std::string>> runs;
  for (const char* tag : {"a", "b"}) {
    const fs::path dir = kWorkDir / (std::string("determinism-") + tag);
    fs::remove_all(dir);
    c.out_dir = dir;
    c.tube_cache_dir = dir / "tubes";
    emit_outputs(run_benchmark(c), dir, false);
    runs.push_back(files_under(dir));
  }
  const bool has_metrics = runs[0].count("metrics.csv") == 1;
  long tube_files = 0;
  for (const auto& [name, _] : runs[0]) tube_files += name.starts_with("tubes");
  return {has_metrics && tube_files > 0 && runs[0] == runs[1],
          fmt("%zu files compared (%ld tube files), identical: %s", runs[0].size(), tube_files,
              runs[0] == runs[1] ? "yes" : "no")};
}

// ---------------------------------------------------------------------------

struct EnvRun {
  std::map<ShieldMode, Metrics> by_mode;
  const Metrics& operator[](ShieldMode m) const { return by_mode.at(m); }
};

EnvRun benchmark(const std::string& env) {
  const auto start = std::chrono::steady_clock::now();
  const ScenarioConfig c = environment_config(env);
  const BenchmarkResult res = run_benchmark(c);
  emit_outputs(res, c.out_dir, false);
  EnvRun out;
  for (const auto& m : res.metrics) out.by_mode[m.mode] = m;
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& m : res.metrics) {
    std::printf("     %-13s %-14s safety %.3f goal %.3f safe-goal %.3f learned %.3f backup %.3f aborted %ld\n",
                env.c_str(), shield_mode_name(m.mode), m.safety_rate(), m.goal_rate(), m.safe_goal_rate(),
                m.learned_fraction(), m.backup_fraction(), m.aborted);
  }
  std::printf("     %s grid took %.0fs\n", env.c_str(), s);
  std::fflush(stdout);
  return out;
}

Result invariance() {
  const ScenarioConfig c = environment_config("cartpole");
  const BenchmarkContext ctx = prepare_context(c);
  auto model = make_model(c);
  auto checker = std::make_shared<RecoverabilityChecker>(
      model, backup_config(c, false), std::make_shared<PrecomputedTubeProvider>(ctx.tubes.at(ShieldMode::kRobust), c.tube_start),
      ctx.cache);
  auto policy = aggressive_cartpole_policy(std::static_pointer_cast<const CartPole>(model));
  RandomStream rng(31337);
  int certified = 0, still = 0, tried = 0;
  while (certified < kInvarianceStates && tried < 5000) {
    ++tried;
    const StateVec x = vec({rng.uniform(-1.8, 1.8), rng.uniform(-0.5, 0.5), rng.uniform(-0.1, 0.1),
                            rng.uniform(-0.5, 0.5)});
    if (!checker->check(x).report.recoverable) continue;
    ++certified;
    Shield shield(checker);
    const ShieldDecision d = shield.act(x, policy->act(x));
    const StateVec next = step_stochastic(*model, x, d.action, rng);
    if (checker->check(next).report.recoverable) ++still;
  }
  const double rate = certified ? static_cast<double>(still) / certified : 0.0;
  return {certified == kInvarianceStates && rate >= kInvarianceRate,
          fmt("%d/%d certified states stay recoverable (%.3f), %d candidates", still, certified, rate, tried)};
}

Result region_inclusion() {
  ScenarioConfig c = environment_config("cartpole");
  const auto cells = stabilizable_region_scan(c);
  write_scan_csv(cells, kWorkDir / "cartpole" / "scan.csv");
  long nmpc = 0, lmpc = 0, outside = 0;
  for (const auto& cell : cells) {
    nmpc += cell.nmpc_ok;
    lmpc += cell.lmpc_ok;
    outside += cell.lmpc_ok && !cell.nmpc_ok;
  }
  const bool ok = outside == 0 && static_cast<double>(nmpc) >= (1.0 + kNmpcExtraCells) * static_cast<double>(lmpc) &&
                  nmpc > lmpc;
  return {ok, fmt("%zu cells: nmpc %ld lmpc %ld, lmpc-only %ld", cells.size(), nmpc, lmpc, outside)};
}

}  // namespace

int main() {
  fs::create_directories(kWorkDir);
  std::printf("acceptance: %d worker threads, outputs under %s\n", jobs(), fs::absolute(kWorkDir).c_str());

  run(1, "box-coverage", lemma_coverage);
  run(2, "sample-bound", sample_bound);
  run(3, "riccati-oracle", riccati_oracle);
  run(10, "geometry-duality", geometry_oracle);
  run(9, "determinism", determinism);

  std::map<std::string, EnvRun> grid;
  bool grid_ok = true;
  for (const char* env : {"cartpole", "holonomic", "nonholonomic"}) {
    try {
      grid[env] = benchmark(env);
    } catch (const std::exception& e) {
      std::printf("     %s benchmark failed: %s\n", env, e.what());
      grid_ok = false;
    }
  }

  run(4, "safety-ordering", [&]() -> Result {
    if (!grid_ok) return {false, "benchmark did not complete"};
    bool ok = true;
    std::string detail;
    for (const auto& [env, r] : grid) {
      const Metrics &none = r[ShieldMode::kNone], &nr = r[ShieldMode::kNonrobust], &rm = r[ShieldMode::kRobust];
      const bool env_ok = rm.safety_rate() >= kRmpsSafetyMin && none.safety_rate() <= kNoneSafetyMax &&
                          nr.safety_rate() > none.safety_rate() && nr.safety_rate() < rm.safety_rate() &&
                          nr.safe < nr.episodes;
      ok = ok && env_ok;
      detail += fmt("%s none %.3f nonrobust %.3f rmps %.3f%s; ", env.c_str(), none.safety_rate(), nr.safety_rate(),
                    rm.safety_rate(), env_ok ? "" : " [x]");
    }
    return {ok, detail};
  });

  run(5, "goal-ordering", [&]() -> Result {
    if (!grid_ok) return {false, "benchmark did not complete"};
    const auto& cp = grid["cartpole"];
    const auto& hp = grid["holonomic"];
    const auto& np = grid["nonholonomic"];
    const bool cp_ok = cp[ShieldMode::kRobust].goal_rate() >= cp[ShieldMode::kLinearRobust].goal_rate();
    const bool np_ok = np[ShieldMode::kRobust].goal_rate() >= np[ShieldMode::kLinearRobust].goal_rate();
    const double hp_gap = std::abs(hp[ShieldMode::kRobust].goal_rate() - hp[ShieldMode::kLinearRobust].goal_rate());
    const double drop = np[ShieldMode::kNone].safe_goal_rate() - np[ShieldMode::kRobust].goal_rate();
    const bool drop_ok = drop >= kGoalDropLo && drop <= kGoalDropHi;
    return {cp_ok && np_ok && hp_gap <= kHolonomicGoalAgreement && drop_ok,
            fmt("cartpole rmps %.3f >= lrmps %.3f%s; nonholonomic rmps %.3f >= lrmps %.3f%s; holonomic gap %.3f%s; "
                "nonholonomic drop %.3f (%.3f -> %.3f)%s",
                cp[ShieldMode::kRobust].goal_rate(), cp[ShieldMode::kLinearRobust].goal_rate(), cp_ok ? "" : " [x]",
                np[ShieldMode::kRobust].goal_rate(), np[ShieldMode::kLinearRobust].goal_rate(), np_ok ? "" : " [x]",
                hp_gap, hp_gap <= kHolonomicGoalAgreement ? "" : " [x]", drop, np[ShieldMode::kNone].safe_goal_rate(),
                np[ShieldMode::kRobust].goal_rate(), drop_ok ? "" : " [x]")};
  });

  run(6, "intervention-ordering", [&]() -> Result {
    if (!grid_ok) return {false, "benchmark did not complete"};
    bool ok = true;
    std::string detail;
    for (const char* env : {"cartpole", "nonholonomic"}) {
      const auto& r = grid[env];
      const double l = r[ShieldMode::kLinearRobust].backup_fraction(), n = r[ShieldMode::kRobust].backup_fraction();
      ok = ok && l > n;
      detail += fmt("%s lrmps %.3f > rmps %.3f%s; ", env, l, n, l > n ? "" : " [x]");
    }
    return {ok, detail};
  });

  run(7, "region-inclusion", region_inclusion);
  run(8, "one-step-invariance", invariance);

  std::printf("%s: %d failing criteria\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
