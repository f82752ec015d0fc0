// rmps: run shielded benchmarks, the cart-pole region scan, tube
// precomputation and the box-coverage check from the command line.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "rmps/harness.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode;
  int jobs = 0;
};

rmps::ScenarioConfig resolve(const Options& o, const std::string& default_env) {
  rmps::ScenarioConfig c = o.config.empty() ? rmps::default_config(default_env) : rmps::load_config(o.config);
  if (o.seed) c.seeds = {*o.seed};
  if (!o.out.empty()) c.out_dir = o.out;
  if (!o.mode.empty()) {
    try {
      c.modes = {rmps::parse_shield_mode(o.mode)};
    } catch (const std::invalid_argument& e) {
      throw rmps::ConfigError(e.what());
    }
  }
  if (o.jobs > 0) c.jobs = o.jobs;
  rmps::validate_config(c);
  return c;
}

int cmd_run(const Options& o) {
  const rmps::ScenarioConfig c = resolve(o, "cartpole");
  const rmps::BenchmarkResult r = rmps::run_benchmark(c);
  rmps::emit_outputs(r, c.out_dir, c.write_traces);
  long aborted = 0;
  for (const auto& m : r.metrics) {
    std::printf("%-12s %-14s safety %.3f goal %.3f learned %.3f backup %.3f episodes %ld\n", m.environment.c_str(),
                rmps::shield_mode_name(m.mode), m.safety_rate(), m.goal_rate(), m.learned_fraction(),
                m.backup_fraction(), m.episodes);
    aborted += m.aborted;
  }
  for (const auto& e : r.episodes) {
    if (e.aborted) {
      std::fprintf(stderr, "aborted: %s seed %llu scenario %d: %s\n", rmps::shield_mode_name(e.mode),
                   static_cast<unsigned long long>(e.seed), e.scenario, e.abort_reason.c_str());
    }
  }
  std::printf("wrote %s\n", (c.out_dir / "metrics.csv").string().c_str());
  return aborted ? 1 : 0;
}

int cmd_scan(const Options& o) {
  const rmps::ScenarioConfig c = resolve(o, "cartpole");
  const auto cells = rmps::stabilizable_region_scan(c);
  const auto path = c.out_dir / "scan.csv";
  rmps::write_scan_csv(cells, path);
  int nmpc = 0;
  int lmpc = 0;
  for (const auto& cell : cells) {
    nmpc += cell.nmpc_ok;
    lmpc += cell.lmpc_ok;
  }
  std::printf("cells %zu nmpc %d lmpc %d\nwrote %s\n", cells.size(), nmpc, lmpc, path.string().c_str());
  return 0;
}

int cmd_tubes(const Options& o) {
  rmps::ScenarioConfig c = resolve(o, "cartpole");
  if (o.mode.empty()) c.modes = {rmps::ShieldMode::kRobust, rmps::ShieldMode::kLinearRobust};
  const rmps::BenchmarkContext ctx = rmps::prepare_context(c);
  for (const auto& [mode, tube] : ctx.tubes) {
    const auto w = tube.boxes.back().widths();
    std::printf("%s: T=%d N=%ld eps=%.4f final widths", rmps::shield_mode_name(mode), tube.horizon(), tube.samples,
                tube.epsilon);
    for (Eigen::Index i = 0; i < w.size(); ++i) std::printf(" %.4g", w[i]);
    std::printf("\n");
  }
  return 0;
}

int cmd_lemma1(const Options& o, double epsilon, double delta, int trials) {
  const auto study = rmps::box_coverage_study(2, epsilon, delta, trials, 10000, o.seed.value_or(1));
  std::printf("N %ld trials %d passing %d fraction %.4f min coverage %.4f\n", study.samples, study.trials,
              study.passing, study.pass_fraction(), study.min_coverage);
  return study.pass_fraction() >= 1.0 - delta ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust model predictive shielding benchmarks"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON scenario config")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "single seed overriding the config's seed list");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--mode", o.mode, "shield mode")
        ->check(CLI::IsMember({"none", "nonrobust-mps", "rmps", "lrmps"}));
    sub->add_option("--jobs", o.jobs, "parallel episodes")->check(CLI::PositiveNumber);
  };
  auto* run = app.add_subcommand("run", "run the benchmark grid and write metrics.csv and traces");
  auto* scan = app.add_subcommand("scan", "cart-pole (theta, omega) recoverability scan");
  auto* tubes = app.add_subcommand("tube-precompute", "precompute and cache backup tubes");
  auto* lemma = app.add_subcommand("validate-lemma1", "box coverage check on a 2-D uniform distribution");
  double epsilon = 0.2;
  double delta = 0.05;
  int trials = 200;
  for (auto* sub : {run, scan, tubes, lemma}) add_common(sub);
  lemma->add_option("--epsilon", epsilon)->check(CLI::Range(1e-6, 0.999));
  lemma->add_option("--delta", delta)->check(CLI::Range(1e-6, 0.999));
  lemma->add_option("--trials", trials)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  for (auto* sub : {run, scan, tubes, lemma}) {
    if (sub->get_option("--seed")->count()) o.seed = seed;
  }

  try {
    if (*run) return cmd_run(o);
    if (*scan) return cmd_scan(o);
    if (*tubes) return cmd_tubes(o);
    if (*lemma) return cmd_lemma1(o, epsilon, delta, trials);
  } catch (const rmps::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
