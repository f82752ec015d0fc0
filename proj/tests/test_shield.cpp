#include <cmath>

#include "doctest.h"
#include "rmps/shield.hpp"

using namespace rmps;

namespace {

StateVec vec(std::initializer_list<double> v) {
  StateVec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

constexpr int kT = 30;

BackupConfig particle_config() {
  BackupConfig c;
  c.horizon = kT;
  c.weights = CostWeights::identity(4, 2);
  c.solver.control_scale = 0.8;
  c.invariant_samples = 500;
  return c;
}

std::shared_ptr<HolonomicParticle> particle(std::vector<DiskObstacle> obstacles = {}, double noise = 0.01) {
  ParticleParams p;
  p.noise = noise;
  return std::make_shared<HolonomicParticle>(p, std::move(obstacles));
}

Tube constant_tube(const StateVec& half_widths, int T = kT) {
  Tube t = zero_tube(4, T);
  for (auto& b : t.boxes) b = Box::symmetric(half_widths);
  t.source = TubeSource::kPrecomputed;
  return t;
}

RecoverabilityChecker make_checker(std::shared_ptr<const DynamicsModel> m, std::shared_ptr<TubeProvider> tubes) {
  return RecoverabilityChecker(std::move(m), particle_config(), std::move(tubes), std::make_shared<EquilibriumCache>());
}

}  // namespace

TEST_CASE("shield mode names parse back") {
  for (auto m : {ShieldMode::kNone, ShieldMode::kNonrobust, ShieldMode::kRobust, ShieldMode::kLinearRobust}) {
    CHECK(parse_shield_mode(shield_mode_name(m)) == m);
  }
  CHECK_THROWS_AS(parse_shield_mode("robust"), std::invalid_argument);
}

TEST_CASE("session tracks for T steps and then hands over to the stabilizer") {
  const auto m = particle();
  EquilibriumCache cache;
  const SafeSet& safe = m->safe_set();
  auto init = BackupSession::initialize(m, vec({0, 0, 0.5, 0}), {&safe, 1}, particle_config(), cache);
  REQUIRE(std::holds_alternative<BackupSession>(init));
  auto& s = std::get<BackupSession>(init);
  CHECK(s.horizon() == kT);
  CHECK(s.equilibrium().x == vec({0, 0, 0, 0}));
  StateVec x = vec({0, 0, 0.5, 0});
  for (int k = 0; k < kT; ++k) {
    CHECK(s.t() == k);
    x = step_nominal(*m, x, s.act(x));
  }
  CHECK(s.t() == kT);
  CHECK((x - s.equilibrium().x).cwiseAbs().maxCoeff() < 1e-3);
  const StateVec probe = vec({0.01, -0.02, 0.03, 0});
  CHECK(s.act(probe) == stabilizing_control(*m, s.lqr(), s.equilibrium(), probe));
  CHECK(s.t() == kT);
  CHECK(s.fresh_copy().t() == 0);
}

TEST_CASE("a resting particle in open space is recoverable under the zero tube") {
  auto checker = make_checker(particle(), std::make_shared<ZeroTubeProvider>(4, kT));
  const auto c = checker.check(vec({0, 0, 0, 0}));
  CHECK(c.report.recoverable);
  CHECK(c.report.reason == FailureReason::kNone);
  CHECK(c.report.tube_source == TubeSource::kZero);
  CHECK(c.report.epsilon_total == 0.0);
}

TEST_CASE("clearance below the tube width fails at the first step") {
  // Obstacle surface 0.1 from the particle's edge.
  const auto m = particle({{vec({0.6, 0}), 0.3}});
  CHECK(m->safe_set().max_violation(vec({0, 0, 0, 0})) == doctest::Approx(-0.1));

  auto nonrobust = make_checker(m, std::make_shared<ZeroTubeProvider>(4, kT));
  CHECK(nonrobust.check(vec({0, 0, 0, 0})).report.recoverable);

  Tube wide = constant_tube(vec({0.2, 0.2, 0.01, 0.01}));
  wide.epsilon = 0.01;
  wide.delta = 0.001;
  auto robust = make_checker(m, std::make_shared<PrecomputedTubeProvider>(wide));
  // The robust planner cannot even find a plan from inside the eroded set,
  // so certify the nonrobust session directly.
  const auto session = nonrobust.check(vec({0, 0, 0, 0})).session;
  REQUIRE(session);
  const auto r = robust.certify(vec({0, 0, 0, 0}), *session);
  CHECK_FALSE(r.recoverable);
  CHECK(r.reason == FailureReason::kUnsafeStep);
  CHECK(r.failing_step == 0);
  CHECK(r.epsilon_total == doctest::Approx((kT + 1) * 0.01));
  CHECK(r.delta_total == doctest::Approx((kT + 1) * 0.001));
}

TEST_CASE("a degenerate invariant set rejects any nonzero terminal box") {
  // Without noise the sampled invariant set is the single point x_e.
  const auto m = particle({}, 0.0);
  auto zero = make_checker(m, std::make_shared<ZeroTubeProvider>(4, kT));
  const auto ok = zero.check(vec({0, 0, 0.3, 0}));
  REQUIRE(ok.session);
  CHECK(ok.session->invariant().box.widths().maxCoeff() == 0.0);
  CHECK(ok.report.recoverable);

  auto tiny = make_checker(m, std::make_shared<PrecomputedTubeProvider>(constant_tube(StateVec::Constant(4, 1e-3))));
  const auto r = tiny.certify(vec({0, 0, 0.3, 0}), *ok.session);
  CHECK_FALSE(r.recoverable);
  CHECK(r.reason == FailureReason::kMissesInvariant);
  CHECK(r.failing_step == kT);
}

TEST_CASE("robustly recoverable states are also recoverable without a tube") {
  const auto m = particle({{vec({1.0, 0.0}), 0.3}, {vec({-0.5, 1.2}), 0.3}});
  // Tube shaped like a sampled one: wide on the way, tight at the end.
  Tube tube = constant_tube(vec({0.05, 0.05, 0.02, 0.02}));
  tube.boxes.back() = Box::symmetric(StateVec::Constant(4, 1e-3));
  auto robust = make_checker(m, std::make_shared<PrecomputedTubeProvider>(tube));
  auto nonrobust = make_checker(m, std::make_shared<ZeroTubeProvider>(4, kT));
  int robust_count = 0, nonrobust_count = 0;
  for (double px : {-1.0, 0.0, 0.4}) {
    for (double py : {-0.5, 0.3, 1.0}) {
      for (double vx : {0.0, 0.6, 1.2}) {
        const StateVec x = vec({px, py, vx, 0.2});
        if (!m->safe_set().contains(x)) continue;
        const bool r = robust.check(x).report.recoverable;
        const bool n = nonrobust.check(x).report.recoverable;
        CAPTURE(x.transpose());
        if (r) CHECK(n);
        robust_count += r;
        nonrobust_count += n;
      }
    }
  }
  CHECK(robust_count > 0);
  CHECK(nonrobust_count >= robust_count);
}

TEST_CASE("shielded rollout toward an obstacle stays safe and follows the decision rule") {
  const auto m = particle({{vec({1.5, 0.0}), 0.3}});
  TubeOptions opts;
  opts.samples = 200;
  const Tube tube = precompute_tube(*m, vec({0, 0, 0.7, 0}), particle_config(), kT, 5, opts);
  CHECK(tube.horizon() == kT);
  auto checker = std::make_shared<RecoverabilityChecker>(m, particle_config(),
                                                         std::make_shared<PrecomputedTubeProvider>(tube),
                                                         std::make_shared<EquilibriumCache>());
  Shield shield(checker);
  RandomStream rng(99);
  StateVec x = vec({0, 0, 0, 0});
  int learned = 0, backup = 0;
  for (int k = 0; k < 120; ++k) {
    const ShieldDecision d = shield.act(x, vec({1.0, 0.0}));
    CHECK(d.source != DecisionSource::kFault);
    if (d.source == DecisionSource::kLearned) {
      CHECK(d.learned_recoverable);
      CHECK_FALSE(shield.has_active_session());
      ++learned;
    } else {
      CHECK_FALSE(d.learned_recoverable);
      CHECK(shield.has_active_session());
      ++backup;
    }
    x = step_stochastic(*m, x, d.action, rng);
    REQUIRE(m->safe_set().contains(x));
  }
  CHECK(learned > 0);
  CHECK(backup > 0);
}

TEST_CASE("a tube precomputed at one start is close to a fresh tube elsewhere") {
  const auto m = particle();
  TubeOptions opts;
  opts.samples = 200;
  const Tube pre = precompute_tube(*m, vec({0, 0, 0.7, 0}), particle_config(), kT, 5, opts);
  FreshTubeProvider fresh(pre, opts, 8);
  auto checker = make_checker(m, std::make_shared<ZeroTubeProvider>(4, kT));
  const StateVec x = vec({-1.0, 2.0, 0.2, -0.5});
  const auto c = checker.check(x);
  REQUIRE(c.session);
  const Tube here = fresh.certify_tube(x, *c.session);
  CHECK(fresh.last_rollouts() == 200);
  CHECK(here.source == TubeSource::kFresh);
  double pre_w = 0.0, here_w = 0.0;
  for (int t = 0; t <= kT; ++t) {
    pre_w = std::max(pre_w, pre.boxes[t].widths().head(2).maxCoeff());
    here_w = std::max(here_w, here.boxes[t].widths().head(2).maxCoeff());
  }
  CHECK(here_w <= 2.0 * pre_w);
  CHECK(pre_w <= 2.0 * here_w);
}
