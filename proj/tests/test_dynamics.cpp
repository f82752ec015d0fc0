#include <cmath>
#include <numbers>

#include "doctest.h"
#include "rmps/dynamics.hpp"

using namespace rmps;

namespace {

StateVec vec(std::initializer_list<double> v) {
  StateVec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

ControlVec ctl(std::initializer_list<double> v) {
  ControlVec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("cart-pole matches a hand-evaluated step") {
  CartPole cp;
  const StateVec x = vec({0.1, -0.2, 0.05, 0.3});
  const ControlVec u = ctl({2.0});
  // Independent evaluation of the frictionless cart-pole equations.
  const double M = 1.1, mp = 0.1, l = 0.5, g = 9.8, dt = 0.02;
  const double temp = (2.0 + mp * l * 0.09 * std::sin(0.05)) / M;
  const double th_acc = (g * std::sin(0.05) - std::cos(0.05) * temp) /
                        (l * (4.0 / 3.0 - mp * std::cos(0.05) * std::cos(0.05) / M));
  const double x_acc = temp - mp * l * th_acc * std::cos(0.05) / M;
  const StateVec next = step_nominal(cp, x, u);
  CHECK(next[0] == doctest::Approx(0.1 + dt * -0.2).epsilon(1e-14));
  CHECK(next[1] == doctest::Approx(-0.2 + dt * x_acc).epsilon(1e-14));
  CHECK(next[2] == doctest::Approx(0.05 + dt * 0.3).epsilon(1e-14));
  CHECK(next[3] == doctest::Approx(0.3 + dt * th_acc).epsilon(1e-14));
}

TEST_CASE("cart-pole conserves energy as dt shrinks without input") {
  CartPoleParams p;
  double prev_drift = 0.0;
  for (double dt : {1e-3, 1e-4}) {
    p.dt = dt;
    CartPole cp(p);
    StateVec x = vec({0.0, 0.3, 0.1, -0.2});
    const double e0 = cp.energy(x);
    const int steps = static_cast<int>(0.5 / dt);
    for (int k = 0; k < steps; ++k) x = cp.f(x, ctl({0.0}));
    const double drift = std::abs(cp.energy(x) - e0);
    if (prev_drift > 0.0) CHECK(drift < 0.2 * prev_drift);
    prev_drift = drift;
  }
  CHECK(prev_drift < 1e-3);
}

TEST_CASE("equilibrium maps produce fixed points") {
  CartPole cp;
  HolonomicParticle hp;
  NonholonomicParticle np;
  const StateVec x = vec({0.7, -0.4, 0.1, 2.0});
  for (const DynamicsModel* m : std::initializer_list<const DynamicsModel*>{&cp, &hp, &np}) {
    const Equilibrium eq = equilibrium_map(*m, x);
    CHECK(equilibrium_residual(*m, eq) <= 1e-12);
  }
  const Equilibrium ne = np.equilibrium(x);
  CHECK(ne.x[0] == 0.7);
  CHECK(ne.x[1] == -0.4);
  CHECK(ne.x[2] == 0.0);
  CHECK(ne.x[3] == 2.0);
  CHECK(cp.equilibrium(x).x[0] == 0.7);
}

TEST_CASE("finite-difference Jacobians of the holonomic particle are exact") {
  HolonomicParticle hp;
  const Linearization lin = jacobians(hp, vec({1, 2, 3, 4}), ctl({0.1, -0.2}));
  StateMat A = StateMat::Identity(4, 4);
  A(0, 2) = A(1, 3) = 0.1;
  InputMat B = InputMat::Zero(4, 2);
  B(2, 0) = B(3, 1) = 0.1;
  CHECK((lin.A - A).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((lin.B - B).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("non-holonomic heading classes wrap around") {
  NonholonomicParticle np;
  const double two_pi = 2.0 * std::numbers::pi;
  const auto c1 = np.canonical_equilibrium(np.equilibrium(vec({3, 4, 0, 0.01})));
  const auto c2 = np.canonical_equilibrium(np.equilibrium(vec({-1, 0, 0, 0.01 + two_pi})));
  const auto c3 = np.canonical_equilibrium(np.equilibrium(vec({0, 0, 0, -0.01})));
  CHECK(c1.x == c2.x);
  CHECK(c1.x == c3.x);
  CHECK(c1.x[0] == 0.0);
}

TEST_CASE("disturbance sampling stays in the support and is seeded") {
  NonholonomicParticle np;
  RandomStream a(5), b(5);
  for (int i = 0; i < 1000; ++i) {
    const StateVec w = sample_disturbance(np, a);
    CHECK(np.disturbance().support().contains(w));
    CHECK(w[0] == 0.0);
    CHECK(w == sample_disturbance(np, b));
  }
}

TEST_CASE("invalid inputs are rejected") {
  CartPole cp;
  CHECK_THROWS_AS(step_nominal(cp, vec({0, 0, 0}), ctl({0})), DimensionError);
  CHECK_THROWS_AS(step_nominal(cp, vec({0, 0, NAN, 0}), ctl({0})), NumericError);
  CHECK_THROWS_AS(DisturbanceSpec(vec({-1.0})), std::invalid_argument);
}

TEST_CASE("particle safe set inflates obstacles by the particle radius") {
  ParticleParams p;
  HolonomicParticle hp(p, {DiskObstacle{vec({1.0, 1.0}), 0.5}});
  CHECK(hp.safe_set().obstacles().front().radius == doctest::Approx(0.7));
  CHECK_FALSE(hp.safe_set().contains(vec({1.0, 1.65, 0, 0})));
  CHECK(hp.safe_set().contains(vec({1.0, 1.71, 0, 0})));
  CHECK_FALSE(hp.safe_set().contains(vec({5.1, 0, 0, 0})));
}

TEST_CASE("car deviation boxes rotate with the start heading") {
  NonholonomicParticle car;
  const Box along(vec({-1.0, -0.1, -0.2, -0.3}), vec({1.0, 0.1, 0.2, 0.3}));
  const Box turned = car.transport_deviation(along, vec({0, 0, 1, 0}), vec({5, 5, 1, M_PI / 2}));
  CHECK(turned.lo()[0] == doctest::Approx(-0.1));
  CHECK(turned.hi()[1] == doctest::Approx(1.0));
  CHECK(turned.lo()[2] == -0.2);
  CHECK(turned.hi()[3] == 0.3);
  // Every rotated sample of the original box lies in the transported one.
  RandomStream rng(3);
  const Box off(vec({0.1, -0.3, 0, 0}), vec({0.6, 0.05, 0, 0}));
  for (int k = 0; k < 200; ++k) {
    const double a = rng.uniform(-M_PI, M_PI);
    const Box b = car.transport_deviation(off, vec({0, 0, 0, 0.2}), vec({0, 0, 0, 0.2 + a}));
    const StateVec p = vec({rng.uniform(0.1, 0.6), rng.uniform(-0.3, 0.05), 0, 0});
    const StateVec q = vec({std::cos(a) * p[0] - std::sin(a) * p[1], std::sin(a) * p[0] + std::cos(a) * p[1], 0, 0});
    CHECK(b.contains(q));
  }
  HolonomicParticle hp;
  CHECK(hp.transport_deviation(along, vec({0, 0, 1, 0}), vec({1, 1, 0, 1})) == along);
}
