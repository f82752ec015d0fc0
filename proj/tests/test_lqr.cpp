#include <cmath>

#include "doctest.h"
#include "rmps/lqr.hpp"

using namespace rmps;

namespace {

StateVec vec(std::initializer_list<double> v) {
  StateVec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("scalar Riccati matches the closed form root") {
  StateMat A = StateMat::Ones(1, 1);
  InputMat B = InputMat::Ones(1, 1);
  const LqrSolution s = solve_dare(A, B, StateMat::Ones(1, 1), ControlMat::Ones(1, 1));
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  CHECK(std::abs(s.P(0, 0) - golden) <= 1e-9);
  CHECK(s.K(0, 0) == doctest::Approx(golden / (1.0 + golden)).epsilon(1e-9));
}

TEST_CASE("zero dynamics give P = Q") {
  StateMat Q = StateMat::Identity(2, 2) * 3.0;
  const LqrSolution s = solve_dare(StateMat::Zero(2, 2), InputMat::Ones(2, 1), Q, ControlMat::Ones(1, 1));
  CHECK((s.P - Q).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("an unstabilizable pair is reported") {
  StateMat A = StateMat::Identity(1, 1) * 1.1;
  CHECK_THROWS_AS(solve_dare(A, InputMat::Zero(1, 1), StateMat::Ones(1, 1), ControlMat::Ones(1, 1)),
                  StabilizabilityError);
}

TEST_CASE("weights are validated") {
  CHECK_THROWS(CostWeights(StateMat::Identity(2, 2), ControlMat::Zero(1, 1)));
  StateMat Q(2, 2);
  Q << 1, 2, 0, 1;
  CHECK_THROWS(CostWeights(Q, ControlMat::Identity(1, 1)));
  StateMat neg = -StateMat::Identity(2, 2);
  CHECK_THROWS(CostWeights(neg, ControlMat::Identity(1, 1)));
}

TEST_CASE("environment LQRs satisfy the Riccati equation and stabilize") {
  CartPole cp;
  HolonomicParticle hp;
  NonholonomicParticle np;
  for (const DynamicsModel* m : std::initializer_list<const DynamicsModel*>{&cp, &hp, &np}) {
    CAPTURE(m->name());
    const Equilibrium eq = m->equilibrium(StateVec::Zero(4));
    const CostWeights w = CostWeights::identity(4, m->control_dim());
    const LqrSolution s = lqr_at(*m, eq, w);
    const Linearization lin = linearize(*m, eq);
    const StateMat proj = controllable_projector(lin.A, lin.B);
    const StateMat Q = m == &np ? StateMat(proj * w.Q * proj) : w.Q;
    CHECK(riccati_residual(s, lin.A, lin.B, Q, w.R) <= 1e-8);
    const StateMat closed = lin.A - lin.B * s.K;
    if (m == &np) {
      // Lateral offset and heading of a stopped car are not controllable.
      CHECK(spectral_radius(closed) <= 1.0 + 1e-9);
    } else {
      CHECK(spectral_radius(closed) < 1.0);
    }
  }
}

TEST_CASE("closed-loop contraction on the cart-pole linearization") {
  CartPole cp;
  const Equilibrium eq = cp.equilibrium(StateVec::Zero(4));
  const LqrSolution s = lqr_at(cp, eq, CostWeights::identity(4, 1));
  const Linearization lin = linearize(cp, eq);
  StateVec d = vec({0.01, -0.01, 0.01, 0.02});
  const double start = d.norm();
  // The Euclidean norm may grow transiently; the Riccati cost-to-go may not.
  for (int k = 0; k < 50; ++k) {
    const StateVec next = (lin.A - lin.B * s.K) * d;
    CHECK(next.dot(s.P * next) < d.dot(s.P * d));
    d = next;
  }
  for (int k = 0; k < 500; ++k) d = (lin.A - lin.B * s.K) * d;
  CHECK(d.norm() < 1e-3 * start);
  CHECK(stabilizing_control(cp, s, eq, eq.x)[0] == 0.0);
  CHECK(terminal_cost(s, eq, eq.x) == 0.0);
}
