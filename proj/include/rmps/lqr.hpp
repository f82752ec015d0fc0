#pragma once

// Discrete-time LQR: Riccati iteration, the stabilizing feedback and the
// quadratic terminal cost used by the tracking controller.

#include <stdexcept>

#include "rmps/dynamics.hpp"
#include "rmps/types.hpp"

namespace rmps {

class StabilizabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CostWeights {
  StateMat Q;
  ControlMat R;

  // Throws std::invalid_argument unless Q is symmetric PSD and R symmetric PD.
  CostWeights(StateMat Q, ControlMat R);
  // Q = q I, R = r I.
  static CostWeights identity(int state_dim, int control_dim, double q = 1.0, double r = 0.1);
};

struct LqrSolution {
  StateMat P;
  GainMat K;
  int iterations = 0;
};

inline constexpr double kRiccatiTolerance = 1e-10;
inline constexpr int kRiccatiMaxIterations = 10000;

// Fixed point of P <- Q + A'(P - PB(R + B'PB)^-1 B'P)A starting from P = Q,
// K = (R + B'PB)^-1 B'PA. Throws StabilizabilityError when the iteration does
// not settle within the cap.
LqrSolution solve_dare(const StateMat& A, const InputMat& B, const StateMat& Q, const ControlMat& R);

// Max-abs residual of the Riccati equation at P.
double riccati_residual(const LqrSolution& lqr, const StateMat& A, const InputMat& B, const StateMat& Q,
                        const ControlMat& R);

// Orthogonal projector onto the controllable subspace of (A, B).
StateMat controllable_projector(const StateMat& A, const InputMat& B);

// LQR for the linearization of `model` at `eq`. Uncontrollable modes with unit
// modulus (e.g. the heading of a stopped car) make the plain iteration
// diverge, so Q is first projected onto the controllable subspace when (A, B)
// is not controllable.
LqrSolution lqr_at(const DynamicsModel& model, const Equilibrium& eq, const CostWeights& weights);

// u = u_e - K (x - x_e), clamped to the model's control bounds.
ControlVec stabilizing_control(const DynamicsModel& model, const LqrSolution& lqr, const Equilibrium& eq,
                               const StateVec& x);

// V_f(x) = (x - x_e)' P (x - x_e).
double terminal_cost(const LqrSolution& lqr, const Equilibrium& eq, const StateVec& x);

double spectral_radius(const StateMat& M);

}  // namespace rmps
