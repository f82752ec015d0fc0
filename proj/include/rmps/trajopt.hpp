#pragma once

// Reference planning (steer to an equilibrium under tightened constraints) and
// receding-horizon tracking, both solved by single-shooting iLQR with
// box-constrained controls and augmented-Lagrangian state constraints.

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "rmps/dynamics.hpp"
#include "rmps/lqr.hpp"

namespace rmps {

// Nominal trajectory x(0..T), u(0..T) that ends at the equilibrium. Indexing
// past T returns the equilibrium, i.e. the trajectory continues at rest.
struct RefTraj {
  std::vector<StateVec> states;      // T + 1
  std::vector<ControlVec> controls;  // T + 1, controls[T] = u_e
  Equilibrium equilibrium;
  int horizon = 0;
  double cost = 0.0;

  const StateVec& state(int k) const { return k <= horizon ? states[k] : equilibrium.x; }
  const ControlVec& control(int k) const { return k < horizon ? controls[k] : equilibrium.u; }
};

struct Infeasible {
  double max_violation = 0.0;
};

using PlanResult = std::variant<RefTraj, Infeasible>;

inline bool is_feasible(const PlanResult& r) { return std::holds_alternative<RefTraj>(r); }

struct SolverOptions {
  int max_iterations = 100;        // per outer round
  int outer_rounds = 5;
  double penalty_initial = 1e2;
  double penalty_growth = 10.0;    // 1e2 ... 1e6 over five rounds
  // Further multiplier updates at the final penalty weight.
  int extra_rounds = 10;
  double feasibility_tol = 1e-4;
  // Constraints are enforced with this extra margin inside the solver so that
  // returned plans satisfy the supplied sets exactly, not just within tol.
  double backoff = 1e-4;
  // Terminal error at which the multiplier updates stop; well below
  // feasibility_tol so that tracking the plan's equilibrium tail is exact.
  double terminal_target = 1e-9;
  double cost_tol = 1e-10;         // relative cost decrease that ends a round
  // Reference plans keep u within this fraction of the control bounds so the
  // tracker has authority left to reject disturbances. Tracking always uses
  // the full bounds. Bounds are assumed to contain zero.
  double control_scale = 1.0;
  // Optional initial control sequence (length T); otherwise a clamped LQR
  // rollout toward the equilibrium.
  std::optional<std::vector<ControlVec>> initial_controls;
};

// Minimizes sum_{k<T} |x(k) - x_e|_Q^2 + |u(k) - u_e|_R^2 subject to the
// nominal dynamics, x(k) in tightened[k], u(k) in U and x(T) = x_e.
// `tightened` holds either one set (used for every step) or T + 1 sets.
// Returns Infeasible when the best solution found violates a constraint by
// more than feasibility_tol. Throws NumericError on non-finite iterates.
PlanResult plan_reference(const DynamicsModel& model, const StateVec& x, const Equilibrium& eq, int T,
                          std::span<const SafeSet> tightened, const CostWeights& weights,
                          const SolverOptions& options = {});

// Same problem with the dynamics replaced by their linearization at `at`.
PlanResult plan_reference_linear(const DynamicsModel& model, const Equilibrium& at, const StateVec& x,
                                 const Equilibrium& eq, int T, std::span<const SafeSet> tightened,
                                 const CostWeights& weights, const SolverOptions& options = {});

struct TrackResult {
  ControlVec control;
  bool fell_back = false;  // solver failed; control is the LQR stabilizer
  std::vector<ControlVec> solution;
};

// Receding-horizon tracking of a reference: minimizes
// sum_{k<T} |x(k) - xref(t+k)|_Q^2 + |u(k) - uref(t+k)|_R^2 + V_f(x(T)) with
// x(k) in the model's safe set. Keeps the previous solution for warm starts.
class Tracker {
 public:
  Tracker(int horizon, CostWeights weights, LqrSolution lqr, SolverOptions options = {});

  TrackResult step(const DynamicsModel& model, const StateVec& x_t, const RefTraj& ref, int t);
  void reset() { warm_.clear(); }
  int horizon() const { return horizon_; }

 private:
  int horizon_;
  CostWeights weights_;
  LqrSolution lqr_;
  SolverOptions options_;
  std::vector<ControlVec> warm_;
};

// Stateless tracking step; initializes from uref(t..t+T-1).
ControlVec track_step(const DynamicsModel& model, const StateVec& x_t, const RefTraj& ref, int t, int T,
                      const LqrSolution& lqr, const CostWeights& weights);

// Objective of the tracking problem for a given control sequence; exposed for
// optimality checks.
double tracking_objective(const DynamicsModel& model, const StateVec& x_t, const RefTraj& ref, int t,
                          std::span<const ControlVec> controls, const LqrSolution& lqr, const CostWeights& weights);

// Rolls out a control sequence under the nominal dynamics.
std::vector<StateVec> rollout(const DynamicsModel& model, const StateVec& x0, std::span<const ControlVec> controls);

}  // namespace rmps
