#pragma once

// Discrete-time stochastic dynamics x(k+1) = f(x(k), u(k)) + w(k), the three
// benchmark environments, and the helpers built on f (equilibrium map,
// finite-difference linearization, task cost).

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>

#include "rmps/geometry.hpp"
#include "rmps/random.hpp"
#include "rmps/types.hpp"

namespace rmps {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Independent zero-mean uniform noise per state dimension on [-h_i, h_i].
class DisturbanceSpec {
 public:
  explicit DisturbanceSpec(StateVec half_widths);
  static DisturbanceSpec none(int dim) { return DisturbanceSpec(StateVec::Zero(dim)); }

  const StateVec& half_widths() const { return half_widths_; }
  Box support() const { return Box::symmetric(half_widths_); }
  bool is_zero() const { return half_widths_.isZero(0.0); }
  DisturbanceSpec scaled(double factor) const { return DisturbanceSpec(half_widths_ * factor); }

 private:
  StateVec half_widths_;
};

struct Equilibrium {
  StateVec x;
  ControlVec u;
};

class DynamicsModel {
 public:
  DynamicsModel(int state_dim, int control_dim, double dt, Box control_bounds, SafeSet safe_set,
                DisturbanceSpec disturbance);
  virtual ~DynamicsModel() = default;

  virtual std::shared_ptr<DynamicsModel> clone() const = 0;
  virtual std::string name() const = 0;

  // Nominal update rule; no input validation.
  virtual StateVec f(const StateVec& x, const ControlVec& u) const = 0;
  virtual Equilibrium equilibrium(const StateVec& x) const = 0;
  virtual double task_cost(const StateVec& x, const ControlVec& u) const = 0;
  // Canonical member of the equilibrium's symmetry class; equilibria in the
  // same class share LQR gains and invariant sets.
  virtual Equilibrium canonical_equilibrium(const Equilibrium& eq) const = 0;
  // Identifies the dynamics (not the obstacle layout) for tube caches.
  virtual std::string fingerprint() const;
  // Maps a box of closed-loop deviations observed from start state `from` to
  // a box valid from `to`, using symmetries of the dynamics. Default: as is.
  virtual Box transport_deviation(const Box& deviation, const StateVec& from, const StateVec& to) const;

  int state_dim() const { return state_dim_; }
  int control_dim() const { return control_dim_; }
  double dt() const { return dt_; }
  const Box& control_bounds() const { return control_bounds_; }
  const SafeSet& safe_set() const { return safe_set_; }
  const DisturbanceSpec& disturbance() const { return disturbance_; }

  void set_safe_set(SafeSet safe);
  void set_disturbance(DisturbanceSpec disturbance);

  // Goal region in the safe set's position coordinates.
  const StateVec& goal() const { return goal_; }
  void set_goal(StateVec goal) { goal_ = std::move(goal); }

  ControlVec clamp_control(const ControlVec& u) const;

 protected:
  std::string base_fingerprint() const;

 private:
  int state_dim_;
  int control_dim_;
  double dt_;
  Box control_bounds_;
  SafeSet safe_set_;
  DisturbanceSpec disturbance_;
  StateVec goal_;
};

using ModelPtr = std::shared_ptr<const DynamicsModel>;

StateVec step_nominal(const DynamicsModel& model, const StateVec& x, const ControlVec& u);
StateVec sample_disturbance(const DynamicsModel& model, RandomStream& rng);
StateVec step_stochastic(const DynamicsModel& model, const StateVec& x, const ControlVec& u, RandomStream& rng);
Equilibrium equilibrium_map(const DynamicsModel& model, const StateVec& x);
double equilibrium_residual(const DynamicsModel& model, const Equilibrium& eq);

struct Linearization {
  StateMat A;
  InputMat B;
};

inline constexpr double kJacobianStep = 1e-5;

// Central finite differences of f at an arbitrary (x, u).
Linearization jacobians(const DynamicsModel& model, const StateVec& x, const ControlVec& u,
                        double step = kJacobianStep);
Linearization linearize(const DynamicsModel& model, const Equilibrium& at);

double task_cost(const DynamicsModel& model, const StateVec& x, const ControlVec& u);

// ---------------------------------------------------------------------------
// Environments

struct CartPoleParams {
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_length = 0.5;
  double gravity = 9.8;
  double force_max = 10.0;
  double dt = 0.02;
  double theta_max = 0.2;
  double x_max = 2.4;
  double x_target = 0.0;
  double angle_weight = 1.0;  // gamma in (x - x_target)^2 + gamma * theta^2
  double noise = 0.01;
};

// State (x, v, theta, omega), control: horizontal force. Frictionless cart-pole
// ODE with explicit Euler.
class CartPole final : public DynamicsModel {
 public:
  explicit CartPole(CartPoleParams params = {});

  std::shared_ptr<DynamicsModel> clone() const override { return std::make_shared<CartPole>(*this); }
  std::string name() const override { return "cartpole"; }
  StateVec f(const StateVec& x, const ControlVec& u) const override;
  Equilibrium equilibrium(const StateVec& x) const override;
  double task_cost(const StateVec& x, const ControlVec& u) const override;
  Equilibrium canonical_equilibrium(const Equilibrium& eq) const override;
  std::string fingerprint() const override;

  const CartPoleParams& params() const { return params_; }
  // Total mechanical energy (kinetic + potential) of the continuous system.
  double energy(const StateVec& x) const;

 private:
  CartPoleParams params_;
};

struct ParticleParams {
  double dt = 0.1;
  double accel_max = 1.0;
  double steer_max = 0.5;     // non-holonomic steering angle bound (rad)
  double radius = 0.2;        // particle radius l
  double workspace = 5.0;     // safe workspace is [-w, w]^2
  double obstacle_weight = 0.1;  // gamma in the task cost
  double noise = 0.01;
  StateVec goal = StateVec::Zero(2);
};

// Obstacles passed to the particle models use their physical radius; the safe
// set stores radius + particle radius so the particle is treated as a point.
struct DiskObstacle {
  StateVec center;
  double radius;

  friend bool operator==(const DiskObstacle& a, const DiskObstacle& b) {
    return a.radius == b.radius && a.center.size() == b.center.size() && a.center == b.center;
  }
};

class ParticleBase : public DynamicsModel {
 public:
  ParticleBase(ParticleParams params, Box control_bounds, std::vector<DiskObstacle> obstacles);

  double task_cost(const StateVec& x, const ControlVec& u) const override;
  const ParticleParams& params() const { return params_; }
  const std::vector<DiskObstacle>& obstacles() const { return obstacles_; }
  void set_obstacles(std::vector<DiskObstacle> obstacles);

 protected:
  std::string particle_fingerprint() const;

 private:
  SafeSet build_safe_set() const;

  ParticleParams params_;
  std::vector<DiskObstacle> obstacles_;
};

// State (x, y, vx, vy), control (ax, ay); Euler-discretized double integrator.
class HolonomicParticle final : public ParticleBase {
 public:
  explicit HolonomicParticle(ParticleParams params = {}, std::vector<DiskObstacle> obstacles = {});

  std::shared_ptr<DynamicsModel> clone() const override { return std::make_shared<HolonomicParticle>(*this); }
  std::string name() const override { return "holonomic"; }
  StateVec f(const StateVec& x, const ControlVec& u) const override;
  Equilibrium equilibrium(const StateVec& x) const override;
  Equilibrium canonical_equilibrium(const Equilibrium& eq) const override;
  std::string fingerprint() const override { return particle_fingerprint(); }
};

// State (x, y, v, h), control (a, steering angle); bicycle-style kinematics.
class NonholonomicParticle final : public ParticleBase {
 public:
  explicit NonholonomicParticle(ParticleParams params = {}, std::vector<DiskObstacle> obstacles = {});

  std::shared_ptr<DynamicsModel> clone() const override { return std::make_shared<NonholonomicParticle>(*this); }
  std::string name() const override { return "nonholonomic"; }
  StateVec f(const StateVec& x, const ControlVec& u) const override;
  Equilibrium equilibrium(const StateVec& x) const override;
  Equilibrium canonical_equilibrium(const Equilibrium& eq) const override;
  std::string fingerprint() const override { return particle_fingerprint(); }
  // The dynamics commute with rotations of the plane, so position deviations
  // rotate with the start heading; returns the bounding box of the rotated
  // position rectangle.
  Box transport_deviation(const Box& deviation, const StateVec& from, const StateVec& to) const override;

  // Number of heading bins used to group equilibria.
  static constexpr int kHeadingBins = 64;
};

// f(x, u) = x_e + A (x - x_e) + B (u - u_e) around a fixed equilibrium of a
// base model; shares the base model's bounds, safe set and noise.
class LinearizedModel final : public DynamicsModel {
 public:
  LinearizedModel(const DynamicsModel& base, const Equilibrium& at);

  std::shared_ptr<DynamicsModel> clone() const override { return std::make_shared<LinearizedModel>(*this); }
  std::string name() const override { return base_name_ + "-linear"; }
  StateVec f(const StateVec& x, const ControlVec& u) const override;
  Equilibrium equilibrium(const StateVec& x) const override { return base_->equilibrium(x); }
  double task_cost(const StateVec& x, const ControlVec& u) const override { return base_->task_cost(x, u); }
  Equilibrium canonical_equilibrium(const Equilibrium& eq) const override { return base_->canonical_equilibrium(eq); }
  Box transport_deviation(const Box& deviation, const StateVec& from, const StateVec& to) const override {
    return base_->transport_deviation(deviation, from, to);
  }

  const Equilibrium& anchor() const { return anchor_; }
  const Linearization& jacobian() const { return lin_; }

 private:
  std::shared_ptr<const DynamicsModel> base_;
  std::string base_name_;
  Equilibrium anchor_;
  Linearization lin_;
};

// Model assembled from callables; used for small synthetic systems.
class FunctionModel final : public DynamicsModel {
 public:
  using StepFn = std::function<StateVec(const StateVec&, const ControlVec&)>;
  using EquilibriumFn = std::function<Equilibrium(const StateVec&)>;

  FunctionModel(std::string name, int state_dim, int control_dim, double dt, Box control_bounds, SafeSet safe_set,
                DisturbanceSpec disturbance, StepFn step, EquilibriumFn equilibrium);

  std::shared_ptr<DynamicsModel> clone() const override { return std::make_shared<FunctionModel>(*this); }
  std::string name() const override { return name_; }
  StateVec f(const StateVec& x, const ControlVec& u) const override { return step_(x, u); }
  Equilibrium equilibrium(const StateVec& x) const override { return equilibrium_(x); }
  double task_cost(const StateVec& x, const ControlVec&) const override { return x.squaredNorm(); }
  Equilibrium canonical_equilibrium(const Equilibrium& eq) const override { return eq; }

 private:
  std::string name_;
  StepFn step_;
  EquilibriumFn equilibrium_;
};

}  // namespace rmps
