#include "rmps/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace rmps {

namespace {

void require_finite(const StateVec& x, const ControlVec& u) {
  if (!x.allFinite() || !u.allFinite()) throw NumericError("step_nominal: non-finite input");
}

std::string format_vec(const StateVec& v) {
  std::ostringstream os;
  os.precision(17);
  os << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ']';
  return os.str();
}

Box symmetric_bounds(std::initializer_list<double> half) {
  StateVec h(static_cast<Eigen::Index>(half.size()));
  Eigen::Index i = 0;
  for (double v : half) h[i++] = v;
  return Box::symmetric(h);
}

}  // namespace

DisturbanceSpec::DisturbanceSpec(StateVec half_widths) : half_widths_(std::move(half_widths)) {
  for (Eigen::Index i = 0; i < half_widths_.size(); ++i) {
    if (!(half_widths_[i] >= 0.0)) throw std::invalid_argument("DisturbanceSpec: negative half width");
  }
}

DynamicsModel::DynamicsModel(int state_dim, int control_dim, double dt, Box control_bounds, SafeSet safe_set,
                             DisturbanceSpec disturbance)
    : state_dim_(state_dim),
      control_dim_(control_dim),
      dt_(dt),
      control_bounds_(std::move(control_bounds)),
      safe_set_(std::move(safe_set)),
      disturbance_(std::move(disturbance)),
      goal_(StateVec::Zero(static_cast<Eigen::Index>(safe_set_.position_dims().size()))) {
  if (state_dim < 1 || state_dim > kMaxStateDim) throw std::invalid_argument("DynamicsModel: bad state dimension");
  if (control_dim < 1 || control_dim > kMaxControlDim) throw std::invalid_argument("DynamicsModel: bad control dimension");
  if (!(dt > 0.0)) throw std::invalid_argument("DynamicsModel: dt must be positive");
  if (control_bounds_.dim() != control_dim) throw DimensionError("DynamicsModel: control bounds dimension");
  if (safe_set_.state_dim() != state_dim) throw DimensionError("DynamicsModel: safe set dimension");
  if (disturbance_.half_widths().size() != state_dim) throw DimensionError("DynamicsModel: disturbance dimension");
}

void DynamicsModel::set_safe_set(SafeSet safe) {
  if (safe.state_dim() != state_dim_) throw DimensionError("set_safe_set: dimension");
  safe_set_ = std::move(safe);
}

void DynamicsModel::set_disturbance(DisturbanceSpec disturbance) {
  if (disturbance.half_widths().size() != state_dim_) throw DimensionError("set_disturbance: dimension");
  disturbance_ = std::move(disturbance);
}

ControlVec DynamicsModel::clamp_control(const ControlVec& u) const {
  ControlVec out(control_dim_);
  for (int i = 0; i < control_dim_; ++i) {
    out[i] = std::clamp(u[i], control_bounds_.lo()[i], control_bounds_.hi()[i]);
  }
  return out;
}

std::string DynamicsModel::base_fingerprint() const {
  std::ostringstream os;
  os.precision(17);
  os << name() << ";nx=" << state_dim_ << ";nu=" << control_dim_ << ";dt=" << dt_
     << ";ulo=" << format_vec(control_bounds_.lo()) << ";uhi=" << format_vec(control_bounds_.hi())
     << ";w=" << format_vec(disturbance_.half_widths());
  return os.str();
}

std::string DynamicsModel::fingerprint() const { return base_fingerprint(); }

Box DynamicsModel::transport_deviation(const Box& deviation, const StateVec&, const StateVec&) const {
  return deviation;
}

StateVec step_nominal(const DynamicsModel& model, const StateVec& x, const ControlVec& u) {
  if (x.size() != model.state_dim() || u.size() != model.control_dim()) throw DimensionError("step_nominal: dimension");
  require_finite(x, u);
  return model.f(x, u);
}

StateVec sample_disturbance(const DynamicsModel& model, RandomStream& rng) {
  const StateVec& h = model.disturbance().half_widths();
  StateVec w(h.size());
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    // Degenerate intervals still consume a draw so the stream layout does not
    // depend on which dimensions are noisy.
    const double r = rng.uniform01();
    w[i] = h[i] == 0.0 ? 0.0 : -h[i] + 2.0 * h[i] * r;
  }
  return w;
}

StateVec step_stochastic(const DynamicsModel& model, const StateVec& x, const ControlVec& u, RandomStream& rng) {
  StateVec next = step_nominal(model, x, u);
  next += sample_disturbance(model, rng);
  return next;
}

Equilibrium equilibrium_map(const DynamicsModel& model, const StateVec& x) {
  if (!x.allFinite()) throw NumericError("equilibrium_map: non-finite state");
  return model.equilibrium(x);
}

double equilibrium_residual(const DynamicsModel& model, const Equilibrium& eq) {
  return (model.f(eq.x, eq.u) - eq.x).cwiseAbs().maxCoeff();
}

Linearization jacobians(const DynamicsModel& model, const StateVec& x, const ControlVec& u, double step) {
  const int n = model.state_dim();
  const int m = model.control_dim();
  Linearization lin{StateMat(n, n), InputMat(n, m)};
  const double inv = 1.0 / (2.0 * step);
  StateVec xp = x;
  for (int i = 0; i < n; ++i) {
    const double orig = xp[i];
    xp[i] = orig + step;
    const StateVec fp = model.f(xp, u);
    xp[i] = orig - step;
    const StateVec fm = model.f(xp, u);
    xp[i] = orig;
    lin.A.col(i) = (fp - fm) * inv;
  }
  ControlVec up = u;
  for (int j = 0; j < m; ++j) {
    const double orig = up[j];
    up[j] = orig + step;
    const StateVec fp = model.f(x, up);
    up[j] = orig - step;
    const StateVec fm = model.f(x, up);
    up[j] = orig;
    lin.B.col(j) = (fp - fm) * inv;
  }
  return lin;
}

Linearization linearize(const DynamicsModel& model, const Equilibrium& at) { return jacobians(model, at.x, at.u); }

double task_cost(const DynamicsModel& model, const StateVec& x, const ControlVec& u) { return model.task_cost(x, u); }

// ---------------------------------------------------------------------------
// Cart-pole

namespace {

SafeSet cartpole_safe_set(const CartPoleParams& p) {
  SafeSet safe(4, {0});
  safe.add_bounds(0, -p.x_max, p.x_max);
  safe.add_bounds(2, -p.theta_max, p.theta_max);
  return safe;
}

StateVec cartpole_noise(double h) {
  StateVec w(4);
  w << 0.0, h, 0.0, h;
  return w;
}

}  // namespace

CartPole::CartPole(CartPoleParams params)
    : DynamicsModel(4, 1, params.dt, symmetric_bounds({params.force_max}), cartpole_safe_set(params),
                    DisturbanceSpec(cartpole_noise(params.noise))),
      params_(params) {
  StateVec goal(1);
  goal << params.x_target;
  set_goal(goal);
}

StateVec CartPole::f(const StateVec& s, const ControlVec& u) const {
  const auto& p = params_;
  const double total_mass = p.cart_mass + p.pole_mass;
  const double polemass_length = p.pole_mass * p.half_length;
  const double v = s[1];
  const double theta = s[2];
  const double omega = s[3];
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double temp = (u[0] + polemass_length * omega * omega * sin_t) / total_mass;
  const double theta_acc =
      (p.gravity * sin_t - cos_t * temp) / (p.half_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass));
  const double x_acc = temp - polemass_length * theta_acc * cos_t / total_mass;
  StateVec next(4);
  next << s[0] + p.dt * v, v + p.dt * x_acc, theta + p.dt * omega, omega + p.dt * theta_acc;
  return next;
}

Equilibrium CartPole::equilibrium(const StateVec& x) const {
  StateVec xe = StateVec::Zero(4);
  xe[0] = x[0];
  return {xe, ControlVec::Zero(1)};
}

double CartPole::task_cost(const StateVec& x, const ControlVec&) const {
  const double dx = x[0] - params_.x_target;
  return dx * dx + params_.angle_weight * x[2] * x[2];
}

Equilibrium CartPole::canonical_equilibrium(const Equilibrium&) const {
  return {StateVec::Zero(4), ControlVec::Zero(1)};
}

std::string CartPole::fingerprint() const {
  std::ostringstream os;
  os.precision(17);
  os << base_fingerprint() << ";mc=" << params_.cart_mass << ";mp=" << params_.pole_mass << ";l=" << params_.half_length
     << ";g=" << params_.gravity << ";theta_max=" << params_.theta_max << ";x_max=" << params_.x_max;
  return os.str();
}

double CartPole::energy(const StateVec& x) const {
  const auto& p = params_;
  const double total_mass = p.cart_mass + p.pole_mass;
  const double v = x[1];
  const double omega = x[3];
  const double c = std::cos(x[2]);
  const double kinetic = 0.5 * total_mass * v * v + p.pole_mass * p.half_length * c * v * omega +
                         (2.0 / 3.0) * p.pole_mass * p.half_length * p.half_length * omega * omega;
  return kinetic + p.pole_mass * p.gravity * p.half_length * c;
}

// ---------------------------------------------------------------------------
// Particles

ParticleBase::ParticleBase(ParticleParams params, Box control_bounds, std::vector<DiskObstacle> obstacles)
    : DynamicsModel(4, 2, params.dt, std::move(control_bounds), SafeSet(4, {0, 1}),
                    DisturbanceSpec([&] {
                      StateVec w(4);
                      w << 0.0, 0.0, params.noise, params.noise;
                      return w;
                    }())),
      params_(std::move(params)),
      obstacles_(std::move(obstacles)) {
  if (params_.goal.size() != 2) throw DimensionError("ParticleParams: goal must be 2-D");
  set_goal(params_.goal);
  set_safe_set(build_safe_set());
}

SafeSet ParticleBase::build_safe_set() const {
  SafeSet safe(4, {0, 1});
  safe.add_bounds(0, -params_.workspace, params_.workspace);
  safe.add_bounds(1, -params_.workspace, params_.workspace);
  for (const auto& o : obstacles_) safe.add_obstacle(o.center, o.radius + params_.radius);
  return safe;
}

void ParticleBase::set_obstacles(std::vector<DiskObstacle> obstacles) {
  obstacles_ = std::move(obstacles);
  set_safe_set(build_safe_set());
}

double ParticleBase::task_cost(const StateVec& x, const ControlVec&) const {
  const StateVec p = x.head(2);
  double cost = (p - params_.goal).squaredNorm();
  for (const auto& o : obstacles_) {
    const double d = std::min((p - o.center).norm(), 2.0 * o.radius);
    cost -= params_.obstacle_weight * d * d;
  }
  return cost;
}

std::string ParticleBase::particle_fingerprint() const {
  std::ostringstream os;
  os.precision(17);
  os << base_fingerprint() << ";radius=" << params_.radius << ";steer=" << params_.steer_max
     << ";workspace=" << params_.workspace;
  return os.str();
}

HolonomicParticle::HolonomicParticle(ParticleParams params, std::vector<DiskObstacle> obstacles)
    : ParticleBase(params, symmetric_bounds({params.accel_max, params.accel_max}), std::move(obstacles)) {}

StateVec HolonomicParticle::f(const StateVec& z, const ControlVec& u) const {
  const double dt = params().dt;
  StateVec next(4);
  next << z[0] + dt * z[2], z[1] + dt * z[3], z[2] + dt * u[0], z[3] + dt * u[1];
  return next;
}

Equilibrium HolonomicParticle::equilibrium(const StateVec& x) const {
  StateVec xe(4);
  xe << x[0], x[1], 0.0, 0.0;
  return {xe, ControlVec::Zero(2)};
}

Equilibrium HolonomicParticle::canonical_equilibrium(const Equilibrium&) const {
  return {StateVec::Zero(4), ControlVec::Zero(2)};
}

NonholonomicParticle::NonholonomicParticle(ParticleParams params, std::vector<DiskObstacle> obstacles)
    : ParticleBase(params, symmetric_bounds({params.accel_max, params.steer_max}), std::move(obstacles)) {}

StateVec NonholonomicParticle::f(const StateVec& z, const ControlVec& u) const {
  const double dt = params().dt;
  const double v = z[2];
  const double h = z[3];
  StateVec next(4);
  next << z[0] + dt * v * std::cos(h), z[1] + dt * v * std::sin(h), v + dt * u[0],
      h + dt * v * std::tan(u[1]) / params().radius;
  return next;
}

Box NonholonomicParticle::transport_deviation(const Box& deviation, const StateVec& from, const StateVec& to) const {
  const double c = std::cos(to[3] - from[3]);
  const double s = std::sin(to[3] - from[3]);
  StateVec lo = deviation.lo(), hi = deviation.hi();
  const double cx = 0.5 * (lo[0] + hi[0]), cy = 0.5 * (lo[1] + hi[1]);
  const double hx = 0.5 * (hi[0] - lo[0]), hy = 0.5 * (hi[1] - lo[1]);
  const double rx = std::abs(c) * hx + std::abs(s) * hy;
  const double ry = std::abs(s) * hx + std::abs(c) * hy;
  const double mx = c * cx - s * cy, my = s * cx + c * cy;
  lo[0] = mx - rx, hi[0] = mx + rx;
  lo[1] = my - ry, hi[1] = my + ry;
  return Box(lo, hi);
}

Equilibrium NonholonomicParticle::equilibrium(const StateVec& x) const {
  StateVec xe(4);
  xe << x[0], x[1], 0.0, x[3];
  return {xe, ControlVec::Zero(2)};
}

Equilibrium NonholonomicParticle::canonical_equilibrium(const Equilibrium& eq) const {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double bin_width = two_pi / kHeadingBins;
  double h = std::fmod(eq.x[3], two_pi);
  if (h < 0.0) h += two_pi;
  const double bin = std::floor(h / bin_width + 0.5);
  StateVec xe = StateVec::Zero(4);
  xe[3] = std::fmod(bin, kHeadingBins) * bin_width;
  return {xe, ControlVec::Zero(2)};
}

// ---------------------------------------------------------------------------

LinearizedModel::LinearizedModel(const DynamicsModel& base, const Equilibrium& at)
    : DynamicsModel(base.state_dim(), base.control_dim(), base.dt(), base.control_bounds(), base.safe_set(),
                    base.disturbance()),
      base_(base.clone()),
      base_name_(base.name()),
      anchor_(at),
      lin_(linearize(base, at)) {
  set_goal(base.goal());
}

StateVec LinearizedModel::f(const StateVec& x, const ControlVec& u) const {
  return anchor_.x + lin_.A * (x - anchor_.x) + lin_.B * (u - anchor_.u);
}

FunctionModel::FunctionModel(std::string name, int state_dim, int control_dim, double dt, Box control_bounds,
                             SafeSet safe_set, DisturbanceSpec disturbance, StepFn step, EquilibriumFn equilibrium)
    : DynamicsModel(state_dim, control_dim, dt, std::move(control_bounds), std::move(safe_set), std::move(disturbance)),
      name_(std::move(name)),
      step_(std::move(step)),
      equilibrium_(std::move(equilibrium)) {}

}  // namespace rmps
