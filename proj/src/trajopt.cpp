#include "rmps/trajopt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "rmps/counters.hpp"

namespace rmps {

namespace {

constexpr double kMuInitial = 1e-6;
constexpr double kMuMax = 1e10;
constexpr int kLineSearchSteps = 12;

// One optimal control problem: quadratic tracking cost toward (x_ref, u_ref),
// either a terminal equality x(T) = x_goal or a terminal quadratic
// (x(T) - x_goal)' P (x(T) - x_goal), and safe-set constraints on x(1..T).
struct Problem {
  const DynamicsModel* model = nullptr;
  StateVec x0;
  int T = 0;
  std::vector<StateVec> x_ref;    // T
  std::vector<ControlVec> u_ref;  // T
  StateMat Q;
  ControlMat R;
  bool terminal_equality = true;
  StateVec x_goal;
  StateMat P_terminal;
  std::vector<const SafeSet*> sets;  // T + 1, entry 0 unused
  double backoff = 0.0;
  ControlVec u_lo;
  ControlVec u_hi;

  ControlVec clamp(const ControlVec& u) const { return u.cwiseMax(u_lo).cwiseMin(u_hi); }
};

void set_control_bounds(Problem& p, const DynamicsModel& model, double scale) {
  const int m = model.control_dim();
  p.u_lo = model.control_bounds().lo().head(m) * scale;
  p.u_hi = model.control_bounds().hi().head(m) * scale;
}

struct Multipliers {
  std::vector<std::vector<double>> ineq;  // per step, halfspaces then obstacles
  StateVec terminal;
};

struct Trajectory {
  std::vector<StateVec> xs;
  std::vector<ControlVec> us;
};

std::size_t constraint_count(const SafeSet* s) {
  return s ? s->halfspaces().size() + s->obstacles().size() : 0;
}

// g <= 0 form with the solver back-off; gradient written to grad (state space).
double constraint_value(const SafeSet& set, std::size_t i, const StateVec& x, double backoff, StateVec* grad) {
  const auto& hs = set.halfspaces();
  if (i < hs.size()) {
    if (grad) *grad = hs[i].normal;
    return hs[i].normal.dot(x) - hs[i].offset + backoff;
  }
  const Obstacle& o = set.obstacles()[i - hs.size()];
  const auto& dims = set.position_dims();
  StateVec diff(static_cast<Eigen::Index>(dims.size()));
  for (std::size_t d = 0; d < dims.size(); ++d) diff[static_cast<Eigen::Index>(d)] = x[dims[d]] - o.center[static_cast<Eigen::Index>(d)];
  const double dist = diff.norm();
  if (grad) {
    grad->setZero(x.size());
    if (dist > 1e-12) {
      for (std::size_t d = 0; d < dims.size(); ++d) (*grad)[dims[d]] = -diff[static_cast<Eigen::Index>(d)] / dist;
    } else {
      (*grad)[dims[0]] = -1.0;
    }
  }
  return o.radius + backoff - dist;
}

class Solver {
 public:
  Solver(const Problem& p, const SolverOptions& opt) : p_(p), opt_(opt) {
    mult_.ineq.resize(static_cast<std::size_t>(p.T) + 1);
    for (int k = 1; k <= p.T; ++k) mult_.ineq[k].assign(constraint_count(p.sets[k]), 0.0);
    mult_.terminal = StateVec::Zero(p.x0.size());
  }

  Trajectory solve(std::vector<ControlVec> us) {
    for (auto& u : us) u = p_.clamp(u);
    traj_.us = std::move(us);
    traj_.xs = rollout(*p_.model, p_.x0, traj_.us);
    check_finite(traj_);
    rho_ = opt_.penalty_initial;
    const double rho_max = opt_.penalty_initial * std::pow(opt_.penalty_growth, opt_.outer_rounds - 1);
    double last_progress = std::numeric_limits<double>::infinity();
    for (int round = 0; round < opt_.outer_rounds + opt_.extra_rounds; ++round) {
      inner_loop();
      const double ineq = max_ineq_violation(traj_);
      const double term = terminal_error(traj_);
      // The back-off already keeps the true constraints satisfied once the
      // backed-off ones are met to half the margin.
      const bool ineq_ok = ineq <= 0.5 * opt_.backoff + 1e-12;
      const bool term_ok = !p_.terminal_equality || term <= opt_.terminal_target;
      if (ineq_ok && term_ok) break;
      // Past the escalation phase, only keep updating multipliers while they
      // still make clear progress.
      const double progress = std::max(ineq, 0.0) + term;
      if (round >= opt_.outer_rounds && progress > 0.5 * last_progress) break;
      last_progress = progress;
      update_multipliers();
      rho_ = std::min(rho_max, rho_ * opt_.penalty_growth);
    }
    return traj_;
  }

  double terminal_error(const Trajectory& tr) const {
    if (!p_.terminal_equality) return 0.0;
    return (tr.xs[p_.T] - p_.x_goal).cwiseAbs().maxCoeff();
  }

  double objective(const Trajectory& tr) const {
    double J = 0.0;
    for (int k = 0; k < p_.T; ++k) {
      const StateVec dx = tr.xs[k] - p_.x_ref[k];
      const ControlVec du = tr.us[k] - p_.u_ref[k];
      J += dx.dot(p_.Q * dx) + du.dot(p_.R * du);
    }
    const StateVec e = tr.xs[p_.T] - p_.x_goal;
    if (!p_.terminal_equality) J += e.dot(p_.P_terminal * e);
    return J;
  }

 private:
  static void check_finite(const Trajectory& tr) {
    for (const auto& x : tr.xs) {
      if (!x.allFinite()) throw NumericError("trajectory optimization: non-finite rollout");
    }
  }

  double merit(const Trajectory& tr) const {
    double J = objective(tr);
    for (int k = 1; k <= p_.T; ++k) {
      const SafeSet* s = p_.sets[k];
      if (!s) continue;
      const auto& lam = mult_.ineq[k];
      for (std::size_t i = 0; i < lam.size(); ++i) {
        const double g = constraint_value(*s, i, tr.xs[k], p_.backoff, nullptr);
        const double a = std::max(0.0, lam[i] + rho_ * g);
        J += (a * a - lam[i] * lam[i]) / (2.0 * rho_);
      }
    }
    if (p_.terminal_equality) {
      const StateVec h = tr.xs[p_.T] - p_.x_goal;
      J += mult_.terminal.dot(h) + 0.5 * rho_ * h.squaredNorm();
    }
    return J;
  }

  // Adds the penalty gradient and Gauss-Newton Hessian at step k.
  void add_penalty(int k, const StateVec& x, StateVec& gx, StateMat& Hxx) const {
    const SafeSet* s = p_.sets[k];
    if (!s) return;
    const auto& lam = mult_.ineq[k];
    StateVec grad;
    for (std::size_t i = 0; i < lam.size(); ++i) {
      const double g = constraint_value(*s, i, x, p_.backoff, &grad);
      const double a = lam[i] + rho_ * g;
      if (a <= 0.0) continue;
      gx += a * grad;
      Hxx += rho_ * grad * grad.transpose();
    }
  }

  double max_ineq_violation(const Trajectory& tr) const {
    double worst = -std::numeric_limits<double>::infinity();
    for (int k = 1; k <= p_.T; ++k) {
      const SafeSet* s = p_.sets[k];
      if (!s) continue;
      for (std::size_t i = 0; i < constraint_count(s); ++i) {
        worst = std::max(worst, constraint_value(*s, i, tr.xs[k], p_.backoff, nullptr));
      }
    }
    return worst;
  }

  void update_multipliers() {
    for (int k = 1; k <= p_.T; ++k) {
      const SafeSet* s = p_.sets[k];
      if (!s) continue;
      auto& lam = mult_.ineq[k];
      for (std::size_t i = 0; i < lam.size(); ++i) {
        lam[i] = std::max(0.0, lam[i] + rho_ * constraint_value(*s, i, traj_.xs[k], p_.backoff, nullptr));
      }
    }
    if (p_.terminal_equality) mult_.terminal += rho_ * (traj_.xs[p_.T] - p_.x_goal);
  }

  struct BoxQp {
    ControlVec du;
    std::array<bool, kMaxControlDim> free{};
  };

  // min 0.5 du'H du + g'du  s.t. lo <= du <= hi, by active-set enumeration
  // (control dimension is at most 4).
  static std::optional<BoxQp> solve_box_qp(const ControlMat& H, const ControlVec& g, const ControlVec& lo,
                                           const ControlVec& hi) {
    const int m = static_cast<int>(g.size());
    int combos = 1;
    for (int i = 0; i < m; ++i) combos *= 3;
    std::optional<BoxQp> best;
    double best_value = std::numeric_limits<double>::infinity();
    for (int c = 0; c < combos; ++c) {
      BoxQp cand;
      cand.du = ControlVec::Zero(m);
      std::array<int, kMaxControlDim> state{};
      int code = c;
      std::array<int, kMaxControlDim> free_idx{};
      int nf = 0;
      for (int i = 0; i < m; ++i) {
        state[i] = code % 3;
        code /= 3;
        cand.free[i] = state[i] == 0;
        if (state[i] == 0) free_idx[nf++] = i;
        else cand.du[i] = state[i] == 1 ? lo[i] : hi[i];
      }
      if (nf > 0) {
        ControlMat Hff(nf, nf);
        ControlVec rhs(nf);
        for (int a = 0; a < nf; ++a) {
          rhs[a] = -g[free_idx[a]];
          for (int b = 0; b < m; ++b) {
            if (!cand.free[b]) rhs[a] -= H(free_idx[a], b) * cand.du[b];
          }
          for (int b = 0; b < nf; ++b) Hff(a, b) = H(free_idx[a], free_idx[b]);
        }
        const ControlVec sol = Hff.ldlt().solve(rhs);
        for (int a = 0; a < nf; ++a) cand.du[free_idx[a]] = sol[a];
      }
      bool box_ok = true;
      for (int i = 0; i < m; ++i) {
        if (cand.du[i] < lo[i] - 1e-12 || cand.du[i] > hi[i] + 1e-12) box_ok = false;
      }
      if (!box_ok) continue;
      cand.du = cand.du.cwiseMax(lo).cwiseMin(hi);
      const ControlVec grad = H * cand.du + g;
      bool kkt = true;
      for (int i = 0; i < m; ++i) {
        const double scale = 1e-10 * (1.0 + std::abs(g[i]));
        if (state[i] == 1 && grad[i] < -scale) kkt = false;
        if (state[i] == 2 && grad[i] > scale) kkt = false;
      }
      if (kkt) return cand;
      const double value = 0.5 * cand.du.dot(H * cand.du) + g.dot(cand.du);
      if (value < best_value) {
        best_value = value;
        best = cand;
      }
    }
    return best;
  }

  bool backward(double mu) {
    const int T = p_.T;
    const int n = static_cast<int>(p_.x0.size());
    const int m = p_.model->control_dim();
    StateVec Vx;
    StateMat Vxx;
    if (p_.terminal_equality) {
      const StateVec h = traj_.xs[T] - p_.x_goal;
      Vx = mult_.terminal + rho_ * h;
      Vxx = StateMat::Identity(n, n) * rho_;
    } else {
      Vx = 2.0 * p_.P_terminal * (traj_.xs[T] - p_.x_goal);
      Vxx = 2.0 * p_.P_terminal;
    }
    add_penalty(T, traj_.xs[T], Vx, Vxx);
    expected_ = 0.0;
    for (int k = T - 1; k >= 0; --k) {
      const Linearization& lin = jac_[k];
      StateVec lx = 2.0 * p_.Q * (traj_.xs[k] - p_.x_ref[k]);
      StateMat lxx = 2.0 * p_.Q;
      if (k > 0) add_penalty(k, traj_.xs[k], lx, lxx);
      const ControlVec lu = 2.0 * p_.R * (traj_.us[k] - p_.u_ref[k]);
      const StateVec Qx = lx + lin.A.transpose() * Vx;
      const ControlVec Qu = lu + lin.B.transpose() * Vx;
      const StateMat Qxx = lxx + lin.A.transpose() * Vxx * lin.A;
      ControlMat Quu = 2.0 * p_.R + lin.B.transpose() * Vxx * lin.B;
      Quu = 0.5 * (Quu + Quu.transpose()).eval();
      const GainMat Qux = lin.B.transpose() * Vxx * lin.A;
      const ControlMat Hreg = Quu + mu * ControlMat::Identity(m, m);
      Eigen::LDLT<ControlMat> ldlt(Hreg);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0) return false;
      const ControlVec lo = p_.u_lo - traj_.us[k];
      const ControlVec hi = p_.u_hi - traj_.us[k];
      const auto qp = solve_box_qp(Hreg, Qu, lo.cwiseMin(0.0), hi.cwiseMax(0.0));
      if (!qp) return false;
      const ControlVec& kff = qp->du;
      GainMat K = GainMat::Zero(m, n);
      std::array<int, kMaxControlDim> free_idx{};
      int nf = 0;
      for (int i = 0; i < m; ++i) {
        if (qp->free[i]) free_idx[nf++] = i;
      }
      if (nf > 0) {
        ControlMat Hff(nf, nf);
        GainMat Qfx(nf, n);
        for (int a = 0; a < nf; ++a) {
          for (int b = 0; b < nf; ++b) Hff(a, b) = Hreg(free_idx[a], free_idx[b]);
          Qfx.row(a) = Qux.row(free_idx[a]);
        }
        const GainMat Kf = -Hff.ldlt().solve(Qfx);
        for (int a = 0; a < nf; ++a) K.row(free_idx[a]) = Kf.row(a);
      }
      k_[k] = kff;
      K_[k] = K;
      expected_ += kff.dot(Qu) + 0.5 * kff.dot(Quu * kff);
      Vx = Qx + K.transpose() * Quu * kff + K.transpose() * Qu + Qux.transpose() * kff;
      Vxx = Qxx + K.transpose() * Quu * K + K.transpose() * Qux + Qux.transpose() * K;
      Vxx = 0.5 * (Vxx + Vxx.transpose()).eval();
    }
    return true;
  }

  std::optional<Trajectory> forward(double alpha) const {
    Trajectory tr;
    tr.xs.resize(static_cast<std::size_t>(p_.T) + 1);
    tr.us.resize(static_cast<std::size_t>(p_.T));
    tr.xs[0] = p_.x0;
    for (int k = 0; k < p_.T; ++k) {
      const ControlVec u = traj_.us[k] + alpha * k_[k] + K_[k] * (tr.xs[k] - traj_.xs[k]);
      tr.us[k] = p_.clamp(u);
      tr.xs[k + 1] = p_.model->f(tr.xs[k], tr.us[k]);
      if (!tr.xs[k + 1].allFinite()) return std::nullopt;
    }
    return tr;
  }

  void inner_loop() {
    const int T = p_.T;
    jac_.resize(static_cast<std::size_t>(T));
    k_.resize(static_cast<std::size_t>(T));
    K_.resize(static_cast<std::size_t>(T));
    double J = merit(traj_);
    double mu = kMuInitial;
    bool need_jacobians = true;
    for (int it = 0; it < opt_.max_iterations; ++it) {
      if (need_jacobians) {
        for (int k = 0; k < T; ++k) jac_[k] = jacobians(*p_.model, traj_.xs[k], traj_.us[k]);
        need_jacobians = false;
      }
      if (!backward(mu)) {
        mu *= 10.0;
        if (mu > kMuMax) break;
        continue;
      }
      if (expected_ > -1e-14 * (1.0 + std::abs(J))) break;  // stationary
      bool accepted = false;
      double alpha = 1.0;
      for (int ls = 0; ls < kLineSearchSteps; ++ls, alpha *= 0.5) {
        auto cand = forward(alpha);
        if (!cand) continue;
        const double Jn = merit(*cand);
        if (Jn < J) {
          const double decrease = J - Jn;
          traj_ = std::move(*cand);
          J = Jn;
          accepted = true;
          need_jacobians = true;
          mu = std::max(kMuInitial, mu * 0.1);
          if (decrease <= opt_.cost_tol * (1.0 + std::abs(J))) return;
          break;
        }
      }
      if (!accepted) {
        mu *= 10.0;
        if (mu > kMuMax) break;
      }
    }
  }

  const Problem& p_;
  const SolverOptions& opt_;
  Multipliers mult_;
  Trajectory traj_;
  double rho_ = 0.0;
  double expected_ = 0.0;
  std::vector<Linearization> jac_;
  std::vector<ControlVec> k_;
  std::vector<GainMat> K_;
};

std::vector<const SafeSet*> expand_sets(std::span<const SafeSet> sets, int T) {
  if (sets.size() != 1 && sets.size() != static_cast<std::size_t>(T) + 1) {
    throw std::invalid_argument("plan_reference: expected 1 or T+1 constraint sets");
  }
  std::vector<const SafeSet*> out(static_cast<std::size_t>(T) + 1);
  for (int k = 0; k <= T; ++k) out[k] = sets.size() == 1 ? &sets[0] : &sets[k];
  return out;
}

std::vector<ControlVec> lqr_guess(const DynamicsModel& model, const StateVec& x, const Equilibrium& eq, int T,
                                  const CostWeights& weights) {
  std::vector<ControlVec> us(static_cast<std::size_t>(T), eq.u);
  LqrSolution lqr;
  try {
    lqr = lqr_at(model, eq, weights);
  } catch (const StabilizabilityError&) {
    return us;
  }
  StateVec xk = x;
  for (int k = 0; k < T; ++k) {
    us[k] = stabilizing_control(model, lqr, eq, xk);
    xk = model.f(xk, us[k]);
    if (!xk.allFinite()) {
      std::fill(us.begin(), us.end(), eq.u);
      break;
    }
  }
  return us;
}

}  // namespace

std::vector<StateVec> rollout(const DynamicsModel& model, const StateVec& x0, std::span<const ControlVec> controls) {
  std::vector<StateVec> xs;
  xs.reserve(controls.size() + 1);
  xs.push_back(x0);
  for (const auto& u : controls) xs.push_back(model.f(xs.back(), u));
  return xs;
}

PlanResult plan_reference(const DynamicsModel& model, const StateVec& x, const Equilibrium& eq, int T,
                          std::span<const SafeSet> tightened, const CostWeights& weights,
                          const SolverOptions& options) {
  if (T < 1) throw std::invalid_argument("plan_reference: horizon must be positive");
  if (x.size() != model.state_dim() || eq.x.size() != model.state_dim()) throw DimensionError("plan_reference: state");
  if (!x.allFinite()) throw NumericError("plan_reference: non-finite state");
  counters::add_plan_solve();

  Problem p;
  p.model = &model;
  p.x0 = x;
  p.T = T;
  p.x_ref.assign(static_cast<std::size_t>(T), eq.x);
  p.u_ref.assign(static_cast<std::size_t>(T), eq.u);
  p.Q = weights.Q;
  p.R = weights.R;
  p.terminal_equality = true;
  p.x_goal = eq.x;
  p.sets = expand_sets(tightened, T);
  p.backoff = options.backoff;
  set_control_bounds(p, model, options.control_scale);

  // The start state is fixed, so a violated first constraint cannot be repaired.
  const double v0 = p.sets[0]->max_violation(x);
  if (v0 > options.feasibility_tol) return Infeasible{v0};

  std::vector<ControlVec> init = options.initial_controls ? *options.initial_controls
                                                          : lqr_guess(model, x, eq, T, weights);
  if (init.size() != static_cast<std::size_t>(T)) {
    init.resize(static_cast<std::size_t>(T), eq.u);
  }
  Solver solver(p, options);
  const auto tr = solver.solve(std::move(init));

  double worst = solver.terminal_error(tr);
  for (int k = 0; k <= T; ++k) worst = std::max(worst, p.sets[k]->max_violation(tr.xs[k]));
  if (worst > options.feasibility_tol) return Infeasible{worst};

  RefTraj ref;
  ref.states = tr.xs;
  ref.controls = tr.us;
  ref.controls.push_back(eq.u);
  ref.equilibrium = eq;
  ref.horizon = T;
  ref.cost = solver.objective(tr);
  return ref;
}

PlanResult plan_reference_linear(const DynamicsModel& model, const Equilibrium& at, const StateVec& x,
                                 const Equilibrium& eq, int T, std::span<const SafeSet> tightened,
                                 const CostWeights& weights, const SolverOptions& options) {
  const LinearizedModel linear(model, at);
  return plan_reference(linear, x, eq, T, tightened, weights, options);
}

namespace {

Problem tracking_problem(const DynamicsModel& model, const StateVec& x_t, const RefTraj& ref, int t, int T,
                         const LqrSolution& lqr, const CostWeights& weights) {
  Problem p;
  p.model = &model;
  p.x0 = x_t;
  p.T = T;
  p.x_ref.reserve(static_cast<std::size_t>(T));
  p.u_ref.reserve(static_cast<std::size_t>(T));
  for (int k = 0; k < T; ++k) {
    p.x_ref.push_back(ref.state(t + k));
    p.u_ref.push_back(ref.control(t + k));
  }
  p.Q = weights.Q;
  p.R = weights.R;
  p.terminal_equality = false;
  p.x_goal = ref.equilibrium.x;
  p.P_terminal = lqr.P;
  p.sets.assign(static_cast<std::size_t>(T) + 1, &model.safe_set());
  p.backoff = 0.0;
  set_control_bounds(p, model, 1.0);
  return p;
}

}  // namespace

Tracker::Tracker(int horizon, CostWeights weights, LqrSolution lqr, SolverOptions options)
    : horizon_(horizon), weights_(std::move(weights)), lqr_(std::move(lqr)), options_(std::move(options)) {
  if (horizon < 1) throw std::invalid_argument("Tracker: horizon must be positive");
}

TrackResult Tracker::step(const DynamicsModel& model, const StateVec& x_t, const RefTraj& ref, int t) {
  counters::add_track_solve();
  const int T = horizon_;
  std::vector<ControlVec> init;
  if (warm_.size() == static_cast<std::size_t>(T)) {
    init.assign(warm_.begin() + 1, warm_.end());
    init.push_back(ref.equilibrium.u);
  } else {
    for (int k = 0; k < T; ++k) init.push_back(ref.control(t + k));
  }
  const Problem p = tracking_problem(model, x_t, ref, t, T, lqr_, weights_);
  TrackResult out;
  try {
    Solver solver(p, options_);
    const auto tr = solver.solve(std::move(init));
    out.control = tr.us[0];
    out.solution = tr.us;
    warm_ = tr.us;
  } catch (const NumericError&) {
    out.control = stabilizing_control(model, lqr_, ref.equilibrium, x_t);
    out.fell_back = true;
    warm_.clear();
  }
  return out;
}

ControlVec track_step(const DynamicsModel& model, const StateVec& x_t, const RefTraj& ref, int t, int T,
                      const LqrSolution& lqr, const CostWeights& weights) {
  Tracker tracker(T, weights, lqr);
  return tracker.step(model, x_t, ref, t).control;
}

double tracking_objective(const DynamicsModel& model, const StateVec& x_t, const RefTraj& ref, int t,
                          std::span<const ControlVec> controls, const LqrSolution& lqr, const CostWeights& weights) {
  const int T = static_cast<int>(controls.size());
  const Problem p = tracking_problem(model, x_t, ref, t, T, lqr, weights);
  SolverOptions opt;
  Solver solver(p, opt);
  Trajectory tr;
  tr.us.assign(controls.begin(), controls.end());
  tr.xs = rollout(model, x_t, controls);
  return solver.objective(tr);
}

}  // namespace rmps
