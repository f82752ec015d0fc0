#include "rmps/shield.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "rmps/counters.hpp"

namespace rmps {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void append_bits(std::ostringstream& os, const StateVec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::uint64_t bits;
    const double d = v[i];
    std::memcpy(&bits, &d, sizeof bits);
    os << std::hex << bits << ',';
  }
  os << std::dec;
}

std::string cache_key(const DynamicsModel& model, const Equilibrium& eq, const BackupConfig& config) {
  std::ostringstream os;
  os << model.fingerprint() << "|x=";
  append_bits(os, eq.x);
  os << "|u=";
  append_bits(os, eq.u);
  os << "|Q=";
  for (Eigen::Index i = 0; i < config.weights.Q.size(); ++i) os << config.weights.Q.data()[i] << ',';
  os << "|R=";
  for (Eigen::Index i = 0; i < config.weights.R.size(); ++i) os << config.weights.R.data()[i] << ',';
  os << "|H=" << config.invariant_horizon << "|N=" << config.invariant_samples << "|seed=" << config.seed;
  return os.str();
}

std::vector<ControlVec> lqr_rollout_guess(const DynamicsModel& model, const LqrSolution& lqr, const Equilibrium& eq,
                                          const StateVec& x, int T) {
  std::vector<ControlVec> us;
  us.reserve(static_cast<std::size_t>(T));
  StateVec xk = x;
  for (int k = 0; k < T; ++k) {
    us.push_back(stabilizing_control(model, lqr, eq, xk));
    xk = model.f(xk, us.back());
    if (!xk.allFinite()) return std::vector<ControlVec>(static_cast<std::size_t>(T), eq.u);
  }
  return us;
}

SafeSet without_obstacles(const SafeSet& safe) {
  SafeSet out(safe.state_dim(), safe.position_dims());
  for (const auto& h : safe.halfspaces()) out.add_halfspace(h.normal, h.offset);
  return out;
}

}  // namespace

const char* shield_mode_name(ShieldMode m) {
  switch (m) {
    case ShieldMode::kNone: return "none";
    case ShieldMode::kNonrobust: return "nonrobust-mps";
    case ShieldMode::kRobust: return "rmps";
    case ShieldMode::kLinearRobust: return "lrmps";
  }
  return "unknown";
}

ShieldMode parse_shield_mode(const std::string& s) {
  if (s == "none") return ShieldMode::kNone;
  if (s == "nonrobust-mps") return ShieldMode::kNonrobust;
  if (s == "rmps") return ShieldMode::kRobust;
  if (s == "lrmps") return ShieldMode::kLinearRobust;
  throw std::invalid_argument("unknown shield mode: " + s);
}

const char* failure_reason_name(FailureReason r) {
  switch (r) {
    case FailureReason::kNone: return "none";
    case FailureReason::kUnsafeStep: return "unsafe-step";
    case FailureReason::kMissesInvariant: return "misses-invariant";
    case FailureReason::kPlanInfeasible: return "plan-infeasible";
  }
  return "unknown";
}

const char* decision_source_name(DecisionSource s) {
  switch (s) {
    case DecisionSource::kLearned: return "learned";
    case DecisionSource::kBackupContinued: return "backup-continued";
    case DecisionSource::kBackupInitialized: return "backup-initialized";
    case DecisionSource::kFault: return "fault";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

std::shared_ptr<const EquilibriumCache::Entry> EquilibriumCache::get(const DynamicsModel& model,
                                                                     const Equilibrium& eq,
                                                                     const BackupConfig& config) {
  const std::string key = cache_key(model, eq, config);
  std::lock_guard lock(mutex_);
  if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  LqrSolution lqr = lqr_at(model, eq, config.weights);
  // Entries are shared across obstacle layouts, so the estimate must not see obstacles.
  auto free = model.clone();
  free->set_safe_set(without_obstacles(model.safe_set()));
  InvariantSet invariant = estimate_invariant_set(*free, eq, lqr, config.invariant_horizon, config.invariant_samples,
                                                  mix_seed(config.seed, fnv1a(key)));
  auto entry = std::make_shared<const Entry>(Entry{std::move(lqr), std::move(invariant)});
  entries_.emplace(key, entry);
  return entry;
}

std::size_t EquilibriumCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

// ---------------------------------------------------------------------------

std::variant<BackupSession, Infeasible> BackupSession::initialize(std::shared_ptr<const DynamicsModel> model,
                                                                  const StateVec& x,
                                                                  std::span<const SafeSet> tightened,
                                                                  const BackupConfig& config,
                                                                  EquilibriumCache& cache) {
  const Equilibrium eq = equilibrium_map(*model, x);
  BackupSession s;
  s.entry_ = cache.get(*model, model->canonical_equilibrium(eq), config);
  s.model_ = model;
  s.planning_ = config.linear ? std::make_shared<LinearizedModel>(*model, eq) : model;
  s.config_ = config;

  SolverOptions opts = config.solver;
  opts.initial_controls = lqr_rollout_guess(*s.planning_, s.entry_->lqr, eq, x, config.horizon);
  auto plan = plan_reference(*s.planning_, x, eq, config.horizon, tightened, config.weights, opts);
  if (auto* inf = std::get_if<Infeasible>(&plan)) return *inf;
  s.ref_ = std::move(std::get<RefTraj>(plan));
  s.tracker_.emplace(config.horizon, config.weights, s.entry_->lqr, config.solver);
  return s;
}

ControlVec BackupSession::act(const StateVec& x) {
  if (t_ < ref_.horizon) {
    const TrackResult r = tracker_->step(*planning_, x, ref_, t_);
    if (r.fell_back) ++fallbacks_;
    ++t_;
    return model_->clamp_control(r.control);
  }
  return stabilizing_control(*model_, entry_->lqr, ref_.equilibrium, x);
}

BackupSession BackupSession::fresh_copy() const {
  BackupSession s = *this;
  s.t_ = 0;
  s.fallbacks_ = 0;
  s.tracker_->reset();
  return s;
}

// ---------------------------------------------------------------------------

Tube FreshTubeProvider::certify_tube(const StateVec& x, const BackupSession& session) {
  const std::uint64_t seed = mix_seed(seed_, calls_++);
  ControllerFactory factory = [&session] { return std::make_unique<SessionController>(session.fresh_copy()); };
  Tube tube = estimate_reachable_sets(session.model(), x, session.reference(), factory, session.horizon(), seed,
                                      options_);
  last_ = options_.samples;
  return tube;
}

Tube PrecomputedTubeProvider::certify_tube(const StateVec& x, const BackupSession& session) {
  if (!start_) return tube_;
  Tube moved = tube_;
  for (auto& b : moved.boxes) b = session.model().transport_deviation(b, *start_, x);
  return moved;
}

Tube linearization_mismatch_tube(const DynamicsModel& plant, const BackupSession& session) {
  const RefTraj& ref = session.reference();
  const Linearization lin = linearize(session.planning_model(), ref.equilibrium);
  const StateMat closed = lin.A - lin.B * session.lqr().K;
  const int n = plant.state_dim();
  Tube tube;
  tube.source = TubeSource::kZero;
  StateVec drift = StateVec::Zero(n);
  tube.boxes.push_back(Box::zero(n));
  for (int t = 0; t < ref.horizon; ++t) {
    drift = closed * drift + (plant.f(ref.states[t], ref.controls[t]) - ref.states[t + 1]);
    tube.boxes.emplace_back(drift.cwiseMin(0.0), drift.cwiseMax(0.0));
  }
  return tube;
}

Tube LinearMismatchTubeProvider::certify_tube(const StateVec& x, const BackupSession& session) {
  Tube base = base_->certify_tube(x, session);
  const Tube drift = linearization_mismatch_tube(session.model(), session);
  Tube out = tube_sum(base, drift);
  out.source = base.source;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<SafeSet> tightened_sets(const SafeSet& safe, const Tube& tube) {
  std::vector<SafeSet> out;
  out.reserve(tube.boxes.size());
  for (const auto& b : tube.boxes) out.push_back(erode_safe_set(safe, b));
  return out;
}

RecoverabilityChecker::RecoverabilityChecker(std::shared_ptr<const DynamicsModel> model, BackupConfig config,
                                             std::shared_ptr<TubeProvider> tubes,
                                             std::shared_ptr<EquilibriumCache> cache, double terminal_tol)
    : model_(std::move(model)),
      config_(std::move(config)),
      tubes_(std::move(tubes)),
      cache_(std::move(cache)),
      terminal_tol_(terminal_tol) {
  if (tubes_->planning_tube().horizon() != config_.horizon) {
    throw std::invalid_argument("RecoverabilityChecker: tube horizon does not match the backup horizon");
  }
  tightened_ = tightened_sets(model_->safe_set(), tubes_->planning_tube());
}

std::variant<BackupSession, Infeasible> RecoverabilityChecker::initialize(const StateVec& x) {
  auto s = BackupSession::initialize(model_, x, tightened_, config_, *cache_);
  if (std::holds_alternative<BackupSession>(s)) return s;
  const SafeSet& safe = model_->safe_set();
  return BackupSession::initialize(model_, x, std::span<const SafeSet>(&safe, 1), config_, *cache_);
}

RecoverabilityReport RecoverabilityChecker::certify(const StateVec& x, const BackupSession& session) {
  const Tube tube = tubes_->certify_tube(x, session);
  RecoverabilityReport r;
  r.tube_source = tube.source;
  r.rollouts = tubes_->last_rollouts();
  const int T = session.horizon();
  r.epsilon_total = (T + 1) * tube.epsilon;
  r.delta_total = (T + 1) * tube.delta;
  const RefTraj& ref = session.reference();
  const SafeSet& safe = model_->safe_set();
  for (int t = 0; t <= T; ++t) {
    if (!erode_safe_set(safe, tube.at(t)).contains(ref.state(t))) {
      r.reason = FailureReason::kUnsafeStep;
      r.failing_step = t;
      return r;
    }
  }
  const Box& g = session.invariant().box;
  const auto inner = erode_box(g, tube.at(T));
  const StateVec dev = ref.state(T) - ref.equilibrium.x;
  bool inside = inner.has_value();
  if (inside) {
    for (Eigen::Index i = 0; i < dev.size(); ++i) {
      if (dev[i] < inner->lo()[i] - terminal_tol_ || dev[i] > inner->hi()[i] + terminal_tol_) inside = false;
    }
  }
  // The invariant set is only useful if it stays inside the safe set around
  // this particular equilibrium.
  if (inside && !erode_safe_set(safe, g).contains(ref.equilibrium.x)) inside = false;
  if (!inside) {
    r.reason = FailureReason::kMissesInvariant;
    r.failing_step = T;
    return r;
  }
  r.recoverable = true;
  return r;
}

RecoverabilityCheck RecoverabilityChecker::check(const StateVec& x) {
  RecoverabilityCheck out;
  auto s = BackupSession::initialize(model_, x, tightened_, config_, *cache_);
  if (auto* inf = std::get_if<Infeasible>(&s)) {
    (void)inf;
    out.report.reason = FailureReason::kPlanInfeasible;
    out.report.tube_source = tubes_->planning_tube().source;
    return out;
  }
  out.session = std::move(std::get<BackupSession>(s));
  out.report = certify(x, *out.session);
  return out;
}

// ---------------------------------------------------------------------------

ShieldDecision Shield::act(const StateVec& x, const ControlVec& learned_action) {
  const DynamicsModel& model = checker_->model();
  ShieldDecision d;
  const ControlVec learned = model.clamp_control(learned_action);
  const auto first = checker_->check(step_nominal(model, x, learned));
  d.check_cost += first.report.rollouts;
  d.learned_recoverable = first.report.recoverable;
  if (first.report.recoverable) {
    active_.reset();
    d.action = learned;
    d.source = DecisionSource::kLearned;
    return d;
  }
  if (active_) {
    // The running session keeps control until the learned action is safe
    // again: it was certified when it started, and re-planning toward rho(x)
    // at every step would let the stop point drift with the noise.
    d.action = active_->act(x);
    d.source = DecisionSource::kBackupContinued;
    return d;
  }
  auto init = checker_->initialize(x);
  if (auto* s = std::get_if<BackupSession>(&init)) {
    active_ = std::move(*s);
    d.action = active_->act(x);
    d.source = DecisionSource::kBackupInitialized;
    return d;
  }
  // No plan exists from x at all: hold the stabilizer of rho(x) and report.
  active_.reset();
  const Equilibrium eq = equilibrium_map(model, x);
  const auto entry = checker_->cache().get(model, model.canonical_equilibrium(eq), checker_->config());
  d.action = stabilizing_control(model, entry->lqr, eq, x);
  d.source = DecisionSource::kFault;
  return d;
}

// ---------------------------------------------------------------------------

Tube precompute_tube(const DynamicsModel& model, const StateVec& x0, const BackupConfig& config, int T,
                     std::uint64_t seed, const TubeOptions& options) {
  auto free = model.clone();
  free->set_safe_set(without_obstacles(model.safe_set()));
  std::shared_ptr<const DynamicsModel> plant = free;
  EquilibriumCache cache;
  const SafeSet& safe = plant->safe_set();
  BackupConfig cfg = config;
  cfg.horizon = T;
  auto init = BackupSession::initialize(plant, x0, std::span<const SafeSet>(&safe, 1), cfg, cache);
  if (!std::holds_alternative<BackupSession>(init)) {
    throw std::runtime_error("precompute_tube: no feasible backup plan from the tube start state");
  }
  const BackupSession& session = std::get<BackupSession>(init);
  ControllerFactory factory = [&session] { return std::make_unique<SessionController>(session.fresh_copy()); };
  Tube tube = estimate_reachable_sets(*plant, x0, session.reference(), factory, T, seed, options);
  tube.source = TubeSource::kPrecomputed;
  tube.fingerprint = model.fingerprint();
  return tube;
}

}  // namespace rmps
