#pragma once

// Backup controller sessions, the robust recoverability check and the shield
// decision rule, plus the non-robust and linear-model baselines.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>

#include "rmps/dynamics.hpp"
#include "rmps/lqr.hpp"
#include "rmps/trajopt.hpp"
#include "rmps/tube.hpp"

namespace rmps {

enum class ShieldMode { kNone, kNonrobust, kRobust, kLinearRobust };
const char* shield_mode_name(ShieldMode m);
ShieldMode parse_shield_mode(const std::string& s);  // throws std::invalid_argument

enum class TubeMode { kPrecomputed, kFresh };

struct BackupConfig {
  int horizon = 40;
  CostWeights weights = CostWeights::identity(4, 1);
  SolverOptions solver;
  // Plan and track with the dynamics linearized at the target equilibrium.
  bool linear = false;
  int invariant_horizon = 200;
  long invariant_samples = 1500;
  std::uint64_t seed = 1;
};

// LQR gains and invariant set per equilibrium class, shared by all sessions
// (and episodes) that use the same dynamics.
class EquilibriumCache {
 public:
  struct Entry {
    LqrSolution lqr;
    InvariantSet invariant;
  };

  // `eq` should already be canonical.
  std::shared_ptr<const Entry> get(const DynamicsModel& model, const Equilibrium& eq, const BackupConfig& config);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const Entry>> entries_;
};

// Internal state of one backup maneuver: target equilibrium, invariant set,
// reference trajectory, step counter and tracker warm start.
class BackupSession {
 public:
  // Plans from x toward rho(x) under the given constraint sets.
  static std::variant<BackupSession, Infeasible> initialize(std::shared_ptr<const DynamicsModel> model,
                                                            const StateVec& x, std::span<const SafeSet> tightened,
                                                            const BackupConfig& config, EquilibriumCache& cache);

  // Tracking control while t < T, LQR stabilizer afterwards.
  ControlVec act(const StateVec& x);
  // Same session rewound to t = 0 with an empty warm start.
  BackupSession fresh_copy() const;

  int t() const { return t_; }
  int horizon() const { return ref_.horizon; }
  const Equilibrium& equilibrium() const { return ref_.equilibrium; }
  const RefTraj& reference() const { return ref_; }
  const LqrSolution& lqr() const { return entry_->lqr; }
  const InvariantSet& invariant() const { return entry_->invariant; }
  const DynamicsModel& model() const { return *model_; }
  // Dynamics used for planning and tracking (the linearization for LRMPS).
  const DynamicsModel& planning_model() const { return *planning_; }
  int fallbacks() const { return fallbacks_; }

 private:
  BackupSession() = default;

  std::shared_ptr<const DynamicsModel> model_;
  std::shared_ptr<const DynamicsModel> planning_;
  std::shared_ptr<const EquilibriumCache::Entry> entry_;
  RefTraj ref_;
  std::optional<Tracker> tracker_;
  BackupConfig config_;
  int t_ = 0;
  int fallbacks_ = 0;
};

// Supplies the constraint-tightening tube before planning and the tube used
// to certify a planned session.
class TubeProvider {
 public:
  virtual ~TubeProvider() = default;
  // Tube used to tighten constraints for planning (may be a zero tube).
  virtual const Tube& planning_tube() const = 0;
  // Tube certifying the session that was planned from x.
  virtual Tube certify_tube(const StateVec& x, const BackupSession& session) = 0;
  // Rollouts performed by the last certify_tube call.
  virtual long last_rollouts() const { return 0; }
};

class ZeroTubeProvider final : public TubeProvider {
 public:
  ZeroTubeProvider(int state_dim, int T) : tube_(zero_tube(state_dim, T)) {}
  const Tube& planning_tube() const override { return tube_; }
  Tube certify_tube(const StateVec&, const BackupSession&) override { return tube_; }

 private:
  Tube tube_;
};

// With a start state, the tube is moved to each checked state through the
// model's transport_deviation; otherwise it is used as is.
class PrecomputedTubeProvider final : public TubeProvider {
 public:
  explicit PrecomputedTubeProvider(Tube tube, std::optional<StateVec> start = std::nullopt)
      : tube_(std::move(tube)), start_(std::move(start)) {}
  const Tube& planning_tube() const override { return tube_; }
  Tube certify_tube(const StateVec& x, const BackupSession& session) override;

 private:
  Tube tube_;
  std::optional<StateVec> start_;
};

// Runs the Monte Carlo estimate around every checked session. Planning is
// tightened with `planning` (typically a precomputed tube).
class FreshTubeProvider final : public TubeProvider {
 public:
  FreshTubeProvider(Tube planning, TubeOptions options, std::uint64_t seed)
      : planning_(std::move(planning)), options_(options), seed_(seed) {}
  const Tube& planning_tube() const override { return planning_; }
  Tube certify_tube(const StateVec& x, const BackupSession& session) override;
  long last_rollouts() const override { return last_; }

 private:
  Tube planning_;
  TubeOptions options_;
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
  long last_ = 0;
};

// Linear-model baseline: the sampled tube plus a bound on how far the true
// plant drifts from a reference planned on the linearization.
class LinearMismatchTubeProvider final : public TubeProvider {
 public:
  explicit LinearMismatchTubeProvider(std::unique_ptr<TubeProvider> base) : base_(std::move(base)) {}
  const Tube& planning_tube() const override { return base_->planning_tube(); }
  Tube certify_tube(const StateVec& x, const BackupSession& session) override;
  long last_rollouts() const override { return base_->last_rollouts(); }

 private:
  std::unique_ptr<TubeProvider> base_;
};

// Half-widths h(t+1) = |A - BK| h(t) + |f(xref(t), uref(t)) - xref(t+1)|:
// first-order envelope of the deviation between the true plant under the
// linear feedback and a reference planned on the linearization.
Tube linearization_mismatch_tube(const DynamicsModel& plant, const BackupSession& session);

enum class FailureReason { kNone, kUnsafeStep, kMissesInvariant, kPlanInfeasible };
const char* failure_reason_name(FailureReason r);

struct RecoverabilityReport {
  bool recoverable = false;
  std::optional<int> failing_step;
  FailureReason reason = FailureReason::kNone;
  TubeSource tube_source = TubeSource::kZero;
  double epsilon_total = 0.0;  // (T + 1) eps
  double delta_total = 0.0;    // (T + 1) delta
  long rollouts = 0;
};

// Constraint sets X_safe eroded by each tube box.
std::vector<SafeSet> tightened_sets(const SafeSet& safe, const Tube& tube);

struct RecoverabilityCheck {
  RecoverabilityReport report;
  std::optional<BackupSession> session;
};

class RecoverabilityChecker {
 public:
  RecoverabilityChecker(std::shared_ptr<const DynamicsModel> model, BackupConfig config,
                        std::shared_ptr<TubeProvider> tubes, std::shared_ptr<EquilibriumCache> cache,
                        double terminal_tol = 1e-4);

  // Plans a fresh session at x and checks the reference against the tube:
  // xref(t) in X_safe - B(t) for all t, xref(T) - x_e in G_e - B(T), and the
  // invariant box around x_e inside X_safe.
  RecoverabilityCheck check(const StateVec& x);
  // Verdict for an already planned session.
  RecoverabilityReport certify(const StateVec& x, const BackupSession& session);
  // Session at x: tightened plan first, untightened as a fallback.
  std::variant<BackupSession, Infeasible> initialize(const StateVec& x);

  const DynamicsModel& model() const { return *model_; }
  std::shared_ptr<const DynamicsModel> model_ptr() const { return model_; }
  const BackupConfig& config() const { return config_; }
  EquilibriumCache& cache() { return *cache_; }
  TubeProvider& tubes() { return *tubes_; }

 private:
  std::shared_ptr<const DynamicsModel> model_;
  BackupConfig config_;
  std::shared_ptr<TubeProvider> tubes_;
  std::shared_ptr<EquilibriumCache> cache_;
  double terminal_tol_;
  std::vector<SafeSet> tightened_;
};

enum class DecisionSource { kLearned, kBackupContinued, kBackupInitialized, kFault };
const char* decision_source_name(DecisionSource s);

struct ShieldDecision {
  ControlVec action;
  DecisionSource source = DecisionSource::kLearned;
  long check_cost = 0;  // rollouts spent on recoverability checks
  bool learned_recoverable = false;
};

// The shield decision rule. Keeps the active backup session between calls.
class Shield {
 public:
  explicit Shield(std::shared_ptr<RecoverabilityChecker> checker) : checker_(std::move(checker)) {}

  ShieldDecision act(const StateVec& x, const ControlVec& learned_action);
  void reset() { active_.reset(); }
  bool has_active_session() const { return active_.has_value(); }
  const std::optional<BackupSession>& active_session() const { return active_; }
  RecoverabilityChecker& checker() { return *checker_; }

 private:
  std::shared_ptr<RecoverabilityChecker> checker_;
  std::optional<BackupSession> active_;
};

// Adapter that drives a BackupSession through one tube rollout.
class SessionController final : public RolloutController {
 public:
  explicit SessionController(BackupSession session) : session_(std::move(session)) {}
  ControlVec act(const StateVec& x) override { return session_.act(x); }

 private:
  BackupSession session_;
};

// Precomputes the tube for one controller kind from x0 on a copy of `model`
// without obstacles, with untightened planning.
Tube precompute_tube(const DynamicsModel& model, const StateVec& x0, const BackupConfig& config, int T,
                     std::uint64_t seed, const TubeOptions& options);

}  // namespace rmps
