#pragma once

// Sample-complexity bound for box hypotheses, Monte Carlo tube estimation
// around a reference trajectory, the invariant-set heuristic and a cache for
// tubes precomputed from a fixed start state.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "rmps/dynamics.hpp"
#include "rmps/geometry.hpp"
#include "rmps/lqr.hpp"
#include "rmps/trajopt.hpp"

namespace rmps {

// sqrt((n ln(2eN/n) + ln(4/delta)) / N): bound on the probability that a
// fresh sample falls outside the smallest box around N samples in R^n.
double epsilon_from_samples(int n, long N, double delta);

// Smallest N reached by iterating N <- ceil((n ln(2eN/n) + ln(4/delta)) / eps^2)
// from N = n. Throws std::runtime_error if it fails to settle.
long solve_sample_count(int n, double epsilon, double delta);

// Right-hand side of the sample-count inequality for a given N.
double sample_count_rhs(int n, long N, double epsilon, double delta);

enum class TubeSource { kFresh, kPrecomputed, kZero };
const char* tube_source_name(TubeSource s);

// Boxes B(0..T) over deviations x(t) - xref(t), with the per-step (eps, delta)
// certificate they were built for.
struct Tube {
  std::vector<Box> boxes;
  double epsilon = 0.0;
  double delta = 0.0;
  long samples = 0;
  TubeSource source = TubeSource::kFresh;
  std::uint64_t seed = 0;
  std::string fingerprint;

  int horizon() const { return static_cast<int>(boxes.size()) - 1; }
  // Box for step t; steps past the horizon reuse the last box.
  const Box& at(int t) const { return boxes[static_cast<std::size_t>(std::min(t, horizon()))]; }
};

Tube zero_tube(int state_dim, int T);
// Elementwise Minkowski sum of two tubes of equal horizon.
Tube tube_sum(const Tube& a, const Tube& b);

// A controller instance driven through one closed-loop rollout.
class RolloutController {
 public:
  virtual ~RolloutController() = default;
  virtual ControlVec act(const StateVec& x) = 0;
};
using ControllerFactory = std::function<std::unique_ptr<RolloutController>()>;

struct TubeOptions {
  long samples = 1500;
  double delta = 0.01;
  int jobs = 1;
};

// N closed-loop rollouts from x + w(0), each with a fresh controller from
// `factory` and independent per-step noise; rollout i draws from the
// substream seeded with seed ^ i. Boxes are fit to x_i(t) - ref.state(t).
Tube estimate_reachable_sets(const DynamicsModel& model, const StateVec& x, const RefTraj& ref,
                             const ControllerFactory& factory, int T, std::uint64_t seed,
                             const TubeOptions& options = {});

struct InvariantSet {
  Box box;  // deviations around the equilibrium
  Equilibrium equilibrium;
  int horizon_used = 0;
  long samples_used = 0;
  bool saw_unsafe = false;  // some sampled state left the safe set
  std::uint64_t seed = 0;
  std::string fingerprint;
};

// Rolls N noisy trajectories under the LQR stabilizer from x_e + w for
// `horizon` steps and returns the envelope of all visited deviations.
InvariantSet estimate_invariant_set(const DynamicsModel& model, const Equilibrium& eq, const LqrSolution& lqr,
                                    int horizon, long N, std::uint64_t seed, int jobs = 1);

// Box-coverage experiment on the uniform distribution over [0,1]^n: each
// trial fits a box to N = solve_sample_count(n, epsilon, delta) samples and
// measures its coverage on `holdout` fresh samples.
struct CoverageStudy {
  long samples = 0;
  int trials = 0;
  int passing = 0;  // trials with coverage >= 1 - epsilon
  double min_coverage = 1.0;
  double pass_fraction() const { return trials ? static_cast<double>(passing) / trials : 0.0; }
};
CoverageStudy box_coverage_study(int n, double epsilon, double delta, int trials, long holdout, std::uint64_t seed);

// Versioned JSON files; loading checks the model fingerprint.
void save_tube(const Tube& tube, const std::filesystem::path& path);
Tube load_tube(const std::filesystem::path& path, const std::string& expected_fingerprint);
void save_invariant_set(const InvariantSet& set, const std::filesystem::path& path);
InvariantSet load_invariant_set(const std::filesystem::path& path, const std::string& expected_fingerprint);

// Thread-safe memo of precomputed tubes keyed by a caller-provided string
// (model fingerprint, start state, horizon, samples, seed, controller kind).
// When a directory is set, tubes are also persisted there.
class TubeCache {
 public:
  explicit TubeCache(std::filesystem::path directory = {});

  const Tube& get_or_compute(const std::string& key, const std::string& fingerprint,
                             const std::function<Tube()>& compute);
  std::size_t size() const;
  std::filesystem::path file_for(const std::string& key) const;

 private:
  std::filesystem::path directory_;
  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<Tube>> tubes_;
};

}  // namespace rmps
