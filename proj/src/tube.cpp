#include "rmps/tube.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"
#include "rmps/counters.hpp"
#include "rmps/parallel.hpp"

namespace rmps {

namespace {

constexpr int kFileVersion = 1;

void check_bound_args(int n, double delta) {
  if (n < 1) throw std::invalid_argument("sample bound: dimension must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("sample bound: delta must be in (0, 1)");
}

nlohmann::json vec_json(const StateVec& v) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

StateVec json_vec(const nlohmann::json& j) {
  StateVec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path, const char* kind, const std::string& fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.at("version").get<int>() != kFileVersion) throw std::runtime_error(path.string() + ": unsupported version");
  if (j.at("kind").get<std::string>() != kind) throw std::runtime_error(path.string() + ": wrong file kind");
  if (j.at("fingerprint").get<std::string>() != fingerprint) {
    throw std::runtime_error(path.string() + ": model fingerprint mismatch");
  }
  return j;
}

// FNV-1a, used only to derive stable cache file names.
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Column-major deviation storage: value(t, d, i) for rollout i.
class DeviationStore {
 public:
  DeviationStore(int steps, int dim, std::size_t samples)
      : steps_(steps), dim_(dim), samples_(samples), data_(static_cast<std::size_t>(steps) * dim * samples) {}

  double& at(int t, int d, std::size_t i) { return data_[(static_cast<std::size_t>(t) * dim_ + d) * samples_ + i]; }
  const double* column(int t, int d) const { return &data_[(static_cast<std::size_t>(t) * dim_ + d) * samples_]; }

  Box fit(int t) const {
    std::vector<const double*> cols(static_cast<std::size_t>(dim_));
    for (int d = 0; d < dim_; ++d) cols[d] = column(t, d);
    return box_from_columns(cols, samples_);
  }

 private:
  int steps_;
  int dim_;
  std::size_t samples_;
  std::vector<double> data_;
};

}  // namespace

double epsilon_from_samples(int n, long N, double delta) {
  check_bound_args(n, delta);
  if (N < n) throw std::invalid_argument("epsilon_from_samples: need N >= n");
  const double Nd = static_cast<double>(N);
  return std::sqrt((n * std::log(2.0 * std::numbers::e * Nd / n) + std::log(4.0 / delta)) / Nd);
}

double sample_count_rhs(int n, long N, double epsilon, double delta) {
  const double Nd = static_cast<double>(N);
  return (n * std::log(2.0 * std::numbers::e * Nd / n) + std::log(4.0 / delta)) / (epsilon * epsilon);
}

long solve_sample_count(int n, double epsilon, double delta) {
  check_bound_args(n, delta);
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("solve_sample_count: epsilon must be in (0, 1)");
  long N = n;
  for (int it = 0; it < 1000; ++it) {
    const long next = static_cast<long>(std::ceil(sample_count_rhs(n, N, epsilon, delta)));
    if (next == N) return N;
    N = next;
  }
  throw std::runtime_error("solve_sample_count: fixed-point iteration did not converge");
}

const char* tube_source_name(TubeSource s) {
  switch (s) {
    case TubeSource::kFresh: return "fresh";
    case TubeSource::kPrecomputed: return "precomputed";
    case TubeSource::kZero: return "zero";
  }
  return "unknown";
}

Tube zero_tube(int state_dim, int T) {
  Tube t;
  t.boxes.assign(static_cast<std::size_t>(T) + 1, Box::zero(state_dim));
  t.source = TubeSource::kZero;
  return t;
}

Tube tube_sum(const Tube& a, const Tube& b) {
  if (a.boxes.size() != b.boxes.size()) throw DimensionError("tube_sum: horizon mismatch");
  Tube out = a;
  for (std::size_t t = 0; t < a.boxes.size(); ++t) out.boxes[t] = minkowski_sum(a.boxes[t], b.boxes[t]);
  return out;
}

Tube estimate_reachable_sets(const DynamicsModel& model, const StateVec& x, const RefTraj& ref,
                             const ControllerFactory& factory, int T, std::uint64_t seed,
                             const TubeOptions& options) {
  if (options.samples < 1) throw std::invalid_argument("estimate_reachable_sets: need at least one sample");
  if (T < 0) throw std::invalid_argument("estimate_reachable_sets: negative horizon");
  const int n = model.state_dim();
  const auto N = static_cast<std::size_t>(options.samples);
  DeviationStore store(T + 1, n, N);
  parallel_for(N, options.jobs, [&](std::size_t i) {
    RandomStream rng(substream_seed(seed, i));
    auto controller = factory();
    StateVec xi = x + sample_disturbance(model, rng);
    for (int t = 0;; ++t) {
      const StateVec dev = xi - ref.state(t);
      for (int d = 0; d < n; ++d) store.at(t, d, i) = dev[d];
      if (t == T) break;
      xi = step_stochastic(model, xi, controller->act(xi), rng);
    }
  });
  counters::add_tube_rollouts(N);
  Tube tube;
  tube.boxes.reserve(static_cast<std::size_t>(T) + 1);
  for (int t = 0; t <= T; ++t) tube.boxes.push_back(store.fit(t));
  tube.samples = options.samples;
  tube.delta = options.delta;
  tube.epsilon = epsilon_from_samples(n, std::max<long>(options.samples, n), options.delta);
  tube.seed = seed;
  tube.source = TubeSource::kFresh;
  return tube;
}

InvariantSet estimate_invariant_set(const DynamicsModel& model, const Equilibrium& eq, const LqrSolution& lqr,
                                    int horizon, long N, std::uint64_t seed, int jobs) {
  if (horizon < 1) throw std::invalid_argument("estimate_invariant_set: horizon must be positive");
  if (N < 1) throw std::invalid_argument("estimate_invariant_set: need at least one sample");
  const int n = model.state_dim();
  const auto count = static_cast<std::size_t>(N);
  std::vector<StateVec> lo(count), hi(count);
  std::vector<char> unsafe(count, 0);
  parallel_for(count, jobs, [&](std::size_t i) {
    RandomStream rng(substream_seed(seed, i));
    StateVec x = eq.x + sample_disturbance(model, rng);
    StateVec l = x - eq.x;
    StateVec h = l;
    for (int k = 0; k < horizon; ++k) {
      if (!model.safe_set().contains(x)) unsafe[i] = 1;
      x = step_stochastic(model, x, stabilizing_control(model, lqr, eq, x), rng);
      const StateVec d = x - eq.x;
      l = l.cwiseMin(d);
      h = h.cwiseMax(d);
    }
    if (!model.safe_set().contains(x)) unsafe[i] = 1;
    lo[i] = l;
    hi[i] = h;
  });
  counters::add_invariant_rollouts(count);
  StateVec l = StateVec::Zero(n);
  StateVec h = StateVec::Zero(n);
  bool saw_unsafe = false;
  for (std::size_t i = 0; i < count; ++i) {
    l = l.cwiseMin(lo[i]);
    h = h.cwiseMax(hi[i]);
    saw_unsafe = saw_unsafe || unsafe[i];
  }
  InvariantSet out{Box(l, h), eq, horizon, N, saw_unsafe, seed, model.fingerprint()};
  return out;
}

void save_tube(const Tube& tube, const std::filesystem::path& path) {
  nlohmann::json j;
  j["version"] = kFileVersion;
  j["kind"] = "tube";
  j["fingerprint"] = tube.fingerprint;
  j["seed"] = tube.seed;
  j["epsilon"] = tube.epsilon;
  j["delta"] = tube.delta;
  j["samples"] = tube.samples;
  j["source"] = tube_source_name(tube.source);
  auto lo = nlohmann::json::array();
  auto hi = nlohmann::json::array();
  for (const auto& b : tube.boxes) {
    lo.push_back(vec_json(b.lo()));
    hi.push_back(vec_json(b.hi()));
  }
  j["lo"] = std::move(lo);
  j["hi"] = std::move(hi);
  write_json(j, path);
}

Tube load_tube(const std::filesystem::path& path, const std::string& expected_fingerprint) {
  const auto j = read_json(path, "tube", expected_fingerprint);
  Tube t;
  t.fingerprint = expected_fingerprint;
  t.seed = j.at("seed").get<std::uint64_t>();
  t.epsilon = j.at("epsilon").get<double>();
  t.delta = j.at("delta").get<double>();
  t.samples = j.at("samples").get<long>();
  const auto src = j.at("source").get<std::string>();
  t.source = src == "fresh" ? TubeSource::kFresh : src == "zero" ? TubeSource::kZero : TubeSource::kPrecomputed;
  const auto& lo = j.at("lo");
  const auto& hi = j.at("hi");
  if (lo.size() != hi.size() || lo.empty()) throw std::runtime_error(path.string() + ": malformed tube");
  for (std::size_t k = 0; k < lo.size(); ++k) t.boxes.emplace_back(json_vec(lo[k]), json_vec(hi[k]));
  return t;
}

void save_invariant_set(const InvariantSet& set, const std::filesystem::path& path) {
  nlohmann::json j;
  j["version"] = kFileVersion;
  j["kind"] = "invariant_set";
  j["fingerprint"] = set.fingerprint;
  j["seed"] = set.seed;
  j["horizon"] = set.horizon_used;
  j["samples"] = set.samples_used;
  j["saw_unsafe"] = set.saw_unsafe;
  j["x_e"] = vec_json(set.equilibrium.x);
  j["u_e"] = vec_json(set.equilibrium.u);
  j["lo"] = vec_json(set.box.lo());
  j["hi"] = vec_json(set.box.hi());
  write_json(j, path);
}

InvariantSet load_invariant_set(const std::filesystem::path& path, const std::string& expected_fingerprint) {
  const auto j = read_json(path, "invariant_set", expected_fingerprint);
  InvariantSet s{Box(json_vec(j.at("lo")), json_vec(j.at("hi"))),
                 Equilibrium{json_vec(j.at("x_e")), json_vec(j.at("u_e"))},
                 j.at("horizon").get<int>(),
                 j.at("samples").get<long>(),
                 j.at("saw_unsafe").get<bool>(),
                 j.at("seed").get<std::uint64_t>(),
                 expected_fingerprint};
  return s;
}

TubeCache::TubeCache(std::filesystem::path directory) : directory_(std::move(directory)) {}

std::filesystem::path TubeCache::file_for(const std::string& key) const {
  char name[32];
  std::snprintf(name, sizeof name, "tube-%016llx.json", static_cast<unsigned long long>(fnv1a(key)));
  return directory_ / name;
}

const Tube& TubeCache::get_or_compute(const std::string& key, const std::string& fingerprint,
                                      const std::function<Tube()>& compute) {
  std::lock_guard lock(mutex_);
  if (auto it = tubes_.find(key); it != tubes_.end()) return *it->second;
  std::unique_ptr<Tube> tube;
  if (!directory_.empty() && std::filesystem::exists(file_for(key))) {
    try {
      tube = std::make_unique<Tube>(load_tube(file_for(key), fingerprint));
    } catch (const std::exception&) {
      tube.reset();  // stale or foreign file: recompute and overwrite
    }
  }
  if (!tube) {
    tube = std::make_unique<Tube>(compute());
    tube->source = TubeSource::kPrecomputed;
    tube->fingerprint = fingerprint;
    if (!directory_.empty()) save_tube(*tube, file_for(key));
  }
  return *tubes_.emplace(key, std::move(tube)).first->second;
}

std::size_t TubeCache::size() const {
  std::lock_guard lock(mutex_);
  return tubes_.size();
}

CoverageStudy box_coverage_study(int n, double epsilon, double delta, int trials, long holdout,
                                 std::uint64_t seed) {
  if (n < 1 || n > kMaxStateDim) throw std::invalid_argument("box_coverage_study: bad dimension");
  if (trials < 1 || holdout < 1) throw std::invalid_argument("box_coverage_study: need trials and holdout samples");
  CoverageStudy study;
  study.samples = solve_sample_count(n, epsilon, delta);
  study.trials = trials;
  const auto N = static_cast<std::size_t>(study.samples);
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(n), std::vector<double>(N));
  std::vector<const double*> ptrs;
  for (const auto& c : cols) ptrs.push_back(c.data());
  for (int trial = 0; trial < trials; ++trial) {
    RandomStream rng(substream_seed(seed, static_cast<std::uint64_t>(trial)));
    for (std::size_t i = 0; i < N; ++i) {
      for (int d = 0; d < n; ++d) cols[static_cast<std::size_t>(d)][i] = rng.uniform01();
    }
    const Box box = box_from_columns(ptrs, N);
    long inside = 0;
    StateVec p(n);
    for (long k = 0; k < holdout; ++k) {
      for (int d = 0; d < n; ++d) p[d] = rng.uniform01();
      inside += box.contains(p);
    }
    const double coverage = static_cast<double>(inside) / holdout;
    study.min_coverage = std::min(study.min_coverage, coverage);
    if (coverage >= 1.0 - epsilon) ++study.passing;
  }
  return study;
}

}  // namespace rmps
