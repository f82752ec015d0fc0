#include "rmps/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rmps/simd/kernels.hpp"

namespace rmps {

namespace {

void require_same_dim(int a, int b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                         std::to_string(b) + ")");
  }
}

}  // namespace

Box::Box(StateVec lo, StateVec hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
  require_same_dim(static_cast<int>(lo_.size()), static_cast<int>(hi_.size()), "Box");
  for (Eigen::Index i = 0; i < lo_.size(); ++i) {
    if (!(lo_[i] <= hi_[i])) throw std::invalid_argument("Box: lo > hi in dimension " + std::to_string(i));
  }
}

Box Box::zero(int dim) { return Box(StateVec::Zero(dim), StateVec::Zero(dim)); }

Box Box::symmetric(const StateVec& half_widths) { return Box(-half_widths, half_widths); }

bool Box::contains(const StateVec& x) const {
  require_same_dim(dim(), static_cast<int>(x.size()), "box_contains");
  for (int i = 0; i < dim(); ++i) {
    if (!(x[i] >= lo_[i] && x[i] <= hi_[i])) return false;
  }
  return true;
}

Box box_from_points(std::span<const StateVec> points) {
  if (points.empty()) throw std::invalid_argument("box_from_points: empty point set");
  const int n = static_cast<int>(points.front().size());
  std::vector<std::vector<double>> columns(n, std::vector<double>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    require_same_dim(n, static_cast<int>(points[i].size()), "box_from_points");
    for (int d = 0; d < n; ++d) columns[d][i] = points[i][d];
  }
  std::vector<const double*> ptrs(n);
  for (int d = 0; d < n; ++d) ptrs[d] = columns[d].data();
  return box_from_columns(ptrs, points.size());
}

Box box_from_columns(std::span<const double* const> columns, std::size_t count) {
  if (count == 0) throw std::invalid_argument("box_from_columns: empty point set");
  const int n = static_cast<int>(columns.size());
  StateVec lo(n), hi(n);
  for (int d = 0; d < n; ++d) {
    const auto env = simd::column_envelope(std::span<const double>(columns[d], count));
    lo[d] = env.lo;
    hi[d] = env.hi;
  }
  return Box(lo, hi);
}

bool box_contains(const Box& box, const StateVec& x) { return box.contains(x); }

std::optional<Box> erode_box(const Box& outer, const Box& margin) {
  require_same_dim(outer.dim(), margin.dim(), "erode_box");
  StateVec lo = outer.lo() - margin.lo();
  StateVec hi = outer.hi() - margin.hi();
  for (int i = 0; i < outer.dim(); ++i) {
    if (lo[i] > hi[i]) return std::nullopt;
  }
  return Box(lo, hi);
}

Box minkowski_sum(const Box& a, const Box& b) {
  require_same_dim(a.dim(), b.dim(), "minkowski_sum");
  return Box(a.lo() + b.lo(), a.hi() + b.hi());
}

SafeSet::SafeSet(int state_dim, std::vector<int> position_dims)
    : state_dim_(state_dim), position_dims_(std::move(position_dims)) {
  for (int d : position_dims_) {
    if (d < 0 || d >= state_dim_) throw std::invalid_argument("SafeSet: position dim out of range");
  }
}

void SafeSet::add_halfspace(StateVec normal, double offset) {
  require_same_dim(state_dim_, static_cast<int>(normal.size()), "SafeSet::add_halfspace");
  halfspaces_.push_back({std::move(normal), offset});
}

void SafeSet::add_bounds(int dim, double lo, double hi) {
  StateVec a = StateVec::Zero(state_dim_);
  a[dim] = 1.0;
  add_halfspace(a, hi);
  add_halfspace(-a, -lo);
}

void SafeSet::add_obstacle(StateVec center, double radius) {
  require_same_dim(static_cast<int>(position_dims_.size()), static_cast<int>(center.size()),
                   "SafeSet::add_obstacle");
  if (!(radius > 0.0)) throw std::invalid_argument("SafeSet: obstacle radius must be positive");
  obstacles_.push_back({std::move(center), radius});
}

StateVec SafeSet::position(const StateVec& x) const {
  StateVec p(static_cast<Eigen::Index>(position_dims_.size()));
  for (std::size_t i = 0; i < position_dims_.size(); ++i) p[static_cast<Eigen::Index>(i)] = x[position_dims_[i]];
  return p;
}

bool SafeSet::contains(const StateVec& x) const {
  require_same_dim(state_dim_, static_cast<int>(x.size()), "safe_contains");
  for (const auto& h : halfspaces_) {
    if (!(h.normal.dot(x) <= h.offset)) return false;
  }
  if (!obstacles_.empty()) {
    const StateVec p = position(x);
    for (const auto& o : obstacles_) {
      if (!((p - o.center).squaredNorm() >= o.radius * o.radius)) return false;
    }
  }
  return true;
}

double SafeSet::max_violation(const StateVec& x) const {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& h : halfspaces_) worst = std::max(worst, h.normal.dot(x) - h.offset);
  if (!obstacles_.empty()) {
    const StateVec p = position(x);
    for (const auto& o : obstacles_) worst = std::max(worst, o.radius - (p - o.center).norm());
  }
  return worst;
}

bool safe_contains(const SafeSet& safe, const StateVec& x) { return safe.contains(x); }

SafeSet erode_safe_set(const SafeSet& safe, const Box& margin) {
  require_same_dim(safe.state_dim(), margin.dim(), "erode_safe_set");
  SafeSet out(safe.state_dim(), safe.position_dims());
  for (const auto& h : safe.halfspaces()) {
    double support = 0.0;
    for (int i = 0; i < margin.dim(); ++i) {
      support += std::max(h.normal[i] * margin.lo()[i], h.normal[i] * margin.hi()[i]);
    }
    out.add_halfspace(h.normal, h.offset - support);
  }
  if (!safe.obstacles().empty()) {
    const StateVec reach = safe.position(margin.max_abs());
    const double inflate = reach.norm();
    for (const auto& o : safe.obstacles()) out.add_obstacle(o.center, o.radius + inflate);
  }
  return out;
}

}  // namespace rmps
