#pragma once

// Axis-aligned boxes, safe sets (half-spaces plus circular obstacles) and the
// Minkowski operations used for constraint tightening.

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "rmps/types.hpp"

namespace rmps {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Closed box [lo_1, hi_1] x ... x [lo_n, hi_n]. Never empty: erosion signals
// emptiness through std::nullopt instead.
class Box {
 public:
  Box(StateVec lo, StateVec hi);

  static Box point(const StateVec& p) { return Box(p, p); }
  static Box zero(int dim);
  static Box symmetric(const StateVec& half_widths);

  int dim() const { return static_cast<int>(lo_.size()); }
  const StateVec& lo() const { return lo_; }
  const StateVec& hi() const { return hi_; }
  StateVec widths() const { return hi_ - lo_; }
  // Largest |offset| per dimension over the box, i.e. the corner farthest from
  // the origin projected on each axis.
  StateVec max_abs() const { return lo_.cwiseAbs().cwiseMax(hi_.cwiseAbs()); }

  bool contains(const StateVec& x) const;

  friend bool operator==(const Box& a, const Box& b) {
    return a.lo_.size() == b.lo_.size() && a.lo_ == b.lo_ && a.hi_ == b.hi_;
  }

 private:
  StateVec lo_;
  StateVec hi_;
};

// Smallest box containing all points. Throws on empty input or mixed dimensions.
Box box_from_points(std::span<const StateVec> points);
// Same fit over structure-of-arrays storage: columns[d] holds `count` values.
Box box_from_columns(std::span<const double* const> columns, std::size_t count);

bool box_contains(const Box& box, const StateVec& x);

// {c | {c} + margin is a subset of outer}; nullopt when some interval inverts.
std::optional<Box> erode_box(const Box& outer, const Box& margin);

Box minkowski_sum(const Box& a, const Box& b);

struct Halfspace {
  StateVec normal;  // a in a.x <= b
  double offset;    // b
};

struct Obstacle {
  StateVec center;  // in position coordinates
  double radius;
};

// x is safe iff every half-space holds and the position projection of x lies
// outside (or on the boundary of) every obstacle disk.
class SafeSet {
 public:
  SafeSet(int state_dim, std::vector<int> position_dims);

  void add_halfspace(StateVec normal, double offset);
  // Convenience: lo <= x[dim] <= hi.
  void add_bounds(int dim, double lo, double hi);
  void add_obstacle(StateVec center, double radius);

  int state_dim() const { return state_dim_; }
  const std::vector<int>& position_dims() const { return position_dims_; }
  const std::vector<Halfspace>& halfspaces() const { return halfspaces_; }
  const std::vector<Obstacle>& obstacles() const { return obstacles_; }

  StateVec position(const StateVec& x) const;
  bool contains(const StateVec& x) const;
  // Largest constraint violation (<= 0 when safe): a.x - b for half-spaces,
  // radius - distance for obstacles.
  double max_violation(const StateVec& x) const;

 private:
  int state_dim_;
  std::vector<int> position_dims_;
  std::vector<Halfspace> halfspaces_;
  std::vector<Obstacle> obstacles_;
};

bool safe_contains(const SafeSet& safe, const StateVec& x);

// Inner approximation of safe minus margin: half-spaces move inward by the
// support function of the margin, obstacle radii grow by the norm of the
// farthest margin corner in the position subspace.
SafeSet erode_safe_set(const SafeSet& safe, const Box& margin);

}  // namespace rmps
