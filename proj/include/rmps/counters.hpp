#pragma once

// Process-wide call counters. Tests use them to check which machinery a code
// path touched; they are not used for control decisions.

#include <atomic>
#include <cstdint>

namespace rmps::counters {

struct Snapshot {
  std::uint64_t plan_solves;
  std::uint64_t track_solves;
  std::uint64_t tube_rollouts;
  std::uint64_t invariant_rollouts;
};

void add_plan_solve();
void add_track_solve();
void add_tube_rollouts(std::uint64_t n);
void add_invariant_rollouts(std::uint64_t n);
Snapshot snapshot();

}  // namespace rmps::counters
