#include "rmps/counters.hpp"

namespace rmps::counters {

namespace {

std::atomic<std::uint64_t> g_plan{0};
std::atomic<std::uint64_t> g_track{0};
std::atomic<std::uint64_t> g_tube{0};
std::atomic<std::uint64_t> g_invariant{0};

}  // namespace

void add_plan_solve() { g_plan.fetch_add(1, std::memory_order_relaxed); }
void add_track_solve() { g_track.fetch_add(1, std::memory_order_relaxed); }
void add_tube_rollouts(std::uint64_t n) { g_tube.fetch_add(n, std::memory_order_relaxed); }
void add_invariant_rollouts(std::uint64_t n) { g_invariant.fetch_add(n, std::memory_order_relaxed); }

Snapshot snapshot() {
  return {g_plan.load(std::memory_order_relaxed), g_track.load(std::memory_order_relaxed),
          g_tube.load(std::memory_order_relaxed), g_invariant.load(std::memory_order_relaxed)};
}

}  // namespace rmps::counters
