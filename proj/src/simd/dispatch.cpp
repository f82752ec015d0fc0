#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "rmps/simd/kernels.hpp"

namespace rmps::simd {
namespace {

Backend detect() {
  if (const char* env = std::getenv("RMPS_SIMD")) {
    const std::string_view want(env);
    if (want == "scalar") return Backend::kScalar;
    if (want == "avx2" && backend_available(Backend::kAvx2)) return Backend::kAvx2;
    if (want == "neon" && backend_available(Backend::kNeon)) return Backend::kNeon;
  }
  if (backend_available(Backend::kAvx2)) return Backend::kAvx2;
  if (backend_available(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

std::atomic<int>& forced() {
  static std::atomic<int> value{-1};
  return value;
}

}  // namespace

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar: return "scalar";
    case Backend::kAvx2: return "avx2";
    case Backend::kNeon: return "neon";
  }
  return "unknown";
}

bool backend_available(Backend backend) {
  switch (backend) {
    case Backend::kScalar: return true;
    case Backend::kAvx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Backend::kNeon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend active_backend() {
  const int f = forced().load(std::memory_order_relaxed);
  if (f >= 0) return static_cast<Backend>(f);
  static const Backend detected = detect();
  return detected;
}

void force_backend(Backend backend) {
  if (!backend_available(backend)) {
    throw std::runtime_error("SIMD backend not available: " + std::string(backend_name(backend)));
  }
  forced().store(static_cast<int>(backend), std::memory_order_relaxed);
}

void reset_backend() { forced().store(-1, std::memory_order_relaxed); }

Interval column_envelope(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("column_envelope: empty column");
  switch (active_backend()) {
#if defined(__x86_64__) || defined(_M_X64)
    case Backend::kAvx2: return avx2::column_envelope(values);
#endif
#if defined(__aarch64__)
    case Backend::kNeon: return neon::column_envelope(values);
#endif
    default: return scalar::column_envelope(values);
  }
}

std::size_t count_in_box(std::span<const double* const> columns, std::size_t count,
                         std::span<const double> lo, std::span<const double> hi) {
  if (lo.size() != columns.size() || hi.size() != columns.size()) {
    throw std::invalid_argument("count_in_box: dimension mismatch");
  }
  switch (active_backend()) {
#if defined(__x86_64__) || defined(_M_X64)
    case Backend::kAvx2: return avx2::count_in_box(columns, count, lo, hi);
#endif
#if defined(__aarch64__)
    case Backend::kNeon: return neon::count_in_box(columns, count, lo, hi);
#endif
    default: return scalar::count_in_box(columns, count, lo, hi);
  }
}

}  // namespace rmps::simd
