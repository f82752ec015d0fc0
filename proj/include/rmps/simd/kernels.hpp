#pragma once

// Data-parallel inner loops used by box fitting and coverage counting.
//
// Every kernel has a scalar reference implementation; vectorized variants
// (AVX2 on x86-64, NEON on AArch64) must return bit-identical results. The
// variant is picked once at runtime from the CPU feature set and can be
// pinned with the RMPS_SIMD environment variable ("scalar", "avx2", "neon")
// or with force_backend() in tests.

#include <cstddef>
#include <span>
#include <string_view>

namespace rmps::simd {

enum class Backend { kScalar, kAvx2, kNeon };

struct Interval {
  double lo;
  double hi;
};

std::string_view backend_name(Backend backend);
bool backend_available(Backend backend);
Backend active_backend();
// Pins the backend for the whole process. Throws if it is unavailable.
void force_backend(Backend backend);
// Returns to CPU-based selection.
void reset_backend();

// Min/max of a non-empty column.
Interval column_envelope(std::span<const double> values);

// Number of points i (0 <= i < count) such that lo[d] <= columns[d][i] <= hi[d]
// for every dimension d. Columns are structure-of-arrays storage.
std::size_t count_in_box(std::span<const double* const> columns, std::size_t count,
                         std::span<const double> lo, std::span<const double> hi);

namespace scalar {
Interval column_envelope(std::span<const double> values);
std::size_t count_in_box(std::span<const double* const> columns, std::size_t count,
                         std::span<const double> lo, std::span<const double> hi);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
Interval column_envelope(std::span<const double> values);
std::size_t count_in_box(std::span<const double* const> columns, std::size_t count,
                         std::span<const double> lo, std::span<const double> hi);
}  // namespace avx2
#endif

#if defined(__aarch64__)
namespace neon {
Interval column_envelope(std::span<const double> values);
std::size_t count_in_box(std::span<const double* const> columns, std::size_t count,
                         std::span<const double> lo, std::span<const double> hi);
}  // namespace neon
#endif

}  // namespace rmps::simd
