#include "rmps/simd/kernels.hpp"

namespace rmps::simd::scalar {

Interval column_envelope(std::span<const double> values) {
  Interval out{values[0], values[0]};
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double v = values[i];
    out.lo = v < out.lo ? v : out.lo;
    out.hi = v > out.hi ? v : out.hi;
  }
  return out;
}

std::size_t count_in_box(std::span<const double* const> columns, std::size_t count,
                         std::span<const double> lo, std::span<const double> hi) {
  std::size_t inside = 0;
  for (std::size_t i = 0; i < count; ++i) {
    bool ok = true;
    for (std::size_t d = 0; d < columns.size(); ++d) {
      const double v = columns[d][i];
      ok = ok && (v >= lo[d]) && (v <= hi[d]);
    }
    inside += ok ? 1u : 0u;
  }
  return inside;
}

}  // namespace rmps::simd::scalar
