#if defined(__aarch64__)
#include <arm_neon.h>

#include "rmps/simd/kernels.hpp"

namespace rmps::simd::neon {

Interval column_envelope(std::span<const double> values) {
  const std::size_t n = values.size();
  const double* p = values.data();
  if (n < 4) return scalar::column_envelope(values);

  float64x2_t vlo = vld1q_f64(p);
  float64x2_t vhi = vlo;
  std::size_t i = 2;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t v = vld1q_f64(p + i);
    vlo = vminq_f64(vlo, v);
    vhi = vmaxq_f64(vhi, v);
  }
  Interval out{vminvq_f64(vlo), vmaxvq_f64(vhi)};
  for (; i < n; ++i) {
    out.lo = p[i] < out.lo ? p[i] : out.lo;
    out.hi = p[i] > out.hi ? p[i] : out.hi;
  }
  return out;
}

std::size_t count_in_box(std::span<const double* const> columns, std::size_t count,
                         std::span<const double> lo, std::span<const double> hi) {
  const std::size_t dims = columns.size();
  std::size_t inside = 0;
  std::size_t i = 0;
  for (; i + 2 <= count; i += 2) {
    uint64x2_t mask = vdupq_n_u64(~0ull);
    for (std::size_t d = 0; d < dims; ++d) {
      const float64x2_t v = vld1q_f64(columns[d] + i);
      mask = vandq_u64(mask, vcgeq_f64(v, vdupq_n_f64(lo[d])));
      mask = vandq_u64(mask, vcleq_f64(v, vdupq_n_f64(hi[d])));
    }
    inside += (vgetq_lane_u64(mask, 0) ? 1u : 0u) + (vgetq_lane_u64(mask, 1) ? 1u : 0u);
  }
  for (; i < count; ++i) {
    bool ok = true;
    for (std::size_t d = 0; d < dims; ++d) ok = ok && columns[d][i] >= lo[d] && columns[d][i] <= hi[d];
    inside += ok ? 1u : 0u;
  }
  return inside;
}

}  // namespace rmps::simd::neon
#endif
