// Compiled with -mavx2; only reached after a runtime CPU check.
#include <immintrin.h>

#include <bit>

#include "rmps/simd/kernels.hpp"

namespace rmps::simd::avx2 {

Interval column_envelope(std::span<const double> values) {
  const std::size_t n = values.size();
  const double* p = values.data();
  if (n < 8) return scalar::column_envelope(values);

  __m256d vlo = _mm256_loadu_pd(p);
  __m256d vhi = vlo;
  std::size_t i = 4;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(p + i);
    vlo = _mm256_min_pd(v, vlo);
    vhi = _mm256_max_pd(v, vhi);
  }
  alignas(32) double lo4[4];
  alignas(32) double hi4[4];
  _mm256_store_pd(lo4, vlo);
  _mm256_store_pd(hi4, vhi);
  Interval out{lo4[0], hi4[0]};
  for (int k = 1; k < 4; ++k) {
    out.lo = lo4[k] < out.lo ? lo4[k] : out.lo;
    out.hi = hi4[k] > out.hi ? hi4[k] : out.hi;
  }
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
  for (; i + 4 <= count; i += 4) {
    __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(-1));
    for (std::size_t d = 0; d < dims; ++d) {
      const __m256d v = _mm256_loadu_pd(columns[d] + i);
      const __m256d ge = _mm256_cmp_pd(v, _mm256_set1_pd(lo[d]), _CMP_GE_OQ);
      const __m256d le = _mm256_cmp_pd(v, _mm256_set1_pd(hi[d]), _CMP_LE_OQ);
      mask = _mm256_and_pd(mask, _mm256_and_pd(ge, le));
    }
    inside += static_cast<std::size_t>(std::popcount(static_cast<unsigned>(_mm256_movemask_pd(mask))));
  }
  if (i < count) {
    const double* tail[16];
    for (std::size_t d = 0; d < dims && d < 16; ++d) tail[d] = columns[d] + i;
    if (dims <= 16) {
      inside += scalar::count_in_box(std::span<const double* const>(tail, dims), count - i, lo, hi);
    } else {
      for (std::size_t k = i; k < count; ++k) {
        bool ok = true;
        for (std::size_t d = 0; d < dims; ++d) ok = ok && columns[d][k] >= lo[d] && columns[d][k] <= hi[d];
        inside += ok ? 1u : 0u;
      }
    }
  }
  return inside;
}

}  // namespace rmps::simd::avx2
