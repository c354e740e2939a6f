#include "artree/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

namespace artree::kernels {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

double sumsq_avx2(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d a = _mm256_loadu_pd(x + i);
    const __m256d b = _mm256_loadu_pd(x + i + 4);
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(a, a));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(b, b));
  }
  if (i + 4 <= n) {
    const __m256d a = _mm256_loadu_pd(x + i);
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(a, a));
    i += 4;
  }
  const __m256d acc = _mm256_add_pd(acc0, acc1);
  const __m128d lo = _mm256_castpd256_pd128(acc);
  const __m128d hi = _mm256_extractf128_pd(acc, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  double out = _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
  for (; i < n; ++i) out += x[i] * x[i];
  return out;
}

// Per-element identical to the scalar kernel: same subtract/add/multiply on
// each pair, only deinterleaved four pairs at a time.
void haar_level_avx2(const double* x, std::size_t pairs, double* detail,
                     double* approx) {
  const __m256d scale = _mm256_set1_pd(kInvSqrt2);
  std::size_t i = 0;
  for (; i + 4 <= pairs; i += 4) {
    const __m256d v0 = _mm256_loadu_pd(x + 2 * i);      // x0 x1 x2 x3
    const __m256d v1 = _mm256_loadu_pd(x + 2 * i + 4);  // x4 x5 x6 x7
    const __m256d even = _mm256_unpacklo_pd(v0, v1);    // x0 x4 x2 x6
    const __m256d odd = _mm256_unpackhi_pd(v0, v1);     // x1 x5 x3 x7
    const __m256d diff = _mm256_mul_pd(_mm256_sub_pd(even, odd), scale);
    const __m256d sum = _mm256_mul_pd(_mm256_add_pd(even, odd), scale);
    _mm256_storeu_pd(detail + i, _mm256_permute4x64_pd(diff, _MM_SHUFFLE(3, 1, 2, 0)));
    _mm256_storeu_pd(approx + i, _mm256_permute4x64_pd(sum, _MM_SHUFFLE(3, 1, 2, 0)));
  }
  for (; i < pairs; ++i) {
    const double a = x[2 * i];
    const double b = x[2 * i + 1];
    detail[i] = (a - b) * kInvSqrt2;
    approx[i] = (a + b) * kInvSqrt2;
  }
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{sumsq_avx2, haar_level_avx2, "avx2"};
  return __builtin_cpu_supports("avx2") ? &table : nullptr;
}

}  // namespace artree::kernels

#endif
