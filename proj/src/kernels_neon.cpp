#include "artree/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace artree::kernels {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

double sumsq_neon(const double* x, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float64x2_t a = vld1q_f64(x + i);
    const float64x2_t b = vld1q_f64(x + i + 2);
    acc0 = vaddq_f64(acc0, vmulq_f64(a, a));
    acc1 = vaddq_f64(acc1, vmulq_f64(b, b));
  }
  double out = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) out += x[i] * x[i];
  return out;
}

void haar_level_neon(const double* x, std::size_t pairs, double* detail,
                     double* approx) {
  const float64x2_t scale = vdupq_n_f64(kInvSqrt2);
  std::size_t i = 0;
  for (; i + 2 <= pairs; i += 2) {
    const float64x2x2_t v = vld2q_f64(x + 2 * i);  // v.val[0]=even, v.val[1]=odd
    vst1q_f64(detail + i, vmulq_f64(vsubq_f64(v.val[0], v.val[1]), scale));
    vst1q_f64(approx + i, vmulq_f64(vaddq_f64(v.val[0], v.val[1]), scale));
  }
  for (; i < pairs; ++i) {
    const double a = x[2 * i];
    const double b = x[2 * i + 1];
    detail[i] = (a - b) * kInvSqrt2;
    approx[i] = (a + b) * kInvSqrt2;
  }
}

}  // namespace

const KernelTable* neon_table() {
  static const KernelTable table{sumsq_neon, haar_level_neon, "neon"};
  return &table;
}

}  // namespace artree::kernels

#endif
