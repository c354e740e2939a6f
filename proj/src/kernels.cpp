#include "artree/kernels.hpp"

#include <cmath>

namespace artree::kernels {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

double sumsq_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

void haar_level_scalar(const double* x, std::size_t pairs, double* detail,
                       double* approx) {
  for (std::size_t i = 0; i < pairs; ++i) {
    const double a = x[2 * i];
    const double b = x[2 * i + 1];
    detail[i] = (a - b) * kInvSqrt2;
    approx[i] = (a + b) * kInvSqrt2;
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{sumsq_scalar, haar_level_scalar, "scalar"};
  return table;
}

#if defined(__x86_64__) || defined(__i386__)
const KernelTable* avx2_table();  // kernels_avx2.cpp
#endif
#if defined(__aarch64__)
const KernelTable* neon_table();  // kernels_neon.cpp
#endif

const KernelTable* simd_table() {
#if defined(__x86_64__) || defined(__i386__)
  return avx2_table();
#elif defined(__aarch64__)
  return neon_table();
#else
  return nullptr;
#endif
}

const KernelTable& active_table() {
  static const KernelTable& table = []() -> const KernelTable& {
    if (const KernelTable* simd = simd_table()) return *simd;
    return scalar_table();
  }();
  return table;
}

}  // namespace artree::kernels
