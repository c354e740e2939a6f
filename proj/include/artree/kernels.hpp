#pragma once

#include <cstddef>

namespace artree::kernels {

// Hot inner loops of feature extraction, dispatched at runtime to the widest
// instruction set the CPU supports. Every variant must compute the same
// function as the scalar reference; the test suite checks equivalence.
struct KernelTable {
  // Sum of squares of n doubles.
  double (*sumsq)(const double* x, std::size_t n);
  // One orthonormal Haar level over `pairs` adjacent sample pairs:
  //   detail[i] = (x[2i] - x[2i+1]) / sqrt(2)
  //   approx[i] = (x[2i] + x[2i+1]) / sqrt(2)
  void (*haar_level)(const double* x, std::size_t pairs, double* detail,
                     double* approx);
  const char* name;
};

const KernelTable& scalar_table();

// Widest SIMD variant usable on this CPU, or nullptr if none.
const KernelTable* simd_table();

// simd_table() if available, scalar otherwise. Resolved once.
const KernelTable& active_table();

inline double sumsq(const double* x, std::size_t n) {
  return active_table().sumsq(x, n);
}

inline void haar_level(const double* x, std::size_t pairs, double* detail,
                       double* approx) {
  active_table().haar_level(x, pairs, detail, approx);
}

}  // namespace artree::kernels
