// SIMD kernel dispatch for the hot elementwise loops.
//
// Every kernel has a scalar reference implementation and, on x86-64 with
// AVX2, a vectorized variant selected once at startup. Set HNOSEG_SIMD=scalar
// to force the reference path. Elementwise kernels (add/sub/mul/scale/axpy/
// vmadd/selu) produce bit-identical results across variants; reductions
// (sum/dot) may differ by rounding since the accumulation order changes.

#pragma once

#include <cstddef>

namespace hnoseg::simd {

struct Kernels {
  // out[i] = a[i] op b[i]
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = c * a[i]
  void (*scale)(const double* a, double c, double* out, std::size_t n);
  // y[i] += c * x[i]
  void (*axpy)(double c, const double* x, double* y, std::size_t n);
  // y[i] += a[i] * b[i]
  void (*vmadd)(const double* a, const double* b, double* y, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  // out[i] = selu(x[i])
  void (*selu)(const double* x, double* out, std::size_t n);
  // gx[i] += g[i] * selu'(x[i])
  void (*selu_grad)(const double* x, const double* g, double* gx, std::size_t n);
};

// SELU self-normalizing constants.
inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

const Kernels& scalar_kernels();
#if defined(__x86_64__)
const Kernels& avx2_kernels();
#endif

// Kernel set chosen at first use (cpuid + HNOSEG_SIMD override).
const Kernels& active();
const char* active_name();

}  // namespace hnoseg::simd
