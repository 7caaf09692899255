#include "hnoseg/simd.hpp"

#include <cmath>

namespace hnoseg::simd {
namespace {

void add_s(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_s(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_s(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_s(const double* a, double c, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = c * a[i];
}

void axpy_s(double c, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += c * x[i];
}

void vmadd_s(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

double sum_s(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

double dot_s(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void selu_s(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = x[i] > 0.0 ? kSeluLambda * x[i]
                        : kSeluLambda * kSeluAlpha * (std::exp(x[i]) - 1.0);
  }
}

void selu_grad_s(const double* x, const double* g, double* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] > 0.0 ? kSeluLambda
                                : kSeluLambda * kSeluAlpha * std::exp(x[i]);
    gx[i] += g[i] * d;
  }
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels k{add_s,   sub_s, mul_s, scale_s,  axpy_s,
                         vmadd_s, sum_s, dot_s, selu_s,   selu_grad_s};
  return k;
}

}  // namespace hnoseg::simd
