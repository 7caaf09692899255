// AVX2 kernel variants. Compiled with -mavx2 in its own translation unit;
// only reached after the runtime cpuid check in simd_dispatch.cpp.
//
// Elementwise kernels use separate mul/add (no FMA contraction) so results
// stay bit-identical to the scalar reference.

#if defined(__x86_64__)

#include "hnoseg/simd.hpp"

#include <immintrin.h>

#include <cmath>

namespace hnoseg::simd {
namespace {

void add_v(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_v(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_v(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_v(const double* a, double c, double* out, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(vc, _mm256_loadu_pd(a + i)));
  }
  for (; i < n; ++i) out[i] = c * a[i];
}

void axpy_v(double c, const double* x, double* y, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p = _mm256_mul_pd(vc, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), p));
  }
  for (; i < n; ++i) y[i] += c * x[i];
}

void vmadd_v(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p =
        _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), p));
  }
  for (; i < n; ++i) y[i] += a[i] * b[i];
}

double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double sum_v(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

double dot_v(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_add_pd(
        acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

// Positive lanes vectorized; negative lanes take the scalar exp path so the
// result matches the reference bit for bit.
void selu_v(const double* x, double* out, std::size_t n) {
  const __m256d vlambda = _mm256_set1_pd(kSeluLambda);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d mask = _mm256_cmp_pd(vx, zero, _CMP_GT_OQ);
    if (_mm256_movemask_pd(mask) == 0xF) {
      _mm256_storeu_pd(out + i, _mm256_mul_pd(vlambda, vx));
    } else {
      for (std::size_t j = i; j < i + 4; ++j) {
        out[j] = x[j] > 0.0
                     ? kSeluLambda * x[j]
                     : kSeluLambda * kSeluAlpha * (std::exp(x[j]) - 1.0);
      }
    }
  }
  for (; i < n; ++i) {
    out[i] = x[i] > 0.0 ? kSeluLambda * x[i]
                        : kSeluLambda * kSeluAlpha * (std::exp(x[i]) - 1.0);
  }
}

void selu_grad_v(const double* x, const double* g, double* gx, std::size_t n) {
  const __m256d vlambda = _mm256_set1_pd(kSeluLambda);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d mask = _mm256_cmp_pd(vx, zero, _CMP_GT_OQ);
    if (_mm256_movemask_pd(mask) == 0xF) {
      const __m256d p = _mm256_mul_pd(vlambda, _mm256_loadu_pd(g + i));
      _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), p));
    } else {
      for (std::size_t j = i; j < i + 4; ++j) {
        const double d = x[j] > 0.0
                             ? kSeluLambda
                             : kSeluLambda * kSeluAlpha * std::exp(x[j]);
        gx[j] += g[j] * d;
      }
    }
  }
  for (; i < n; ++i) {
    const double d =
        x[i] > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x[i]);
    gx[i] += g[i] * d;
  }
}

}  // namespace

const Kernels& avx2_kernels() {
  static const Kernels k{add_v,   sub_v, mul_v, scale_v, axpy_v,
                         vmadd_v, sum_v, dot_v, selu_v,  selu_grad_v};
  return k;
}

}  // namespace hnoseg::simd

#endif  // __x86_64__
