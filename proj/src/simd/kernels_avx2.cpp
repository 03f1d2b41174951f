#include "chartsample/simd/kernels.hpp"

#if defined(CHARTSAMPLE_HAVE_AVX2)

#include <immintrin.h>

namespace chartsample::simd::detail {

namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d high64 = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
}

float dot_f32(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
  __m256 acc2 = _mm256_setzero_ps(), acc3 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    acc2 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 16), _mm256_loadu_ps(b + i + 16), acc2);
    acc3 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 24), _mm256_loadu_ps(b + i + 24), acc3);
  }
  for (; i + 8 <= n; i += 8) acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  float acc = hsum(_mm256_add_ps(_mm256_add_ps(acc0, acc1), _mm256_add_ps(acc2, acc3)));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void dot4_f32(const float* w, const float* const* x, std::size_t n, float* out) {
  __m256 a0 = _mm256_setzero_ps(), a1 = _mm256_setzero_ps(), a2 = _mm256_setzero_ps(), a3 = _mm256_setzero_ps();
  __m256 b0 = _mm256_setzero_ps(), b1 = _mm256_setzero_ps(), b2 = _mm256_setzero_ps(), b3 = _mm256_setzero_ps();
  const float *x0 = x[0], *x1 = x[1], *x2 = x[2], *x3 = x[3];
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m256 wa = _mm256_loadu_ps(w + i);
    const __m256 wb = _mm256_loadu_ps(w + i + 8);
    a0 = _mm256_fmadd_ps(wa, _mm256_loadu_ps(x0 + i), a0);
    a1 = _mm256_fmadd_ps(wa, _mm256_loadu_ps(x1 + i), a1);
    a2 = _mm256_fmadd_ps(wa, _mm256_loadu_ps(x2 + i), a2);
    a3 = _mm256_fmadd_ps(wa, _mm256_loadu_ps(x3 + i), a3);
    b0 = _mm256_fmadd_ps(wb, _mm256_loadu_ps(x0 + i + 8), b0);
    b1 = _mm256_fmadd_ps(wb, _mm256_loadu_ps(x1 + i + 8), b1);
    b2 = _mm256_fmadd_ps(wb, _mm256_loadu_ps(x2 + i + 8), b2);
    b3 = _mm256_fmadd_ps(wb, _mm256_loadu_ps(x3 + i + 8), b3);
  }
  for (; i + 8 <= n; i += 8) {
    const __m256 wa = _mm256_loadu_ps(w + i);
    a0 = _mm256_fmadd_ps(wa, _mm256_loadu_ps(x0 + i), a0);
    a1 = _mm256_fmadd_ps(wa, _mm256_loadu_ps(x1 + i), a1);
    a2 = _mm256_fmadd_ps(wa, _mm256_loadu_ps(x2 + i), a2);
    a3 = _mm256_fmadd_ps(wa, _mm256_loadu_ps(x3 + i), a3);
  }
  float r0 = hsum(_mm256_add_ps(a0, b0)), r1 = hsum(_mm256_add_ps(a1, b1));
  float r2 = hsum(_mm256_add_ps(a2, b2)), r3 = hsum(_mm256_add_ps(a3, b3));
  for (; i < n; ++i) {
    r0 += w[i] * x0[i];
    r1 += w[i] * x1[i];
    r2 += w[i] * x2[i];
    r3 += w[i] * x3[i];
  }
  out[0] = r0;
  out[1] = r1;
  out[2] = r2;
  out[3] = r3;
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy4_f32(const float* alpha, const float* const* x, float* y, std::size_t n) {
  const __m256 c0 = _mm256_set1_ps(alpha[0]), c1 = _mm256_set1_ps(alpha[1]);
  const __m256 c2 = _mm256_set1_ps(alpha[2]), c3 = _mm256_set1_ps(alpha[3]);
  const float *x0 = x[0], *x1 = x[1], *x2 = x[2], *x3 = x[3];
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 acc = _mm256_loadu_ps(y + i);
    acc = _mm256_fmadd_ps(c0, _mm256_loadu_ps(x0 + i), acc);
    acc = _mm256_fmadd_ps(c1, _mm256_loadu_ps(x1 + i), acc);
    acc = _mm256_fmadd_ps(c2, _mm256_loadu_ps(x2 + i), acc);
    acc = _mm256_fmadd_ps(c3, _mm256_loadu_ps(x3 + i), acc);
    _mm256_storeu_ps(y + i, acc);
  }
  for (; i < n; ++i) y[i] += alpha[0] * x0[i] + alpha[1] * x1[i] + alpha[2] * x2[i] + alpha[3] * x3[i];
}

void nesterov_f32(float* w, float* v, const float* g, float lr, float mu, std::size_t n) {
  const __m256 vlr = _mm256_set1_ps(lr), vmu = _mm256_set1_ps(mu);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 step = _mm256_mul_ps(vlr, _mm256_loadu_ps(g + i));
    const __m256 vel = _mm256_sub_ps(_mm256_mul_ps(vmu, _mm256_loadu_ps(v + i)), step);
    _mm256_storeu_ps(v + i, vel);
    _mm256_storeu_ps(w + i, _mm256_add_ps(_mm256_loadu_ps(w + i), _mm256_sub_ps(_mm256_mul_ps(vmu, vel), step)));
  }
  for (; i < n; ++i) {
    const float step = lr * g[i];
    v[i] = mu * v[i] - step;
    w[i] += mu * v[i] - step;
  }
}

void unit_scale_u8_f32(const std::uint8_t* src, float* dst, std::size_t n) {
  const __m256 inv = _mm256_set1_ps(255.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m128i bytes = _mm_loadl_epi64(reinterpret_cast<const __m128i*>(src + i));
    const __m256 f = _mm256_cvtepi32_ps(_mm256_cvtepu8_epi32(bytes));
    _mm256_storeu_ps(dst + i, _mm256_div_ps(f, inv));
  }
  for (; i < n; ++i) dst[i] = static_cast<float>(src[i]) / 255.0f;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void dot4_f64(const double* w, const double* const* x, std::size_t n, double* out) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd(), a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
  const double *x0 = x[0], *x1 = x[1], *x2 = x[2], *x3 = x[3];
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d wv = _mm256_loadu_pd(w + i);
    a0 = _mm256_fmadd_pd(wv, _mm256_loadu_pd(x0 + i), a0);
    a1 = _mm256_fmadd_pd(wv, _mm256_loadu_pd(x1 + i), a1);
    a2 = _mm256_fmadd_pd(wv, _mm256_loadu_pd(x2 + i), a2);
    a3 = _mm256_fmadd_pd(wv, _mm256_loadu_pd(x3 + i), a3);
  }
  double r0 = hsum(a0), r1 = hsum(a1), r2 = hsum(a2), r3 = hsum(a3);
  for (; i < n; ++i) {
    r0 += w[i] * x0[i];
    r1 += w[i] * x1[i];
    r2 += w[i] * x2[i];
    r3 += w[i] * x3[i];
  }
  out[0] = r0;
  out[1] = r1;
  out[2] = r2;
  out[3] = r3;
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy4_f64(const double* alpha, const double* const* x, double* y, std::size_t n) {
  const __m256d c0 = _mm256_set1_pd(alpha[0]), c1 = _mm256_set1_pd(alpha[1]);
  const __m256d c2 = _mm256_set1_pd(alpha[2]), c3 = _mm256_set1_pd(alpha[3]);
  const double *x0 = x[0], *x1 = x[1], *x2 = x[2], *x3 = x[3];
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d acc = _mm256_loadu_pd(y + i);
    acc = _mm256_fmadd_pd(c0, _mm256_loadu_pd(x0 + i), acc);
    acc = _mm256_fmadd_pd(c1, _mm256_loadu_pd(x1 + i), acc);
    acc = _mm256_fmadd_pd(c2, _mm256_loadu_pd(x2 + i), acc);
    acc = _mm256_fmadd_pd(c3, _mm256_loadu_pd(x3 + i), acc);
    _mm256_storeu_pd(y + i, acc);
  }
  for (; i < n; ++i) y[i] += alpha[0] * x0[i] + alpha[1] * x1[i] + alpha[2] * x2[i] + alpha[3] * x3[i];
}

void nesterov_f64(double* w, double* v, const double* g, double lr, double mu, std::size_t n) {
  const __m256d vlr = _mm256_set1_pd(lr), vmu = _mm256_set1_pd(mu);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d step = _mm256_mul_pd(vlr, _mm256_loadu_pd(g + i));
    const __m256d vel = _mm256_sub_pd(_mm256_mul_pd(vmu, _mm256_loadu_pd(v + i)), step);
    _mm256_storeu_pd(v + i, vel);
    _mm256_storeu_pd(w + i, _mm256_add_pd(_mm256_loadu_pd(w + i), _mm256_sub_pd(_mm256_mul_pd(vmu, vel), step)));
  }
  for (; i < n; ++i) {
    const double step = lr * g[i];
    v[i] = mu * v[i] - step;
    w[i] += mu * v[i] - step;
  }
}

void unit_scale_u8_f64(const std::uint8_t* src, double* dst, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<double>(src[i]) / 255.0;
}

}  // namespace

const KernelTable<float>* avx2_f32() {
  static const KernelTable<float> table{&dot_f32, &dot4_f32, &axpy_f32, &axpy4_f32, &nesterov_f32, &unit_scale_u8_f32};
  return &table;
}

const KernelTable<double>* avx2_f64() {
  static const KernelTable<double> table{&dot_f64, &dot4_f64, &axpy_f64, &axpy4_f64, &nesterov_f64, &unit_scale_u8_f64};
  return &table;
}

}  // namespace chartsample::simd::detail

#else

namespace chartsample::simd::detail {
const KernelTable<float>* avx2_f32() { return nullptr; }
const KernelTable<double>* avx2_f64() { return nullptr; }
}  // namespace chartsample::simd::detail

#endif
