#include "chartsample/simd/kernels.hpp"

namespace chartsample::simd::detail {

namespace {

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void dot4(const T* w, const T* const* x, std::size_t n, T* out) {
  for (int k = 0; k < 4; ++k) out[k] = dot(w, x[k], n);
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void axpy4(const T* alpha, const T* const* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha[0] * x[0][i] + alpha[1] * x[1][i] + alpha[2] * x[2][i] + alpha[3] * x[3][i];
}

template <typename T>
void nesterov(T* w, T* v, const T* g, T lr, T mu, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T step = lr * g[i];
    v[i] = mu * v[i] - step;
    w[i] += mu * v[i] - step;
  }
}

template <typename T>
void unit_scale_u8(const std::uint8_t* src, T* dst, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<T>(src[i]) / T(255);
}

template <typename T>
KernelTable<T> make_table() {
  return {&dot<T>, &dot4<T>, &axpy<T>, &axpy4<T>, &nesterov<T>, &unit_scale_u8<T>};
}

}  // namespace

const KernelTable<float>& scalar_f32() {
  static const KernelTable<float> table = make_table<float>();
  return table;
}

const KernelTable<double>& scalar_f64() {
  static const KernelTable<double> table = make_table<double>();
  return table;
}

}  // namespace chartsample::simd::detail
