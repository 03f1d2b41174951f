#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace chartsample::simd {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa);

/// Inner loops of the learner. Every entry has a scalar reference and a
/// vectorized variant with identical contracts; results may differ only by
/// floating-point reassociation.
template <typename T>
struct KernelTable {
  /// sum_i a[i] * b[i]
  T (*dot)(const T* a, const T* b, std::size_t n);
  /// out[k] = sum_i w[i] * x[k][i] for k = 0..3
  void (*dot4)(const T* w, const T* const* x, std::size_t n, T* out);
  /// y += alpha * x
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  /// y += sum_k alpha[k] * x[k][i] for k = 0..3
  void (*axpy4)(const T* alpha, const T* const* x, T* y, std::size_t n);
  /// Nesterov momentum step: v = mu*v - lr*g; w += mu*v - lr*g
  void (*nesterov)(T* w, T* v, const T* g, T lr, T mu, std::size_t n);
  /// dst[i] = src[i] / 255
  void (*unit_scale_u8)(const std::uint8_t* src, T* dst, std::size_t n);
};

bool isa_available(Isa isa);

/// Best ISA supported by the running CPU, unless CHARTSAMPLE_SIMD=scalar.
Isa active_isa();

const KernelTable<float>& kernels_f32(Isa isa);
const KernelTable<double>& kernels_f64(Isa isa);

template <typename T>
const KernelTable<T>& kernels(Isa isa);
template <>
inline const KernelTable<float>& kernels<float>(Isa isa) { return kernels_f32(isa); }
template <>
inline const KernelTable<double>& kernels<double>(Isa isa) { return kernels_f64(isa); }

/// Table for the active ISA.
template <typename T>
const KernelTable<T>& kernels() {
  return kernels<T>(active_isa());
}

namespace detail {
const KernelTable<float>& scalar_f32();
const KernelTable<double>& scalar_f64();
const KernelTable<float>* avx2_f32();  // nullptr when not compiled in
const KernelTable<double>* avx2_f64();
}  // namespace detail

}  // namespace chartsample::simd
