#include "chartsample/simd/kernels.hpp"

#include <cstdlib>
#include <string>

#include "chartsample/errors.hpp"

namespace chartsample::simd {

std::string_view to_string(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(__x86_64__) || defined(__i386__)
      return detail::avx2_f32() != nullptr && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() {
  static const Isa chosen = [] {
    if (const char* env = std::getenv("CHARTSAMPLE_SIMD"); env && std::string(env) == "scalar") return Isa::Scalar;
    return isa_available(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
  }();
  return chosen;
}

const KernelTable<float>& kernels_f32(Isa isa) {
  if (isa == Isa::Avx2) {
    if (!isa_available(Isa::Avx2)) throw ArgumentError("AVX2 kernels are not available on this CPU");
    return *detail::avx2_f32();
  }
  return detail::scalar_f32();
}

const KernelTable<double>& kernels_f64(Isa isa) {
  if (isa == Isa::Avx2) {
    if (!isa_available(Isa::Avx2)) throw ArgumentError("AVX2 kernels are not available on this CPU");
    return *detail::avx2_f64();
  }
  return detail::scalar_f64();
}

}  // namespace chartsample::simd
