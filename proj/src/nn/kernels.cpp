#include "chaoslab/nn/kernels.hpp"

#include <cstdlib>
#include <string>

#include "chaoslab/error.hpp"

namespace chaoslab::nn {

namespace detail {
#ifndef CHAOSLAB_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif
}  // namespace detail

std::string_view to_string(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) {
  if (isa == Isa::Scalar) return true;
#if defined(__x86_64__) || defined(__i386__)
  if (detail::avx2_table() == nullptr) return false;
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& kernels(Isa isa) {
  if (!isa_available(isa)) throw DomainError("kernel set '" + std::string(to_string(isa)) + "' is not available");
  return isa == Isa::Avx2 ? *detail::avx2_table() : detail::scalar_table();
}

const KernelTable& kernels() {
  static const KernelTable& chosen = [] () -> const KernelTable& {
    const char* env = std::getenv("CHAOSLAB_SIMD");
    if (env != nullptr && std::string(env) == "scalar") return detail::scalar_table();
    return isa_available(Isa::Avx2) ? *detail::avx2_table() : detail::scalar_table();
  }();
  return chosen;
}

}  // namespace chaoslab::nn
