#pragma once

// Dense linear-algebra kernels behind the gradient engine. Every kernel has a scalar reference
// and, where the CPU allows, an AVX2/FMA variant picked once at startup.
// Setting CHAOSLAB_SIMD=scalar in the environment forces the reference kernels.

#include <cstddef>
#include <string_view>

namespace chaoslab::nn {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa);

struct AdamCoefficients {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias1;  // 1 - beta1^t
  double bias2;  // 1 - beta2^t
};

/// All matrices are dense row-major with the leading dimension equal to the column count.
struct KernelTable {
  Isa isa;
  /// C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
  /// C[k x n] += A[m x k]^T * B[m x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
  /// C[m x k] += A[m x n] * B[k x n]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
  double (*dot)(std::size_t n, const double* x, const double* y);
  /// y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  /// One bias-corrected Adam update over n entries.
  void (*adam_update)(std::size_t n, const AdamCoefficients& k, const double* grad, double* m, double* v,
                      double* param);
};

/// Table chosen for this process (CPU support and the CHAOSLAB_SIMD override).
const KernelTable& kernels();

/// A specific table; throws DomainError if the CPU cannot run it.
const KernelTable& kernels(Isa isa);

bool isa_available(Isa isa);

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when not compiled in
}  // namespace detail

}  // namespace chaoslab::nn
