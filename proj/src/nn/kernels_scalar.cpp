#include <cmath>

#include "chaoslab/nn/kernels.hpp"

namespace chaoslab::nn::detail {

namespace {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t r = 0; r < m; ++r) {
    const double* br = b + r * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double arp = a[r * k + p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += arp * br[j];
    }
  }
}

double dot(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) c[i * k + p] += dot(n, a + i * n, b + p * n);
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void adam_update(std::size_t n, const AdamCoefficients& k, const double* grad, double* m, double* v,
                 double* param) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = k.beta1 * m[i] + (1.0 - k.beta1) * grad[i];
    v[i] = k.beta2 * v[i] + (1.0 - k.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / k.bias1;
    const double vhat = v[i] / k.bias2;
    param[i] -= k.lr * mhat / (std::sqrt(vhat) + k.eps);
  }
}

constexpr KernelTable kScalar{Isa::Scalar, gemm_nn, gemm_tn, gemm_nt, dot, axpy, adam_update};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace chaoslab::nn::detail
