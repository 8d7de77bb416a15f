// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <cmath>

#include "chaoslab/nn/kernels.hpp"

namespace chaoslab::nn::detail {

namespace {

// Columns [j, j + 16) of one output row, accumulated in four registers over `depth` terms.
// Row r of the left operand contributes lhs[r * lhs_stride] times rhs row r.
inline void row_block16(std::size_t depth, const double* lhs, std::size_t lhs_stride, const double* rhs,
                        std::size_t rhs_stride, double* out) {
  __m256d c0 = _mm256_loadu_pd(out), c1 = _mm256_loadu_pd(out + 4);
  __m256d c2 = _mm256_loadu_pd(out + 8), c3 = _mm256_loadu_pd(out + 12);
  for (std::size_t r = 0; r < depth; ++r) {
    const __m256d s = _mm256_broadcast_sd(lhs + r * lhs_stride);
    const double* br = rhs + r * rhs_stride;
    c0 = _mm256_fmadd_pd(s, _mm256_loadu_pd(br), c0);
    c1 = _mm256_fmadd_pd(s, _mm256_loadu_pd(br + 4), c1);
    c2 = _mm256_fmadd_pd(s, _mm256_loadu_pd(br + 8), c2);
    c3 = _mm256_fmadd_pd(s, _mm256_loadu_pd(br + 12), c3);
  }
  _mm256_storeu_pd(out, c0);
  _mm256_storeu_pd(out + 4, c1);
  _mm256_storeu_pd(out + 8, c2);
  _mm256_storeu_pd(out + 12, c3);
}

inline void row_block4(std::size_t depth, const double* lhs, std::size_t lhs_stride, const double* rhs,
                       std::size_t rhs_stride, double* out) {
  __m256d c0 = _mm256_loadu_pd(out);
  for (std::size_t r = 0; r < depth; ++r) {
    c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(lhs + r * lhs_stride), _mm256_loadu_pd(rhs + r * rhs_stride), c0);
  }
  _mm256_storeu_pd(out, c0);
}

// out[0..n) += sum_r lhs[r * lhs_stride] * rhs[r * rhs_stride + 0..n)
inline void row_update(std::size_t n, std::size_t depth, const double* lhs, std::size_t lhs_stride,
                       const double* rhs, std::size_t rhs_stride, double* out) {
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) row_block16(depth, lhs, lhs_stride, rhs + j, rhs_stride, out + j);
  for (; j + 4 <= n; j += 4) row_block4(depth, lhs, lhs_stride, rhs + j, rhs_stride, out + j);
  for (; j < n; ++j) {
    double s = out[j];
    for (std::size_t r = 0; r < depth; ++r) s = std::fma(lhs[r * lhs_stride], rhs[r * rhs_stride + j], s);
    out[j] = s;
  }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) row_update(n, k, a + i * k, 1, b, n, c + i * n);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) row_update(n, m, a + p, k, b, n, c + p * n);
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(std::size_t n, const double* x, const double* y) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) c[i * k + p] += dot(n, a + i * n, b + p * n);
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void adam_update(std::size_t n, const AdamCoefficients& k, const double* grad, double* m, double* v,
                 double* param) {
  const __m256d b1 = _mm256_set1_pd(k.beta1), nb1 = _mm256_set1_pd(1.0 - k.beta1);
  const __m256d b2 = _mm256_set1_pd(k.beta2), nb2 = _mm256_set1_pd(1.0 - k.beta2);
  const __m256d inv1 = _mm256_set1_pd(1.0 / k.bias1), inv2 = _mm256_set1_pd(1.0 / k.bias2);
  const __m256d lr = _mm256_set1_pd(k.lr), eps = _mm256_set1_pd(k.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(nb1, g));
    const __m256d vi =
        _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)), _mm256_mul_pd(nb2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vi, inv2)), eps);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, _mm256_mul_pd(mi, inv1)), denom);
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
  }
  for (; i < n; ++i) {
    m[i] = k.beta1 * m[i] + (1.0 - k.beta1) * grad[i];
    v[i] = k.beta2 * v[i] + (1.0 - k.beta2) * grad[i] * grad[i];
    param[i] -= k.lr * (m[i] / k.bias1) / (std::sqrt(v[i] / k.bias2) + k.eps);
  }
}

constexpr KernelTable kAvx2{Isa::Avx2, gemm_nn, gemm_tn, gemm_nt, dot, axpy, adam_update};

}  // namespace

const KernelTable* avx2_table() { return &kAvx2; }

}  // namespace chaoslab::nn::detail
