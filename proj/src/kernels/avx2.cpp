// SPDX-License-Identifier: Apache-2.0
//
// AVX2 + FMA variants. Compiled with -mavx2 -mfma; only reached after the
// dispatcher has confirmed CPU support.
#include <immintrin.h>

#include <cmath>

#include "kernels_impl.hpp"

namespace kge::kernels::detail {
namespace {

constexpr std::size_t kLanes = 4;

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 * kLanes <= n; i += 4 * kLanes) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
    acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
  }
  for (; i + kLanes <= n; i += kLanes) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemv(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t i = 0; i < rows; ++i) y[i] += dot(w + i * cols, x, cols);
}

void gemv_t(const double* w, std::size_t rows, std::size_t cols, const double* g, double* out) {
  for (std::size_t i = 0; i < rows; ++i) axpy(g[i], w + i * cols, out, cols);
}

void outer_acc(const double* g, std::size_t rows, const double* x, std::size_t cols, double* grad) {
  for (std::size_t i = 0; i < rows; ++i) axpy(g[i], x, grad + i * cols, cols);
}

// Four rows at a time so each load of q feeds four products.
void score_rows(const double* table, std::size_t rows, std::size_t dim, const double* q, double* out) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const double* t0 = table + (r + 0) * dim;
    const double* t1 = table + (r + 1) * dim;
    const double* t2 = table + (r + 2) * dim;
    const double* t3 = table + (r + 3) * dim;
    __m256d a0 = _mm256_setzero_pd();
    __m256d a1 = _mm256_setzero_pd();
    __m256d a2 = _mm256_setzero_pd();
    __m256d a3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + kLanes <= dim; i += kLanes) {
      const __m256d vq = _mm256_loadu_pd(q + i);
      a0 = _mm256_fmadd_pd(_mm256_loadu_pd(t0 + i), vq, a0);
      a1 = _mm256_fmadd_pd(_mm256_loadu_pd(t1 + i), vq, a1);
      a2 = _mm256_fmadd_pd(_mm256_loadu_pd(t2 + i), vq, a2);
      a3 = _mm256_fmadd_pd(_mm256_loadu_pd(t3 + i), vq, a3);
    }
    double s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
    for (; i < dim; ++i) {
      s0 += t0[i] * q[i];
      s1 += t1[i] * q[i];
      s2 += t2[i] * q[i];
      s3 += t3[i] * q[i];
    }
    out[r + 0] = s0;
    out[r + 1] = s1;
    out[r + 2] = s2;
    out[r + 3] = s3;
  }
  for (; r < rows; ++r) out[r] = dot(table + r * dim, q, dim);
}

// Same operation order as the scalar kernel and no fused multiply-adds, so
// results match it bit for bit.
void adam_update(double* p, const double* g, double* m, double* v, std::size_t n, const AdamCoeffs& c) {
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d omb1 = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d omb2 = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d bc1 = _mm256_set1_pd(c.bias_correction1);
  const __m256d bc2 = _mm256_set1_pd(c.bias_correction2);
  const __m256d lr = _mm256_set1_pd(c.lr);
  const __m256d eps = _mm256_set1_pd(c.eps);
  const __m256d wd = _mm256_set1_pd(c.weight_decay);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d vg = _mm256_loadu_pd(g + i);
    __m256d vm = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    __m256d vp = _mm256_loadu_pd(p + i);
    vm = _mm256_add_pd(_mm256_mul_pd(b1, vm), _mm256_mul_pd(omb1, vg));
    vv = _mm256_add_pd(_mm256_mul_pd(b2, vv), _mm256_mul_pd(omb2, _mm256_mul_pd(vg, vg)));
    const __m256d m_hat = _mm256_div_pd(vm, bc1);
    const __m256d v_hat = _mm256_div_pd(vv, bc2);
    const __m256d step = _mm256_mul_pd(lr, _mm256_div_pd(m_hat, _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps)));
    vp = _mm256_sub_pd(_mm256_sub_pd(vp, step), _mm256_mul_pd(wd, vp));
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    _mm256_storeu_pd(p + i, vp);
  }
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  for (; i < n; ++i) {
    m[i] = c.beta1 * m[i] + one_minus_b1 * g[i];
    v[i] = c.beta2 * v[i] + one_minus_b2 * (g[i] * g[i]);
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    const double step = c.lr * (m_hat / (std::sqrt(v_hat) + c.eps));
    p[i] = p[i] - step - c.weight_decay * p[i];
  }
}

}  // namespace

const KernelTable kAvx2Table{
    Backend::Avx2, dot, axpy, gemv, gemv_t, outer_acc, score_rows, adam_update,
};

}  // namespace kge::kernels::detail
