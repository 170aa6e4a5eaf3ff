// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "kernels_impl.hpp"

namespace kge::kernels::detail {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
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

void score_rows(const double* table, std::size_t rows, std::size_t dim, const double* q, double* out) {
  for (std::size_t i = 0; i < rows; ++i) out[i] = dot(table + i * dim, q, dim);
}

void adam_update(double* p, const double* g, double* m, double* v, std::size_t n, const AdamCoeffs& c) {
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = c.beta1 * m[i] + one_minus_b1 * g[i];
    v[i] = c.beta2 * v[i] + one_minus_b2 * (g[i] * g[i]);
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    const double step = c.lr * (m_hat / (std::sqrt(v_hat) + c.eps));
    p[i] = p[i] - step - c.weight_decay * p[i];
  }
}

}  // namespace

const KernelTable kScalarTable{
    Backend::Scalar, dot, axpy, gemv, gemv_t, outer_acc, score_rows, adam_update,
};

}  // namespace kge::kernels::detail
