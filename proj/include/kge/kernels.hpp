// SPDX-License-Identifier: Apache-2.0
//
// Data-parallel inner loops used by scoring, aggregation and optimization.
// Every kernel has a scalar reference implementation; wider variants are
// selected once at startup from the CPU feature set and can be overridden
// with KGE_SIMD=scalar|avx2 or kernels::select().
#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace kge::kernels {

enum class Backend { Scalar, Avx2 };

struct AdamCoeffs {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
  double weight_decay;      // decoupled, not scaled by lr
};

/// Function table for one backend. All pointers are non-null.
struct KernelTable {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y[i] += <W[i,:], x> for a row-major rows x cols matrix
  void (*gemv)(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y);
  // out[j] += sum_i g[i] * W[i,j]
  void (*gemv_t)(const double* w, std::size_t rows, std::size_t cols, const double* g, double* out);
  // G[i,j] += g[i] * x[j]
  void (*outer_acc)(const double* g, std::size_t rows, const double* x, std::size_t cols, double* grad);
  // out[i] = <table[i,:], q> for i in [0, rows)
  void (*score_rows)(const double* table, std::size_t rows, std::size_t dim, const double* q, double* out);
  // In-place AdamW step over n contiguous parameters.
  void (*adam_update)(double* param, const double* grad, double* m, double* v, std::size_t n,
                      const AdamCoeffs& c);
};

/// Scalar reference table; always available.
const KernelTable& scalar_table();

/// Table for `b`, or nullptr when the backend is not compiled in or the CPU
/// lacks the required instructions.
const KernelTable* table_for(Backend b);

/// Currently selected table.
const KernelTable& active();

/// Forces a backend. Returns false (and keeps the current selection) if the
/// backend is unavailable.
bool select(Backend b);

std::string_view backend_name(Backend b);

// Convenience wrappers over active().
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace kge::kernels
