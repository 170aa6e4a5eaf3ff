// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"

namespace kge::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(KGE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  const KernelTable* best = table_for(Backend::Avx2);
  if (best == nullptr) best = &detail::kScalarTable;
  if (const char* env = std::getenv("KGE_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return &detail::kScalarTable;
    if (want == "avx2" && table_for(Backend::Avx2) != nullptr) return table_for(Backend::Avx2);
  }
  return best;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& scalar_table() { return detail::kScalarTable; }

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return &detail::kScalarTable;
    case Backend::Avx2:
#if defined(KGE_HAVE_AVX2)
      if (cpu_has_avx2()) return &detail::kAvx2Table;
#endif
      return nullptr;
  }
  return nullptr;
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

bool select(Backend b) {
  const KernelTable* t = table_for(b);
  if (t == nullptr) return false;
  current().store(t, std::memory_order_release);
  return true;
}

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace kge::kernels
