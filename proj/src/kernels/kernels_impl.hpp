// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kge/kernels.hpp"

namespace kge::kernels::detail {

extern const KernelTable kScalarTable;
#if defined(KGE_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif

}  // namespace kge::kernels::detail
