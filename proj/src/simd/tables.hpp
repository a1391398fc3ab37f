#pragma once

#include "synthpqa/simd/kernels.hpp"

namespace synthpqa::simd::detail {

extern const Kernels kScalarKernels;
#if defined(SYNTHPQA_HAVE_AVX2)
extern const Kernels kAvx2Kernels;
#endif

}  // namespace synthpqa::simd::detail
