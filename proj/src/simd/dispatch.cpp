#include <cstdlib>
#include <stdexcept>
#include <string>

#include "tables.hpp"

namespace synthpqa::simd {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(SYNTHPQA_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

const Kernels& kernels_for(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::runtime_error("SIMD variant not available on this CPU: " + std::string(isa_name(isa)));
  }
#if defined(SYNTHPQA_HAVE_AVX2)
  if (isa == Isa::kAvx2) return detail::kAvx2Kernels;
#endif
  return detail::kScalarKernels;
}

namespace {

const Kernels& select() {
  const char* forced = std::getenv("SYNTHPQA_SIMD");
  if (forced != nullptr && std::string(forced) == "scalar") return detail::kScalarKernels;
  if (isa_supported(Isa::kAvx2)) return kernels_for(Isa::kAvx2);
  return detail::kScalarKernels;
}

}  // namespace

const Kernels& kernels() {
  static const Kernels& active = select();
  return active;
}

}  // namespace synthpqa::simd
