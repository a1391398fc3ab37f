#pragma once

// Data-parallel inner loops used by BM25 scoring and encoder training.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2 variant. The active table is chosen once at first use from CPUID;
// setting SYNTHPQA_SIMD=scalar in the environment forces the reference path.
//
// Elementwise kernels (axpy, scale, adamw_step, bm25_accumulate) produce
// bit-identical results across variants. Reductions (dot, sum_squares) are
// reassociated in the vector variants and agree to rounding only.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace synthpqa::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

/// Precomputed per-step AdamW factors (decoupled weight decay).
struct AdamWStep {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double weight_decay;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct Kernels {
  Isa isa;

  double (*dot)(const double* x, const double* y, std::size_t n);
  double (*sum_squares)(const double* x, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // x *= a
  void (*scale)(double a, double* x, std::size_t n);
  void (*adamw_step)(double* w, double* m, double* v, const double* g, std::size_t n,
                     const AdamWStep& step);
  // acc[docs[i]] += idf * tf[i] / (tf[i] + doc_norm[docs[i]]) for a single
  // term's posting list; docs must be distinct.
  void (*bm25_accumulate)(const std::uint32_t* docs, const std::uint32_t* tfs, std::size_t n,
                          const double* doc_norm, double idf, double* acc);
};

bool isa_supported(Isa isa);

/// Kernel table for a specific ISA; throws if unsupported on this machine.
const Kernels& kernels_for(Isa isa);

/// Kernel table selected for this process.
const Kernels& kernels();

}  // namespace synthpqa::simd
