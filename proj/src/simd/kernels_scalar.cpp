#include <cmath>

#include "tables.hpp"

namespace synthpqa::simd::detail {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sum_squares_scalar(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void adamw_scalar(double* w, double* m, double* v, const double* g, std::size_t n,
                  const AdamWStep& st) {
  const double decay = 1.0 - st.lr * st.weight_decay;
  const double one_minus_b1 = 1.0 - st.beta1;
  const double one_minus_b2 = 1.0 - st.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g[i];
    const double mi = st.beta1 * m[i] + one_minus_b1 * gi;
    const double vi = st.beta2 * v[i] + one_minus_b2 * (gi * gi);
    m[i] = mi;
    v[i] = vi;
    const double mhat = mi / st.bias_correction1;
    const double vhat = vi / st.bias_correction2;
    w[i] = w[i] * decay - st.lr * (mhat / (std::sqrt(vhat) + st.eps));
  }
}

void bm25_accumulate_scalar(const std::uint32_t* docs, const std::uint32_t* tfs, std::size_t n,
                            const double* doc_norm, double idf, double* acc) {
  for (std::size_t i = 0; i < n; ++i) {
    const double tf = static_cast<double>(tfs[i]);
    acc[docs[i]] += idf * (tf / (tf + doc_norm[docs[i]]));
  }
}

}  // namespace

const Kernels kScalarKernels{
    Isa::kScalar,   dot_scalar,   sum_squares_scalar,    axpy_scalar,
    scale_scalar,   adamw_scalar, bm25_accumulate_scalar,
};

}  // namespace synthpqa::simd::detail
