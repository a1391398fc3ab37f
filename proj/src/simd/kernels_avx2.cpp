// Compiled with -mavx2 (and only that); reached only after a CPUID check.

#include <immintrin.h>

#include <cmath>

#include "tables.hpp"

namespace synthpqa::simd::detail {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd();
  __m256d a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = _mm256_add_pd(a0, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    a1 = _mm256_add_pd(a1, _mm256_mul_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    a0 = _mm256_add_pd(a0, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  double s = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sum_squares_avx2(const double* x, std::size_t n) { return dot_avx2(x, x, n); }

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale_avx2(double a, double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
  for (; i < n; ++i) x[i] *= a;
}

void adamw_avx2(double* w, double* m, double* v, const double* g, std::size_t n,
                const AdamWStep& st) {
  const double decay = 1.0 - st.lr * st.weight_decay;
  const double one_minus_b1 = 1.0 - st.beta1;
  const double one_minus_b2 = 1.0 - st.beta2;
  const __m256d vb1 = _mm256_set1_pd(st.beta1);
  const __m256d vb2 = _mm256_set1_pd(st.beta2);
  const __m256d v1b1 = _mm256_set1_pd(one_minus_b1);
  const __m256d v1b2 = _mm256_set1_pd(one_minus_b2);
  const __m256d vbc1 = _mm256_set1_pd(st.bias_correction1);
  const __m256d vbc2 = _mm256_set1_pd(st.bias_correction2);
  const __m256d vdecay = _mm256_set1_pd(decay);
  const __m256d vlr = _mm256_set1_pd(st.lr);
  const __m256d veps = _mm256_set1_pd(st.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gi = _mm256_loadu_pd(g + i);
    const __m256d mi =
        _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(v1b1, gi));
    const __m256d vi = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(v1b2, _mm256_mul_pd(gi, gi)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d mhat = _mm256_div_pd(mi, vbc1);
    const __m256d vhat = _mm256_div_pd(vi, vbc2);
    const __m256d upd = _mm256_div_pd(mhat, _mm256_add_pd(_mm256_sqrt_pd(vhat), veps));
    const __m256d wi =
        _mm256_sub_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i), vdecay), _mm256_mul_pd(vlr, upd));
    _mm256_storeu_pd(w + i, wi);
  }
  for (; i < n; ++i) {
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

void bm25_accumulate_avx2(const std::uint32_t* docs, const std::uint32_t* tfs, std::size_t n,
                          const double* doc_norm, double idf, double* acc) {
  const __m256d vidf = _mm256_set1_pd(idf);
  alignas(32) double contrib[4];
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m128i vdocs = _mm_loadu_si128(reinterpret_cast<const __m128i*>(docs + i));
    const __m128i vtfs = _mm_loadu_si128(reinterpret_cast<const __m128i*>(tfs + i));
    // tf values fit comfortably in int32; cvtepi32 is exact for them.
    const __m256d tf = _mm256_cvtepi32_pd(vtfs);
    const __m256d norm = _mm256_i32gather_pd(doc_norm, vdocs, 8);
    const __m256d c = _mm256_mul_pd(vidf, _mm256_div_pd(tf, _mm256_add_pd(tf, norm)));
    _mm256_store_pd(contrib, c);
    acc[docs[i]] += contrib[0];
    acc[docs[i + 1]] += contrib[1];
    acc[docs[i + 2]] += contrib[2];
    acc[docs[i + 3]] += contrib[3];
  }
  for (; i < n; ++i) {
    const double tf = static_cast<double>(tfs[i]);
    acc[docs[i]] += idf * (tf / (tf + doc_norm[docs[i]]));
  }
}

}  // namespace

const Kernels kAvx2Kernels{
    Isa::kAvx2,   dot_avx2,   sum_squares_avx2,    axpy_avx2,
    scale_avx2,   adamw_avx2, bm25_accumulate_avx2,
};

}  // namespace synthpqa::simd::detail
