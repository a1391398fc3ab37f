#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "synthpqa/simd/kernels.hpp"

using namespace synthpqa::simd;

namespace {

std::vector<double> random_vec(std::mt19937_64& g, std::size_t n, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(g);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_SUITE("simd") {
  TEST_CASE("scalar table is always available") {
    CHECK(isa_supported(Isa::kScalar));
    CHECK(kernels_for(Isa::kScalar).isa == Isa::kScalar);
    CHECK(isa_name(kernels().isa).size() > 0);
  }

  TEST_CASE("scalar reductions agree with a naive loop") {
    std::mt19937_64 g(1);
    const auto& k = kernels_for(Isa::kScalar);
    for (std::size_t n : {0u, 1u, 7u, 100u}) {
      auto x = random_vec(g, n), y = random_vec(g, n);
      double d = 0, s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        d += x[i] * y[i];
        s += x[i] * x[i];
      }
      CHECK(k.dot(x.data(), y.data(), n) == doctest::Approx(d).epsilon(1e-12));
      CHECK(k.sum_squares(x.data(), n) == doctest::Approx(s).epsilon(1e-12));
    }
  }

  TEST_CASE("AVX2 kernels match the scalar reference") {
    if (!isa_supported(Isa::kAvx2)) {
      MESSAGE("AVX2 not supported here; equivalence not exercised");
      return;
    }
    const auto& s = kernels_for(Isa::kScalar);
    const auto& v = kernels_for(Isa::kAvx2);
    std::mt19937_64 g(7);
    for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 15u, 16u, 17u, 63u, 1000u, 4099u}) {
      CAPTURE(n);
      auto x = random_vec(g, n), y = random_vec(g, n);

      const double ds = s.dot(x.data(), y.data(), n), dv = v.dot(x.data(), y.data(), n);
      CHECK(std::abs(ds - dv) <= 1e-12 * std::max(1.0, std::abs(ds)));
      const double ss = s.sum_squares(x.data(), n), sv = v.sum_squares(x.data(), n);
      CHECK(std::abs(ss - sv) <= 1e-12 * std::max(1.0, ss));

      auto y1 = y, y2 = y;
      s.axpy(0.37, x.data(), y1.data(), n);
      v.axpy(0.37, x.data(), y2.data(), n);
      CHECK(bit_equal(y1, y2));

      auto x1 = x, x2 = x;
      s.scale(-1.25, x1.data(), n);
      v.scale(-1.25, x2.data(), n);
      CHECK(bit_equal(x1, x2));

      auto w1 = x, w2 = x, m1 = random_vec(g, n), vv1 = random_vec(g, n, 0.0, 1.0);
      auto m2 = m1, vv2 = vv1;
      const auto grad = random_vec(g, n);
      const AdamWStep st{1e-3, 0.9, 0.999, 1e-8, 0.01, 1 - std::pow(0.9, 3), 1 - std::pow(0.999, 3)};
      s.adamw_step(w1.data(), m1.data(), vv1.data(), grad.data(), n, st);
      v.adamw_step(w2.data(), m2.data(), vv2.data(), grad.data(), n, st);
      CHECK(bit_equal(w1, w2));
      CHECK(bit_equal(m1, m2));
      CHECK(bit_equal(vv1, vv2));

      // Posting list over a subset of a larger document range.
      const std::size_t ndocs = n + 10;
      std::vector<std::uint32_t> docs, tfs;
      for (std::uint32_t d = 0; d < ndocs; d += 1 + static_cast<std::uint32_t>(g() % 3)) {
        docs.push_back(d);
        tfs.push_back(1 + static_cast<std::uint32_t>(g() % 5));
      }
      const auto norm = random_vec(g, ndocs, 0.2, 3.0);
      std::vector<double> a1(ndocs, 0.5), a2(ndocs, 0.5);
      s.bm25_accumulate(docs.data(), tfs.data(), docs.size(), norm.data(), 1.3, a1.data());
      v.bm25_accumulate(docs.data(), tfs.data(), docs.size(), norm.data(), 1.3, a2.data());
      CHECK(bit_equal(a1, a2));
    }
  }

  TEST_CASE("adamw step follows the decoupled update rule") {
    const auto& k = kernels_for(Isa::kScalar);
    double w = 1.0, m = 0.0, v = 0.0;
    const double grad = 0.5;
    const AdamWStep st{0.1, 0.9, 0.999, 1e-8, 0.01, 1 - 0.9, 1 - 0.999};
    k.adamw_step(&w, &m, &v, &grad, 1, st);
    const double m1 = 0.1 * 0.5, v1 = 0.001 * 0.25;
    const double expected = 1.0 - 0.1 * 0.01 * 1.0 - 0.1 * (m1 / 0.1) / (std::sqrt(v1 / 0.001) + 1e-8);
    CHECK(m == doctest::Approx(m1));
    CHECK(v == doctest::Approx(v1));
    CHECK(w == doctest::Approx(expected).epsilon(1e-12));
  }
}
