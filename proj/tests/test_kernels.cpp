// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include "doctest.h"
#include "lgspf/kernels.hpp"
#include "lgspf/rng.hpp"

using namespace lgspf;
namespace k = lgspf::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

using Gemm = void (*)(std::size_t, std::size_t, std::size_t, const double*, std::size_t,
                      const double*, std::size_t, double*, std::size_t);

// Compare two gemm implementations on padded (strided) operands.
double gemm_gap(Gemm f, Gemm g, bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                std::size_t kk, Rng& rng) {
  const std::size_t pad = 3;
  const std::size_t a_rows = trans_a ? kk : m, a_cols = trans_a ? m : kk;
  const std::size_t b_rows = trans_b ? n : kk, b_cols = trans_b ? kk : n;
  const auto a = random_vec(a_rows * (a_cols + pad), rng);
  const auto b = random_vec(b_rows * (b_cols + pad), rng);
  auto c1 = random_vec(m * (n + pad), rng);
  auto c2 = c1;
  f(m, n, kk, a.data(), a_cols + pad, b.data(), b_cols + pad, c1.data(), n + pad);
  g(m, n, kk, a.data(), a_cols + pad, b.data(), b_cols + pad, c2.data(), n + pad);
  double worst = 0.0;
  for (std::size_t i = 0; i < c1.size(); ++i) worst = std::max(worst, rel_err(c1[i], c2[i]));
  return worst;
}

}  // namespace

TEST_CASE("scalar backend is always available") {
  CHECK(k::backend_supported(k::Backend::kScalar));
  CHECK(k::backend_name(k::Backend::kScalar) == "scalar");
}

TEST_CASE("scalar gemm matches hand-computed product") {
  const double a[] = {1, 2, 3, 4, 5, 6};     // 2x3
  const double b[] = {7, 8, 9, 10, 11, 12};  // 3x2
  double c[4] = {1, 1, 1, 1};
  k::scalar::gemm_nn(2, 2, 3, a, 3, b, 2, c, 2);
  CHECK(c[0] == 59);
  CHECK(c[1] == 65);
  CHECK(c[2] == 140);
  CHECK(c[3] == 155);
}

TEST_CASE("AVX2 kernels agree with the scalar reference") {
  if (!k::backend_supported(k::Backend::kAvx2)) {
    MESSAGE("AVX2 not available; equivalence test skipped");
    return;
  }
  const auto& ref = k::table(k::Backend::kScalar);
  const auto& simd = k::table(k::Backend::kAvx2);
  Rng rng(7);
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 8u, 13u, 64u, 67u}) {
    const auto a = random_vec(n, rng);
    const auto b = random_vec(n, rng);
    CHECK(rel_err(ref.dot(a.data(), b.data(), n), simd.dot(a.data(), b.data(), n)) < 1e-13);
    auto y1 = random_vec(n, rng);
    auto y2 = y1;
    ref.axpy(0.37, a.data(), y1.data(), n);
    simd.axpy(0.37, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(rel_err(y1[i], y2[i]) < 1e-14);
  }
  const std::size_t dims[][3] = {{1, 1, 1}, {4, 8, 3}, {5, 9, 7}, {7, 13, 64},
                                 {17, 64, 64}, {3, 5, 0}, {33, 31, 29}};
  for (const auto& d : dims) {
    CAPTURE(d[0]);
    CAPTURE(d[1]);
    CAPTURE(d[2]);
    CHECK(gemm_gap(ref.gemm_nn, simd.gemm_nn, false, false, d[0], d[1], d[2], rng) < 1e-12);
    CHECK(gemm_gap(ref.gemm_nt, simd.gemm_nt, false, true, d[0], d[1], d[2], rng) < 1e-12);
    CHECK(gemm_gap(ref.gemm_tn, simd.gemm_tn, true, false, d[0], d[1], d[2], rng) < 1e-12);
  }
}

TEST_CASE("each backend is row-independent: a row computed alone is bit-identical") {
  Rng rng(11);
  for (auto backend : {k::Backend::kScalar, k::Backend::kAvx2}) {
    if (!k::backend_supported(backend)) continue;
    const auto& t = k::table(backend);
    const std::size_t m = 11, n = 19, kk = 23;
    const auto a = random_vec(m * kk, rng);
    const auto b = random_vec(kk * n, rng);
    const auto bt = random_vec(n * kk, rng);
    std::vector<double> full(m * n, 0.0), full_t(m * n, 0.0);
    t.gemm_nn(m, n, kk, a.data(), kk, b.data(), n, full.data(), n);
    t.gemm_nt(m, n, kk, a.data(), kk, bt.data(), kk, full_t.data(), n);
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<double> row(n, 0.0), row_t(n, 0.0);
      t.gemm_nn(1, n, kk, a.data() + i * kk, kk, b.data(), n, row.data(), n);
      t.gemm_nt(1, n, kk, a.data() + i * kk, kk, bt.data(), kk, row_t.data(), n);
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(row[j] == full[i * n + j]);
        CHECK(row_t[j] == full_t[i * n + j]);
      }
    }
  }
}

TEST_CASE("select_backend switches the active table") {
  const auto before = k::active_backend();
  k::select_backend(k::Backend::kScalar);
  CHECK(k::active_backend() == k::Backend::kScalar);
  CHECK(k::active().dot == k::table(k::Backend::kScalar).dot);
  k::select_backend(before);
  CHECK(k::active_backend() == before);
}
