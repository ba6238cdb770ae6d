// SPDX-License-Identifier: Apache-2.0
//
// AVX2 + FMA kernels. This file is compiled with -mavx2 -mfma and must only be
// entered after the dispatcher has confirmed CPU support. It deliberately
// avoids the public header so no inline library code is emitted with the
// wider ISA.

#include <cmath>
#include <cstddef>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace lgspf::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
  alignas(32) double t[4];
  _mm256_store_pd(t, v);
  return (t[0] + t[1]) + (t[2] + t[3]);
}

// Per-element chain shared by dot and gemm_nt: four strided lanes, a fixed
// horizontal reduction, then a scalar FMA tail.
inline double dot_chain(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t p = 0;
  for (; p + 4 <= n; p += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + p), _mm256_loadu_pd(b + p), acc);
  }
  double s = hsum(acc);
  for (; p < n; ++p) s = std::fma(a[p], b[p], s);
  return s;
}

template <bool kTransA>
inline double a_at(const double* a, std::size_t lda, std::size_t i, std::size_t p) {
  return kTransA ? a[p * lda + i] : a[i * lda + p];
}

// C += op(A) * B where every C element is the FMA chain over p = 0..k-1
// starting from its prior value. Vector lanes and the scalar tail perform the
// same rounded operations, so blocking never changes a result.
template <bool kTransA>
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a,
              std::size_t lda, const double* b, std::size_t ldb, double* c,
              std::size_t ldc) {
  const std::size_t n8 = n & ~std::size_t{7};
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double* c0 = c + (i + 0) * ldc;
    double* c1 = c + (i + 1) * ldc;
    double* c2 = c + (i + 2) * ldc;
    double* c3 = c + (i + 3) * ldc;
    std::size_t j = 0;
    for (; j < n8; j += 8) {
      __m256d r00 = _mm256_loadu_pd(c0 + j), r01 = _mm256_loadu_pd(c0 + j + 4);
      __m256d r10 = _mm256_loadu_pd(c1 + j), r11 = _mm256_loadu_pd(c1 + j + 4);
      __m256d r20 = _mm256_loadu_pd(c2 + j), r21 = _mm256_loadu_pd(c2 + j + 4);
      __m256d r30 = _mm256_loadu_pd(c3 + j), r31 = _mm256_loadu_pd(c3 + j + 4);
      for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * ldb + j;
        const __m256d b0 = _mm256_loadu_pd(bp);
        const __m256d b1 = _mm256_loadu_pd(bp + 4);
        __m256d av = _mm256_set1_pd(a_at<kTransA>(a, lda, i + 0, p));
        r00 = _mm256_fmadd_pd(av, b0, r00);
        r01 = _mm256_fmadd_pd(av, b1, r01);
        av = _mm256_set1_pd(a_at<kTransA>(a, lda, i + 1, p));
        r10 = _mm256_fmadd_pd(av, b0, r10);
        r11 = _mm256_fmadd_pd(av, b1, r11);
        av = _mm256_set1_pd(a_at<kTransA>(a, lda, i + 2, p));
        r20 = _mm256_fmadd_pd(av, b0, r20);
        r21 = _mm256_fmadd_pd(av, b1, r21);
        av = _mm256_set1_pd(a_at<kTransA>(a, lda, i + 3, p));
        r30 = _mm256_fmadd_pd(av, b0, r30);
        r31 = _mm256_fmadd_pd(av, b1, r31);
      }
      _mm256_storeu_pd(c0 + j, r00);
      _mm256_storeu_pd(c0 + j + 4, r01);
      _mm256_storeu_pd(c1 + j, r10);
      _mm256_storeu_pd(c1 + j + 4, r11);
      _mm256_storeu_pd(c2 + j, r20);
      _mm256_storeu_pd(c2 + j + 4, r21);
      _mm256_storeu_pd(c3 + j, r30);
      _mm256_storeu_pd(c3 + j + 4, r31);
    }
    for (; j < n4; j += 4) {
      __m256d r0 = _mm256_loadu_pd(c0 + j);
      __m256d r1 = _mm256_loadu_pd(c1 + j);
      __m256d r2 = _mm256_loadu_pd(c2 + j);
      __m256d r3 = _mm256_loadu_pd(c3 + j);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d bv = _mm256_loadu_pd(b + p * ldb + j);
        r0 = _mm256_fmadd_pd(_mm256_set1_pd(a_at<kTransA>(a, lda, i + 0, p)), bv, r0);
        r1 = _mm256_fmadd_pd(_mm256_set1_pd(a_at<kTransA>(a, lda, i + 1, p)), bv, r1);
        r2 = _mm256_fmadd_pd(_mm256_set1_pd(a_at<kTransA>(a, lda, i + 2, p)), bv, r2);
        r3 = _mm256_fmadd_pd(_mm256_set1_pd(a_at<kTransA>(a, lda, i + 3, p)), bv, r3);
      }
      _mm256_storeu_pd(c0 + j, r0);
      _mm256_storeu_pd(c1 + j, r1);
      _mm256_storeu_pd(c2 + j, r2);
      _mm256_storeu_pd(c3 + j, r3);
    }
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < 4; ++r) {
        double s = c[(i + r) * ldc + j];
        for (std::size_t p = 0; p < k; ++p) {
          s = std::fma(a_at<kTransA>(a, lda, i + r, p), b[p * ldb + j], s);
        }
        c[(i + r) * ldc + j] = s;
      }
    }
  }
  for (; i < m; ++i) {
    double* ci = c + i * ldc;
    std::size_t j = 0;
    for (; j < n8; j += 8) {
      __m256d r0 = _mm256_loadu_pd(ci + j);
      __m256d r1 = _mm256_loadu_pd(ci + j + 4);
      for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * ldb + j;
        const __m256d av = _mm256_set1_pd(a_at<kTransA>(a, lda, i, p));
        r0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp), r0);
        r1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 4), r1);
      }
      _mm256_storeu_pd(ci + j, r0);
      _mm256_storeu_pd(ci + j + 4, r1);
    }
    for (; j < n4; j += 4) {
      __m256d r0 = _mm256_loadu_pd(ci + j);
      for (std::size_t p = 0; p < k; ++p) {
        r0 = _mm256_fmadd_pd(_mm256_set1_pd(a_at<kTransA>(a, lda, i, p)),
                             _mm256_loadu_pd(b + p * ldb + j), r0);
      }
      _mm256_storeu_pd(ci + j, r0);
    }
    for (; j < n; ++j) {
      double s = ci[j];
      for (std::size_t p = 0; p < k; ++p) {
        s = std::fma(a_at<kTransA>(a, lda, i, p), b[p * ldb + j], s);
      }
      ci[j] = s;
    }
  }
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  return dot_chain(a, b, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc) {
  gemm_acc<false>(m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc) {
  gemm_acc<true>(m, n, k, a, lda, b, ldb, c, ldc);
}

namespace {

// R rows of A against 4 rows of B. Every element keeps the reduction order of
// dot_chain: four-lane partials, horizontal sum, then a scalar tail.
template <std::size_t R>
inline void nt_tile(std::size_t k, const double* a, std::size_t lda, const double* b,
                    std::size_t ldb, double* c, std::size_t ldc) {
  const std::size_t k4 = k & ~std::size_t{3};
  __m256d s[R][4];
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t q = 0; q < 4; ++q) s[r][q] = _mm256_setzero_pd();
  }
  for (std::size_t p = 0; p < k4; p += 4) {
    __m256d av[R];
    for (std::size_t r = 0; r < R; ++r) av[r] = _mm256_loadu_pd(a + r * lda + p);
    for (std::size_t q = 0; q < 4; ++q) {
      const __m256d bv = _mm256_loadu_pd(b + q * ldb + p);
      for (std::size_t r = 0; r < R; ++r) s[r][q] = _mm256_fmadd_pd(av[r], bv, s[r][q]);
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    const double* ar = a + r * lda;
    for (std::size_t q = 0; q < 4; ++q) {
      const double* bq = b + q * ldb;
      double t = hsum(s[r][q]);
      for (std::size_t p = k4; p < k; ++p) t = std::fma(ar[p], bq[p], t);
      c[r * ldc + q] += t;
    }
  }
}

}  // namespace

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc) {
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i + 3 <= m; i += 3) {
    for (std::size_t j = 0; j < n4; j += 4) {
      nt_tile<3>(k, a + i * lda, lda, b + j * ldb, ldb, c + i * ldc + j, ldc);
    }
  }
  for (; i < m; ++i) {
    for (std::size_t j = 0; j < n4; j += 4) {
      nt_tile<1>(k, a + i * lda, lda, b + j * ldb, ldb, c + i * ldc + j, ldc);
    }
  }
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = n4; j < n; ++j) {
      c[r * ldc + j] += dot_chain(a + r * lda, b + j * ldb, k);
    }
  }
}

}  // namespace lgspf::kernels::avx2

#endif  // __AVX2__ && __FMA__
