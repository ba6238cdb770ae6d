// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense double-precision inner loops used by every layer of the pipeline.
//
// Each kernel has a scalar reference variant and an AVX2+FMA variant. The
// active table is chosen once at first use from CPUID, and may be forced with
// LGSPF_KERNELS=scalar|avx2 or select_backend(). All matrices are row-major
// with explicit leading dimensions so that head slices can be addressed in
// place.
//
// Every variant computes each output element with a summation order that
// depends only on that element's own operands, never on the row or column
// blocking. Results are therefore identical whether a row is evaluated alone
// or inside a larger batch, which the causal-mask tests rely on.

#include <cstddef>
#include <span>
#include <string_view>

namespace lgspf::kernels {

enum class Backend { kScalar, kAvx2 };

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C(m x n) += A(m x k) * B(k x n)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);
  // C(m x n) += A(m x k) * B(n x k)^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);
  // C(m x n) += A(k x m)^T * B(k x n)
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);
};

bool backend_supported(Backend backend);
std::string_view backend_name(Backend backend);

// Table for a specific backend. Throws if the CPU cannot run it.
const KernelTable& table(Backend backend);

const KernelTable& active();
Backend active_backend();
void select_backend(Backend backend);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc);
}  // namespace scalar

namespace avx2 {
// Defined only when the AVX2 translation unit was built; callers go through
// table(Backend::kAvx2), which checks the CPU first.
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc);
}  // namespace avx2

}  // namespace lgspf::kernels
