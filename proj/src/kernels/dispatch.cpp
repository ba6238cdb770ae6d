// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "lgspf/kernels.hpp"

namespace lgspf::kernels {

namespace {

constexpr KernelTable kScalarTable{scalar::dot, scalar::axpy, scalar::gemm_nn,
                                   scalar::gemm_nt, scalar::gemm_tn};

#if defined(LGSPF_HAVE_AVX2_TU)
constexpr KernelTable kAvx2Table{avx2::dot, avx2::axpy, avx2::gemm_nn,
                                 avx2::gemm_nt, avx2::gemm_tn};
#endif

Backend detect() {
  if (const char* forced = std::getenv("LGSPF_KERNELS")) {
    const std::string name(forced);
    if (name == "scalar") return Backend::kScalar;
    if (name == "avx2" && backend_supported(Backend::kAvx2)) return Backend::kAvx2;
  }
  return backend_supported(Backend::kAvx2) ? Backend::kAvx2 : Backend::kScalar;
}

struct Active {
  std::atomic<Backend> backend;
  std::atomic<const KernelTable*> kernels;
};

Active& current() {
  static Active state{detect(), nullptr};
  if (state.kernels.load(std::memory_order_acquire) == nullptr) {
    state.kernels.store(&table(state.backend.load()), std::memory_order_release);
  }
  return state;
}

}  // namespace

bool backend_supported(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
#if defined(LGSPF_HAVE_AVX2_TU)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::kAvx2 ? "avx2" : "scalar";
}

const KernelTable& table(Backend backend) {
  if (!backend_supported(backend)) {
    throw std::runtime_error("kernel backend not supported on this CPU: " +
                             std::string(backend_name(backend)));
  }
#if defined(LGSPF_HAVE_AVX2_TU)
  if (backend == Backend::kAvx2) return kAvx2Table;
#endif
  return kScalarTable;
}

const KernelTable& active() {
  return *current().kernels.load(std::memory_order_acquire);
}

Backend active_backend() { return current().backend.load(); }

void select_backend(Backend backend) {
  const KernelTable& chosen = table(backend);
  Active& state = current();
  state.backend.store(backend);
  state.kernels.store(&chosen, std::memory_order_release);
}

}  // namespace lgspf::kernels
