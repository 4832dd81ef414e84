// Copyright 2026 The sqsm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "sqsm/kernels.hpp"

namespace sqsm::kernels {
namespace {

#if defined(__x86_64__) || defined(_M_X64)
constexpr bool kHaveAvx2Build = true;
#else
constexpr bool kHaveAvx2Build = false;
#endif

Isa initial_isa() {
  if (const char* env = std::getenv("SQSM_ISA")) {
    const std::string want(env);
    if (want == "scalar") return Isa::kScalar;
    if (want == "avx2" && isa_supported(Isa::kAvx2)) return Isa::kAvx2;
  }
  return best_supported_isa();
}

std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{initial_isa()};
  return slot;
}

}  // namespace

const char* isa_name(Isa isa) {
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
#if defined(__x86_64__) || defined(_M_X64)
      return kHaveAvx2Build && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa best_supported_isa() { return isa_supported(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar; }

Isa active_isa() { return active_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument(std::string("ISA not supported on this CPU: ") + isa_name(isa));
  }
  active_slot().store(isa, std::memory_order_relaxed);
}

void sgemm(Isa isa, bool trans_a, bool trans_b, int m, int n, int k, const float* a, int lda,
           const float* b, int ldb, float beta, float* c, int ldc) {
#if defined(__x86_64__) || defined(_M_X64)
  if (isa == Isa::kAvx2) {
    avx2::sgemm(trans_a, trans_b, m, n, k, a, lda, b, ldb, beta, c, ldc);
    return;
  }
#endif
  scalar::gemm<float>(trans_a, trans_b, m, n, k, a, lda, b, ldb, beta, c, ldc);
}

float sdot(Isa isa, const float* x, const float* y, std::size_t n) {
#if defined(__x86_64__) || defined(_M_X64)
  if (isa == Isa::kAvx2) return avx2::sdot(x, y, n);
#endif
  return scalar::dot<float>(x, y, n);
}

void saxpy(Isa isa, float alpha, const float* x, float* y, std::size_t n) {
#if defined(__x86_64__) || defined(_M_X64)
  if (isa == Isa::kAvx2) {
    avx2::saxpy(alpha, x, y, n);
    return;
  }
#endif
  scalar::axpy<float>(alpha, x, y, n);
}

template <>
void gemm<float>(bool trans_a, bool trans_b, int m, int n, int k, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
  sgemm(active_isa(), trans_a, trans_b, m, n, k, a, lda, b, ldb, beta, c, ldc);
}
template <>
void gemm<double>(bool trans_a, bool trans_b, int m, int n, int k, const double* a, int lda,
                  const double* b, int ldb, double beta, double* c, int ldc) {
  scalar::gemm<double>(trans_a, trans_b, m, n, k, a, lda, b, ldb, beta, c, ldc);
}
template <>
float dot<float>(const float* x, const float* y, std::size_t n) {
  return sdot(active_isa(), x, y, n);
}
template <>
double dot<double>(const double* x, const double* y, std::size_t n) {
  return scalar::dot<double>(x, y, n);
}
template <>
void axpy<float>(float alpha, const float* x, float* y, std::size_t n) {
  saxpy(active_isa(), alpha, x, y, n);
}
template <>
void axpy<double>(double alpha, const double* x, double* y, std::size_t n) {
  scalar::axpy<double>(alpha, x, y, n);
}

}  // namespace sqsm::kernels
