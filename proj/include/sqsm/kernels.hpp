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

#pragma once

#include <cstddef>

namespace sqsm::kernels {

/// Instruction-set variants of the dense arithmetic kernels.
///
/// kScalar is the reference implementation; vector variants must agree with it
/// to within float rounding and are selected at runtime from CPU features.
/// SQSM_ISA=scalar|avx2 in the environment overrides the automatic choice.
enum class Isa { kScalar, kAvx2 };

const char* isa_name(Isa isa);
bool isa_supported(Isa isa);
Isa best_supported_isa();
Isa active_isa();
/// Throws std::invalid_argument if the CPU cannot run `isa`.
void set_active_isa(Isa isa);

// Row-major GEMM: C[M,N] = beta * C + op(A)[M,K] * op(B)[K,N], where op(X) is X
// or X^T. Leading dimensions are row strides of the stored (untransposed) arrays.
// With beta == 0, C is overwritten without being read.
void sgemm(Isa isa, bool trans_a, bool trans_b, int m, int n, int k, const float* a, int lda,
           const float* b, int ldb, float beta, float* c, int ldc);
float sdot(Isa isa, const float* x, const float* y, std::size_t n);
/// y += alpha * x
void saxpy(Isa isa, float alpha, const float* x, float* y, std::size_t n);

namespace scalar {
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, int lda, const T* b,
          int ldb, T beta, T* c, int ldc);
template <typename T>
T dot(const T* x, const T* y, std::size_t n);
template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
void sgemm(bool trans_a, bool trans_b, int m, int n, int k, const float* a, int lda,
           const float* b, int ldb, float beta, float* c, int ldc);
float sdot(const float* x, const float* y, std::size_t n);
void saxpy(float alpha, const float* x, float* y, std::size_t n);
}  // namespace avx2
#endif

/// Element-type generic entry points used by the tensor ops. float goes
/// through the active ISA; double always uses the scalar reference.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, int lda, const T* b,
          int ldb, T beta, T* c, int ldc);
template <typename T>
T dot(const T* x, const T* y, std::size_t n);
template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n);

}  // namespace sqsm::kernels
