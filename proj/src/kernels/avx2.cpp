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

// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "sqsm/kernels.hpp"

namespace sqsm::kernels::avx2 {
namespace {

constexpr int kMr = 4;
constexpr int kNr = 16;

__m256i lane_mask(int valid) {
  alignas(32) static const std::int32_t table[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                                     0,  0,  0,  0,  0,  0,  0,  0};
  valid = std::clamp(valid, 0, 8);
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(table + 8 - valid));
}

// One kMr x kNr tile of C from a packed A panel (k-major, kMr wide) and a
// packed B panel (k-major, kNr wide, zero padded). Only the top-left
// rows x cols corner is stored.
void tile(int rows, int cols, int k, const float* pa, const float* pb, float beta, float* c,
          int ldc) {
  __m256 acc[kMr][2];
  for (int r = 0; r < kMr; ++r) {
    acc[r][0] = _mm256_setzero_ps();
    acc[r][1] = _mm256_setzero_ps();
  }
  for (int p = 0; p < k; ++p) {
    const __m256 b0 = _mm256_loadu_ps(pb);
    const __m256 b1 = _mm256_loadu_ps(pb + 8);
    for (int r = 0; r < kMr; ++r) {
      const __m256 av = _mm256_broadcast_ss(pa + r);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
    }
    pa += kMr;
    pb += kNr;
  }
  const __m256 vbeta = _mm256_set1_ps(beta);
  const bool full = cols == kNr;
  const __m256i m0 = lane_mask(cols);
  const __m256i m1 = lane_mask(cols - 8);
  for (int r = 0; r < rows; ++r) {
    float* crow = c + static_cast<std::ptrdiff_t>(r) * ldc;
    __m256 v0 = acc[r][0];
    __m256 v1 = acc[r][1];
    if (full) {
      if (beta != 0.0f) {
        v0 = _mm256_fmadd_ps(vbeta, _mm256_loadu_ps(crow), v0);
        v1 = _mm256_fmadd_ps(vbeta, _mm256_loadu_ps(crow + 8), v1);
      }
      _mm256_storeu_ps(crow, v0);
      _mm256_storeu_ps(crow + 8, v1);
    } else {
      if (beta != 0.0f) {
        v0 = _mm256_fmadd_ps(vbeta, _mm256_maskload_ps(crow, m0), v0);
        v1 = _mm256_fmadd_ps(vbeta, _mm256_maskload_ps(crow + 8, m1), v1);
      }
      _mm256_maskstore_ps(crow, m0, v0);
      _mm256_maskstore_ps(crow + 8, m1, v1);
    }
  }
}

// Packs columns [j0, j0 + cols) of op(B) into a k x kNr panel.
void pack_b(bool trans_b, const float* b, int ldb, int k, int j0, int cols, float* dst) {
  if (!trans_b) {
    for (int p = 0; p < k; ++p) {
      const float* src = b + static_cast<std::ptrdiff_t>(p) * ldb + j0;
      float* d = dst + static_cast<std::ptrdiff_t>(p) * kNr;
      if (cols == kNr) {
        _mm256_storeu_ps(d, _mm256_loadu_ps(src));
        _mm256_storeu_ps(d + 8, _mm256_loadu_ps(src + 8));
      } else {
        int j = 0;
        for (; j < cols; ++j) d[j] = src[j];
        for (; j < kNr; ++j) d[j] = 0.0f;
      }
    }
  } else {
    // Stored B is [n, k].
    for (int j = 0; j < kNr; ++j) {
      if (j < cols) {
        const float* src = b + static_cast<std::ptrdiff_t>(j0 + j) * ldb;
        for (int p = 0; p < k; ++p) dst[static_cast<std::ptrdiff_t>(p) * kNr + j] = src[p];
      } else {
        for (int p = 0; p < k; ++p) dst[static_cast<std::ptrdiff_t>(p) * kNr + j] = 0.0f;
      }
    }
  }
}

}  // namespace

void sgemm(bool trans_a, bool trans_b, int m, int n, int k, const float* a, int lda,
           const float* b, int ldb, float beta, float* c, int ldc) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    for (int i = 0; i < m; ++i) {
      float* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
      for (int j = 0; j < n; ++j) crow[j] = beta == 0.0f ? 0.0f : beta * crow[j];
    }
    return;
  }

  // All of A as kMr-row panels, zero padded past m.
  const int mpanels = (m + kMr - 1) / kMr;
  thread_local std::vector<float> apack;
  apack.resize(static_cast<std::size_t>(mpanels) * k * kMr);
  for (int ip = 0; ip < mpanels; ++ip) {
    float* dst = apack.data() + static_cast<std::ptrdiff_t>(ip) * k * kMr;
    for (int p = 0; p < k; ++p) {
      for (int r = 0; r < kMr; ++r) {
        const int i = ip * kMr + r;
        float v = 0.0f;
        if (i < m) {
          v = trans_a ? a[static_cast<std::ptrdiff_t>(p) * lda + i]
                      : a[static_cast<std::ptrdiff_t>(i) * lda + p];
        }
        dst[static_cast<std::ptrdiff_t>(p) * kMr + r] = v;
      }
    }
  }

  // Column blocks sized so the packed B block stays in L2.
  const int nc = kNr * std::max(1, 8192 / k);
  thread_local std::vector<float> bpack;
  bpack.resize(static_cast<std::size_t>(k) * nc);
  for (int jb = 0; jb < n; jb += nc) {
    const int ncols = std::min(nc, n - jb);
    const int npanels = (ncols + kNr - 1) / kNr;
    for (int jp = 0; jp < npanels; ++jp) {
      const int j0 = jb + jp * kNr;
      pack_b(trans_b, b, ldb, k, j0, std::min(kNr, n - j0),
             bpack.data() + static_cast<std::ptrdiff_t>(jp) * k * kNr);
    }
    for (int ip = 0; ip < mpanels; ++ip) {
      const int rows = std::min(kMr, m - ip * kMr);
      const float* pa = apack.data() + static_cast<std::ptrdiff_t>(ip) * k * kMr;
      for (int jp = 0; jp < npanels; ++jp) {
        const int j0 = jb + jp * kNr;
        tile(rows, std::min(kNr, n - j0), k, pa,
             bpack.data() + static_cast<std::ptrdiff_t>(jp) * k * kNr, beta,
             c + static_cast<std::ptrdiff_t>(ip) * kMr * ldc + j0, ldc);
      }
    }
  }
}

float sdot(const float* x, const float* y, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
  }
  acc0 = _mm256_add_ps(acc0, acc1);
  __m128 lo = _mm256_castps256_ps128(acc0);
  __m128 hi = _mm256_extractf128_ps(acc0, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  float s = _mm_cvtss_f32(lo);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void saxpy(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace sqsm::kernels::avx2
