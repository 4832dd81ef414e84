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

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <vector>

#include "sqsm/kernels.hpp"
#include "sqsm/rng.hpp"

namespace sqsm::kernels {
namespace {

std::vector<float> random_vec(Rng& rng, std::size_t n) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

class VectorIsa : public ::testing::TestWithParam<Isa> {
 protected:
  void SetUp() override {
    if (!isa_supported(GetParam())) GTEST_SKIP() << isa_name(GetParam()) << " unavailable";
  }
};

TEST_P(VectorIsa, GemmMatchesScalarReferenceOnRandomShapes) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = static_cast<int>(rng.range(1, 37));
    const int n = static_cast<int>(rng.range(1, 70));
    const int k = static_cast<int>(rng.range(0, 50));
    const bool ta = rng.bernoulli(0.5);
    const bool tb = rng.bernoulli(0.5);
    const float beta = std::array<float, 3>{0.0f, 1.0f, 0.5f}[rng.below(3)];
    const int lda = (ta ? m : k) + static_cast<int>(rng.below(3));
    const int ldb = (tb ? k : n) + static_cast<int>(rng.below(3));
    const int ldc = n + static_cast<int>(rng.below(3));
    const auto a = random_vec(rng, static_cast<std::size_t>(ta ? k : m) * lda + 1);
    const auto b = random_vec(rng, static_cast<std::size_t>(tb ? n : k) * ldb + 1);
    auto c_ref = random_vec(rng, static_cast<std::size_t>(m) * ldc);
    auto c_vec = c_ref;
    sgemm(Isa::kScalar, ta, tb, m, n, k, a.data(), lda, b.data(), ldb, beta, c_ref.data(), ldc);
    sgemm(GetParam(), ta, tb, m, n, k, a.data(), lda, b.data(), ldb, beta, c_vec.data(), ldc);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < ldc; ++j) {
        const std::size_t idx = static_cast<std::size_t>(i) * ldc + j;
        // Padding columns beyond n must be left untouched.
        const float tol = j < n ? 1e-5f * static_cast<float>(k + 1) : 0.0f;
        ASSERT_NEAR(c_ref[idx], c_vec[idx], tol)
            << "trial " << trial << " m=" << m << " n=" << n << " k=" << k << " ta=" << ta
            << " tb=" << tb << " at " << i << "," << j;
      }
    }
  }
}

TEST_P(VectorIsa, DotAndAxpyMatchScalar) {
  Rng rng(11);
  for (std::size_t n : {0u, 1u, 7u, 8u, 15u, 16u, 17u, 100u, 1025u}) {
    const auto x = random_vec(rng, n);
    const auto y = random_vec(rng, n);
    EXPECT_NEAR(sdot(Isa::kScalar, x.data(), y.data(), n), sdot(GetParam(), x.data(), y.data(), n),
                1e-5 * static_cast<double>(n + 1));
    auto y1 = y;
    auto y2 = y;
    saxpy(Isa::kScalar, 0.75f, x.data(), y1.data(), n);
    saxpy(GetParam(), 0.75f, x.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-6f);
  }
}

TEST_P(VectorIsa, BetaZeroIgnoresGarbageInOutput) {
  const float a[4] = {1, 2, 3, 4};
  const float b[4] = {1, 0, 0, 1};
  float c[4] = {NAN, NAN, NAN, NAN};
  sgemm(GetParam(), false, false, 2, 2, 2, a, 2, b, 2, 0.0f, c, 2);
  EXPECT_FLOAT_EQ(c[0], 1);
  EXPECT_FLOAT_EQ(c[1], 2);
  EXPECT_FLOAT_EQ(c[2], 3);
  EXPECT_FLOAT_EQ(c[3], 4);
}

INSTANTIATE_TEST_SUITE_P(AllIsas, VectorIsa, ::testing::Values(Isa::kScalar, Isa::kAvx2),
                         [](const auto& info) { return std::string(isa_name(info.param)); });

TEST(KernelDispatch, ScalarAlwaysSupportedAndSelectable) {
  const Isa before = active_isa();
  EXPECT_TRUE(isa_supported(Isa::kScalar));
  set_active_isa(Isa::kScalar);
  EXPECT_EQ(active_isa(), Isa::kScalar);
  set_active_isa(before);
}

TEST(KernelDispatch, DoubleGemmUsesReference) {
  const double a[2] = {1.5, -2.0};
  const double b[2] = {4.0, 0.25};
  double c[1] = {0.0};
  gemm<double>(false, true, 1, 1, 2, a, 2, b, 2, 0.0, c, 1);
  EXPECT_DOUBLE_EQ(c[0], 5.5);
}

}  // namespace
}  // namespace sqsm::kernels
