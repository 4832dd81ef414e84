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

#include <vector>

#include "sqsm/autograd.hpp"

namespace sqsm::ops {

/// NCHW convolution. `bias` may be an invalid Var (no bias).
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, int stride, int padding);

/// NCHW transposed convolution without padding; weight is [C_in, C_out, kh, kw]
/// and the output is (H - 1) * stride + kh on each spatial axis.
template <typename T>
Var<T> conv_transpose2d(Var<T> input, Var<T> weight, Var<T> bias, int stride);

enum class Mode { kTrain, kInfer };

/// Per-channel batch normalisation over N, H, W. Train mode normalises with
/// batch statistics and updates the running buffers in place.
template <typename T>
Var<T> batchnorm2d(Var<T> input, Var<T> gamma, Var<T> beta, BasicTensor<T>& running_mean,
                   BasicTensor<T>& running_var, Mode mode, double momentum, double eps);

template <typename T>
Var<T> relu(Var<T> x);

/// Exact (erf) GELU.
template <typename T>
Var<T> gelu(Var<T> x);

/// x: [N, in], weight: [out, in], bias: [out] or invalid.
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias);

/// Multi-head scaled dot-product self-attention with a residual connection:
/// y = x + concat_h(softmax(Q_h K_h^T / sqrt(d_h)) V_h) Wo^T, with Q = x Wq^T etc.
template <typename T>
Var<T> attention(Var<T> tokens, Var<T> wq, Var<T> wk, Var<T> wv, Var<T> wo, int heads);

/// Softmax probabilities of the attention op, [heads, T, T], for inspection.
template <typename T>
BasicTensor<T> attention_probabilities(const BasicTensor<T>& tokens, const BasicTensor<T>& wq,
                                       const BasicTensor<T>& wk, int heads);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> x, T factor);
template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> mean(Var<T> x);

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

/// Concatenation along `axis`; all other extents must agree.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis);

/// [start, start + length) along `axis`.
template <typename T>
Var<T> slice(Var<T> x, int axis, std::int64_t start, std::int64_t length);

/// Rows of a [R, D] table, in `rows` order (repeats allowed).
template <typename T>
Var<T> gather_rows(Var<T> table, const std::vector<int>& rows);

/// Per-sample dot product of a feature map with per-mask weight vectors:
/// features [N, C, H, W], weights [N, K, C] -> [N, K, H, W].
template <typename T>
Var<T> hyper_dot(Var<T> features, Var<T> weights);

}  // namespace sqsm::ops
