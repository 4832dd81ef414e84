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

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sqsm/autograd.hpp"
#include "sqsm/ops.hpp"
#include "sqsm/rng.hpp"

namespace sqsm::nn {

/// Non-learnable state that still has to be saved with a model.
template <typename T>
struct Buffer {
  std::string name;
  BasicTensor<T>* tensor;
};

/// Receives every parameter and buffer of a layer tree in a fixed order.
template <typename T>
struct StateList {
  std::vector<Parameter<T>*> params;
  std::vector<Buffer<T>> buffers;
};

/// Number of learnable scalars; running statistics are buffers and not counted.
template <typename T>
std::int64_t param_count(const StateList<T>& state) {
  std::int64_t n = 0;
  for (const Parameter<T>* p : state.params) n += p->numel();
  return n;
}

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in, int out, int kernel, int stride, int padding, bool bias,
         Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> x);
  void collect(StateList<T>& state);
  /// Adds a zero bias if the layer has none.
  void ensure_bias();

  int in_channels() const { return static_cast<int>(weight.value.dim(1)); }
  int out_channels() const { return static_cast<int>(weight.value.dim(0)); }
  bool has_bias() const { return !bias.value.empty(); }

  Parameter<T> weight;  // [out, in, k, k]
  Parameter<T> bias;    // [out], or empty
  int stride = 1;
  int padding = 0;
};

template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  /// Kernel 2, stride 2.
  ConvTranspose2d(const std::string& name, int in, int out, Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> x);
  void collect(StateList<T>& state);

  Parameter<T> weight;  // [in, out, 2, 2]
  Parameter<T> bias;    // [out]
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, int channels);

  Var<T> forward(Tape<T>& tape, Var<T> x, ops::Mode mode);
  void collect(StateList<T>& state);

  static constexpr double kMomentum = 0.1;
  static constexpr double kEps = 1e-5;

  std::string name;
  Parameter<T> gamma;
  Parameter<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
};

/// Running statistics and affine terms of an inference-mode batch norm.
template <typename T>
struct BatchNormStats {
  BasicTensor<T> gamma, beta, mean, var;
  double eps = BatchNorm2d<T>::kEps;
};

template <typename T>
struct FoldedConv {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

/// Absorbs an inference-mode batch norm into the preceding convolution.
/// `bias` may be empty (treated as zero). Throws NumericError when any
/// running variance satisfies var + eps <= 0.
template <typename T>
FoldedConv<T> fold_batchnorm(const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                             const BatchNormStats<T>& bn);

/// conv -> batch norm -> ReLU. After fold() the batch norm is gone and the
/// convolution carries the folded weights and bias.
template <typename T>
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(const std::string& name, int in, int out, int stride, Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> x, ops::Mode mode);
  void collect(StateList<T>& state);
  void fold();
  /// Structure only: used when loading weights that were saved folded.
  void mark_folded();
  bool folded() const { return folded_; }

  Conv2d<T> conv;
  BatchNorm2d<T> bn;

 private:
  bool folded_ = false;
};

/// conv3x3 stride 2 -> BN -> ReLU -> conv3x3 -> BN -> ReLU; halves H and W.
template <typename T>
class DoubleConvDown {
 public:
  DoubleConvDown() = default;
  DoubleConvDown(const std::string& name, int in, int out, Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> x, ops::Mode mode);
  void collect(StateList<T>& state);
  void fold();
  void mark_folded();

  int in_channels() const { return first.conv.in_channels(); }
  int out_channels() const { return second.conv.out_channels(); }

  ConvBnRelu<T> first;
  ConvBnRelu<T> second;
};

/// Transposed conv (2x up, channels halved) -> concat skip -> two conv+BN+ReLU.
template <typename T>
class DoubleConvUp {
 public:
  DoubleConvUp() = default;
  /// `in` must be even; the concatenated tensor has in / 2 + skip channels.
  DoubleConvUp(const std::string& name, int in, int skip, int out, Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> x, Var<T> skip, ops::Mode mode);
  void collect(StateList<T>& state);
  void fold();
  void mark_folded();

  int out_channels() const { return second.conv.out_channels(); }

  ConvTranspose2d<T> up;
  ConvBnRelu<T> first;
  ConvBnRelu<T> second;
  int skip_channels = 0;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> x);
  void collect(StateList<T>& state);

  Parameter<T> weight;  // [out, in]
  Parameter<T> bias;    // [out]
};

/// Three linear layers with ReLU between them.
template <typename T>
class Mlp3 {
 public:
  Mlp3() = default;
  Mlp3(const std::string& name, int in, int hidden, int out, Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> x);
  void collect(StateList<T>& state);

  Linear<T> l0, l1, l2;
};

/// Normalisation-free transformer layer: x + attn(x), then x + FFN(x) with a
/// GELU hidden layer.
template <typename T>
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(const std::string& name, int dim, int heads, int ffn_dim, Rng& rng);

  /// tokens: [T, dim] -> [T, dim].
  Var<T> forward(Tape<T>& tape, Var<T> tokens);
  void collect(StateList<T>& state);

  int dim = 0;
  int heads = 1;
  Parameter<T> wq, wk, wv, wo;  // [dim, dim], no biases
  Linear<T> ffn_in;
  Linear<T> ffn_out;
};

/// One MLP per output mask plus the IoU regressor.
template <typename T>
class MaskMlpHead {
 public:
  MaskMlpHead() = default;
  MaskMlpHead(const std::string& name, int token_dim, int feature_channels, int masks, Rng& rng);

  /// mask_tokens: `masks` vars of [N, token_dim] -> [N, masks, feature_channels].
  Var<T> mask_weights(Tape<T>& tape, const std::vector<Var<T>>& mask_tokens);
  /// iou_token: [N, token_dim] -> [N, masks].
  Var<T> iou(Tape<T>& tape, Var<T> iou_token);
  void collect(StateList<T>& state);

  int masks() const { return static_cast<int>(mask_mlps.size()); }

  std::vector<Mlp3<T>> mask_mlps;
  Mlp3<T> iou_mlp;
};

}  // namespace sqsm::nn
