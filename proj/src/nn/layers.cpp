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

#include <cmath>

#include "sqsm/nn.hpp"

namespace sqsm::nn {
namespace {

template <typename T>
BasicTensor<T> he_normal(Shape shape, int fan_in, Rng& rng) {
  BasicTensor<T> t(std::move(shape));
  const double sd = std::sqrt(2.0 / fan_in);
  for (auto& v : t.data()) v = static_cast<T>(rng.normal(0.0, sd));
  return t;
}

template <typename T>
BasicTensor<T> scaled_normal(Shape shape, int fan_in, Rng& rng) {
  BasicTensor<T> t(std::move(shape));
  const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<T>(rng.normal(0.0, sd));
  return t;
}

template <typename T>
Var<T> optional_param(Tape<T>& tape, Parameter<T>& p) {
  return p.value.empty() ? Var<T>() : tape.param(p);
}

void require_positive(int v, const char* what) {
  if (v <= 0) throw ShapeError(std::string(what) + " must be positive, got " + std::to_string(v));
}

}  // namespace

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, int in, int out, int kernel, int s, int p, bool bias,
                  Rng& rng)
    : weight(name + ".weight", he_normal<T>({out, in, kernel, kernel}, in * kernel * kernel, rng)),
      stride(s),
      padding(p) {
  require_positive(in, "conv in_channels");
  require_positive(out, "conv out_channels");
  if (bias) this->bias = Parameter<T>(name + ".bias", BasicTensor<T>({out}));
}

template <typename T>
Var<T> Conv2d<T>::forward(Tape<T>& tape, Var<T> x) {
  return ops::conv2d(x, tape.param(weight), optional_param(tape, bias), stride, padding);
}

template <typename T>
void Conv2d<T>::collect(StateList<T>& state) {
  state.params.push_back(&weight);
  if (has_bias()) state.params.push_back(&bias);
}

template <typename T>
void Conv2d<T>::ensure_bias() {
  if (has_bias()) return;
  std::string base = weight.name.substr(0, weight.name.size() - std::string(".weight").size());
  bias = Parameter<T>(base + ".bias", BasicTensor<T>({out_channels()}));
}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(const std::string& name, int in, int out, Rng& rng)
    : weight(name + ".weight", he_normal<T>({in, out, 2, 2}, in, rng)),
      bias(name + ".bias", BasicTensor<T>({out})) {
  require_positive(in, "conv_transpose in_channels");
  require_positive(out, "conv_transpose out_channels");
}

template <typename T>
Var<T> ConvTranspose2d<T>::forward(Tape<T>& tape, Var<T> x) {
  return ops::conv_transpose2d(x, tape.param(weight), tape.param(bias), 2);
}

template <typename T>
void ConvTranspose2d<T>::collect(StateList<T>& state) {
  state.params.push_back(&weight);
  state.params.push_back(&bias);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(const std::string& n, int channels)
    : name(n),
      gamma(n + ".gamma", BasicTensor<T>({channels}, T(1))),
      beta(n + ".beta", BasicTensor<T>({channels})),
      running_mean({channels}),
      running_var({channels}, T(1)) {}

template <typename T>
Var<T> BatchNorm2d<T>::forward(Tape<T>& tape, Var<T> x, ops::Mode mode) {
  return ops::batchnorm2d(x, tape.param(gamma), tape.param(beta), running_mean, running_var, mode,
                          kMomentum, kEps);
}

template <typename T>
void BatchNorm2d<T>::collect(StateList<T>& state) {
  state.params.push_back(&gamma);
  state.params.push_back(&beta);
  state.buffers.push_back({name + ".running_mean", &running_mean});
  state.buffers.push_back({name + ".running_var", &running_var});
}

template <typename T>
FoldedConv<T> fold_batchnorm(const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                             const BatchNormStats<T>& bn) {
  if (weight.rank() != 4) {
    throw ShapeError("fold_batchnorm: weight must be [out, in, kh, kw], got " +
                     shape_string(weight.shape()));
  }
  const std::int64_t out = weight.dim(0);
  for (const BasicTensor<T>* t : {&bn.gamma, &bn.beta, &bn.mean, &bn.var}) {
    if (t->rank() != 1 || t->dim(0) != out) {
      throw ShapeError("fold_batchnorm: batch-norm vectors must be [" + std::to_string(out) +
                       "], got " + shape_string(t->shape()));
    }
  }
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != out)) {
    throw ShapeError("fold_batchnorm: bias must be [" + std::to_string(out) + "], got " +
                     shape_string(bias.shape()));
  }
  FoldedConv<T> f{weight, BasicTensor<T>({out})};
  const std::int64_t per = weight.size() / out;
  for (std::int64_t c = 0; c < out; ++c) {
    const double denom = static_cast<double>(bn.var[c]) + bn.eps;
    if (!(denom > 0.0)) {
      throw NumericError("fold_batchnorm: running variance " + std::to_string(bn.var[c]) +
                         " at channel " + std::to_string(c) + " is not above -eps");
    }
    const double s = static_cast<double>(bn.gamma[c]) / std::sqrt(denom);
    for (std::int64_t i = 0; i < per; ++i) {
      T& w = f.weight[c * per + i];
      w = static_cast<T>(w * s);
    }
    const double b = bias.empty() ? 0.0 : static_cast<double>(bias[c]);
    f.bias[c] = static_cast<T>((b - bn.mean[c]) * s + bn.beta[c]);
  }
  return f;
}

template <typename T>
ConvBnRelu<T>::ConvBnRelu(const std::string& name, int in, int out, int stride, Rng& rng)
    : conv(name + ".conv", in, out, 3, stride, 1, false, rng), bn(name + ".bn", out) {}

template <typename T>
Var<T> ConvBnRelu<T>::forward(Tape<T>& tape, Var<T> x, ops::Mode mode) {
  Var<T> y = conv.forward(tape, x);
  if (!folded_) y = bn.forward(tape, y, mode);
  return ops::relu(y);
}

template <typename T>
void ConvBnRelu<T>::collect(StateList<T>& state) {
  conv.collect(state);
  if (!folded_) bn.collect(state);
}

template <typename T>
void ConvBnRelu<T>::fold() {
  if (folded_) return;
  FoldedConv<T> f = fold_batchnorm(
      conv.weight.value, conv.bias.value,
      BatchNormStats<T>{bn.gamma.value, bn.beta.value, bn.running_mean, bn.running_var});
  conv.ensure_bias();
  conv.weight.value = std::move(f.weight);
  conv.bias.value = std::move(f.bias);
  conv.weight.zero_grad();
  conv.bias.zero_grad();
  folded_ = true;
}

template <typename T>
void ConvBnRelu<T>::mark_folded() {
  conv.ensure_bias();
  folded_ = true;
}

template <typename T>
DoubleConvDown<T>::DoubleConvDown(const std::string& name, int in, int out, Rng& rng)
    : first(name + ".0", in, out, 2, rng), second(name + ".1", out, out, 1, rng) {}

template <typename T>
Var<T> DoubleConvDown<T>::forward(Tape<T>& tape, Var<T> x, ops::Mode mode) {
  if (x.value().rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw ShapeError("DoubleConvDown needs an NCHW input with even H and W, got " +
                     shape_string(x.shape()));
  }
  return second.forward(tape, first.forward(tape, x, mode), mode);
}

template <typename T>
void DoubleConvDown<T>::collect(StateList<T>& state) {
  first.collect(state);
  second.collect(state);
}

template <typename T>
void DoubleConvDown<T>::fold() {
  first.fold();
  second.fold();
}

template <typename T>
void DoubleConvDown<T>::mark_folded() {
  first.mark_folded();
  second.mark_folded();
}

template <typename T>
DoubleConvUp<T>::DoubleConvUp(const std::string& name, int in, int skip, int out, Rng& rng)
    : skip_channels(skip) {
  if (in % 2 != 0) {
    throw ShapeError("DoubleConvUp needs even input channels to halve, got " + std::to_string(in));
  }
  up = ConvTranspose2d<T>(name + ".up", in, in / 2, rng);
  first = ConvBnRelu<T>(name + ".0", in / 2 + skip, out, 1, rng);
  second = ConvBnRelu<T>(name + ".1", out, out, 1, rng);
}

template <typename T>
Var<T> DoubleConvUp<T>::forward(Tape<T>& tape, Var<T> x, Var<T> skip, ops::Mode mode) {
  Var<T> u = up.forward(tape, x);
  const Shape& us = u.shape();
  const Shape& ss = skip.shape();
  if (ss.size() != 4 || ss[0] != us[0] || ss[1] != skip_channels || ss[2] != us[2] ||
      ss[3] != us[3]) {
    throw ShapeError("DoubleConvUp skip must be [" + std::to_string(us[0]) + "x" +
                     std::to_string(skip_channels) + "x" + std::to_string(us[2]) + "x" +
                     std::to_string(us[3]) + "], got " + shape_string(ss));
  }
  Var<T> cat = ops::concat<T>({u, skip}, 1);
  return second.forward(tape, first.forward(tape, cat, mode), mode);
}

template <typename T>
void DoubleConvUp<T>::collect(StateList<T>& state) {
  up.collect(state);
  first.collect(state);
  second.collect(state);
}

template <typename T>
void DoubleConvUp<T>::fold() {
  first.fold();
  second.fold();
}

template <typename T>
void DoubleConvUp<T>::mark_folded() {
  first.mark_folded();
  second.mark_folded();
}

template <typename T>
Linear<T>::Linear(const std::string& name, int in, int out, Rng& rng)
    : weight(name + ".weight", scaled_normal<T>({out, in}, in, rng)),
      bias(name + ".bias", BasicTensor<T>({out})) {
  require_positive(in, "linear in_features");
  require_positive(out, "linear out_features");
}

template <typename T>
Var<T> Linear<T>::forward(Tape<T>& tape, Var<T> x) {
  return ops::linear(x, tape.param(weight), tape.param(bias));
}

template <typename T>
void Linear<T>::collect(StateList<T>& state) {
  state.params.push_back(&weight);
  state.params.push_back(&bias);
}

template <typename T>
Mlp3<T>::Mlp3(const std::string& name, int in, int hidden, int out, Rng& rng)
    : l0(name + ".0", in, hidden, rng),
      l1(name + ".1", hidden, hidden, rng),
      l2(name + ".2", hidden, out, rng) {}

template <typename T>
Var<T> Mlp3<T>::forward(Tape<T>& tape, Var<T> x) {
  Var<T> h = ops::relu(l0.forward(tape, x));
  h = ops::relu(l1.forward(tape, h));
  return l2.forward(tape, h);
}

template <typename T>
void Mlp3<T>::collect(StateList<T>& state) {
  l0.collect(state);
  l1.collect(state);
  l2.collect(state);
}

template <typename T>
TransformerLayer<T>::TransformerLayer(const std::string& name, int d, int h, int ffn_dim, Rng& rng)
    : dim(d),
      heads(h),
      wq(name + ".wq", scaled_normal<T>({d, d}, d, rng)),
      wk(name + ".wk", scaled_normal<T>({d, d}, d, rng)),
      wv(name + ".wv", scaled_normal<T>({d, d}, d, rng)),
      wo(name + ".wo", scaled_normal<T>({d, d}, d, rng)),
      ffn_in(name + ".ffn_in", d, ffn_dim, rng),
      ffn_out(name + ".ffn_out", ffn_dim, d, rng) {
  if (h <= 0 || d % h != 0) {
    throw ShapeError("transformer dim " + std::to_string(d) + " is not divisible by " +
                     std::to_string(h) + " heads");
  }
  // Residual branches start small so the stack begins close to identity.
  for (auto& v : wo.value.data()) v = static_cast<T>(v * 0.5);
  for (auto& v : ffn_out.weight.value.data()) v = static_cast<T>(v * 0.5);
}

template <typename T>
Var<T> TransformerLayer<T>::forward(Tape<T>& tape, Var<T> tokens) {
  Var<T> x = ops::attention(tokens, tape.param(wq), tape.param(wk), tape.param(wv),
                            tape.param(wo), heads);
  Var<T> h = ops::gelu(ffn_in.forward(tape, x));
  return ops::add(x, ffn_out.forward(tape, h));
}

template <typename T>
void TransformerLayer<T>::collect(StateList<T>& state) {
  for (Parameter<T>* p : {&wq, &wk, &wv, &wo}) state.params.push_back(p);
  ffn_in.collect(state);
  ffn_out.collect(state);
}

template <typename T>
MaskMlpHead<T>::MaskMlpHead(const std::string& name, int token_dim, int feature_channels,
                            int masks, Rng& rng) {
  require_positive(masks, "mask count");
  for (int i = 0; i < masks; ++i) {
    mask_mlps.emplace_back(name + ".mask" + std::to_string(i), token_dim, token_dim,
                           feature_channels, rng);
  }
  iou_mlp = Mlp3<T>(name + ".iou", token_dim, token_dim, masks, rng);
}

template <typename T>
Var<T> MaskMlpHead<T>::mask_weights(Tape<T>& tape, const std::vector<Var<T>>& mask_tokens) {
  if (mask_tokens.size() != mask_mlps.size()) {
    throw ShapeError("mask head expects " + std::to_string(mask_mlps.size()) + " tokens, got " +
                     std::to_string(mask_tokens.size()));
  }
  std::vector<Var<T>> rows;
  rows.reserve(mask_tokens.size());
  for (std::size_t i = 0; i < mask_tokens.size(); ++i) {
    Var<T> w = mask_mlps[i].forward(tape, mask_tokens[i]);  // [N, C]
    rows.push_back(ops::reshape(w, {w.dim(0), 1, w.dim(1)}));
  }
  return ops::concat(rows, 1);
}

template <typename T>
Var<T> MaskMlpHead<T>::iou(Tape<T>& tape, Var<T> iou_token) {
  return iou_mlp.forward(tape, iou_token);
}

template <typename T>
void MaskMlpHead<T>::collect(StateList<T>& state) {
  for (auto& m : mask_mlps) m.collect(state);
  iou_mlp.collect(state);
}

#define SQSM_INSTANTIATE_NN(T)                                                               \
  template class Conv2d<T>;                                                                  \
  template class ConvTranspose2d<T>;                                                         \
  template class BatchNorm2d<T>;                                                             \
  template class ConvBnRelu<T>;                                                              \
  template class DoubleConvDown<T>;                                                          \
  template class DoubleConvUp<T>;                                                            \
  template class Linear<T>;                                                                  \
  template class Mlp3<T>;                                                                    \
  template class TransformerLayer<T>;                                                        \
  template class MaskMlpHead<T>;                                                             \
  template FoldedConv<T> fold_batchnorm(const BasicTensor<T>&, const BasicTensor<T>&,       \
                                        const BatchNormStats<T>&);

SQSM_INSTANTIATE_NN(float)
SQSM_INSTANTIATE_NN(double)

}  // namespace sqsm::nn
