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

#include "sqsm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>

#include "sqsm/kernels.hpp"

namespace sqsm::ops {
namespace {

template <typename T>
void require_rank(const Var<T>& v, int rank, const char* op, const char* what) {
  if (v.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_string(v.shape()));
  }
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

struct ConvGeometry {
  int n, c, h, w;     // image
  int kh, kw, stride, pad;
  int oh, ow;         // sliding-window output
  int rows() const { return c * kh * kw; }
  int cols() const { return n * oh * ow; }
};

// Valid output columns [lo, hi) whose input column x*s - p + kj lies in [0, w).
inline void valid_range(int ow, int w, int stride, int offset, int* lo, int* hi) {
  // x*stride + offset >= 0  and  x*stride + offset <= w - 1
  int a = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  int b = (w - 1 - offset) < 0 ? 0 : (w - 1 - offset) / stride + 1;
  *lo = std::min(a, ow);
  *hi = std::max(*lo, std::min(b, ow));
}

// col[(c, ki, kj), (n, y, x)] = img[n, c, y*s - p + ki, x*s - p + kj] (0 outside).
template <typename T>
void im2col(const ConvGeometry& g, const T* img, T* col) {
  const std::ptrdiff_t cols = g.cols();
  for (int c = 0; c < g.c; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        T* dst = col + (static_cast<std::ptrdiff_t>(c * g.kh + ki) * g.kw + kj) * cols;
        const int off = kj - g.pad;
        int lo, hi;
        valid_range(g.ow, g.w, g.stride, off, &lo, &hi);
        for (int n = 0; n < g.n; ++n) {
          const T* src = img + (static_cast<std::ptrdiff_t>(n) * g.c + c) * g.h * g.w;
          for (int y = 0; y < g.oh; ++y) {
            const int iy = y * g.stride - g.pad + ki;
            T* drow = dst + (static_cast<std::ptrdiff_t>(n) * g.oh + y) * g.ow;
            if (iy < 0 || iy >= g.h) {
              std::fill(drow, drow + g.ow, T(0));
              continue;
            }
            const T* srow = src + static_cast<std::ptrdiff_t>(iy) * g.w + off;
            std::fill(drow, drow + lo, T(0));
            if (g.stride == 1) {
              std::copy(srow + lo, srow + hi, drow + lo);
            } else {
              for (int x = lo; x < hi; ++x) drow[x] = srow[x * g.stride];
            }
            std::fill(drow + hi, drow + g.ow, T(0));
          }
        }
      }
    }
  }
}

// Adjoint of im2col: img += scatter(col).
template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* img) {
  const std::ptrdiff_t cols = g.cols();
  for (int c = 0; c < g.c; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const T* src = col + (static_cast<std::ptrdiff_t>(c * g.kh + ki) * g.kw + kj) * cols;
        const int off = kj - g.pad;
        int lo, hi;
        valid_range(g.ow, g.w, g.stride, off, &lo, &hi);
        for (int n = 0; n < g.n; ++n) {
          T* dst = img + (static_cast<std::ptrdiff_t>(n) * g.c + c) * g.h * g.w;
          for (int y = 0; y < g.oh; ++y) {
            const int iy = y * g.stride - g.pad + ki;
            if (iy < 0 || iy >= g.h) continue;
            const T* srow = src + (static_cast<std::ptrdiff_t>(n) * g.oh + y) * g.ow;
            T* drow = dst + static_cast<std::ptrdiff_t>(iy) * g.w + off;
            if (g.stride == 1) {
              for (int x = lo; x < hi; ++x) drow[x] += srow[x];
            } else {
              for (int x = lo; x < hi; ++x) drow[x * g.stride] += srow[x];
            }
          }
        }
      }
    }
  }
}

// Scratch storage that is fully overwritten before it is read.
template <typename T>
struct Scratch {
  explicit Scratch(std::size_t n) : buf(new T[n]) {}
  T* data() { return buf.get(); }
  std::unique_ptr<T[]> buf;
};

// [N, C, HW] <-> [C, N * HW]
template <typename T>
void nchw_to_cm(const T* src, int n, int c, int hw, T* dst) {
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      std::copy_n(src + (static_cast<std::ptrdiff_t>(b) * c + ch) * hw, hw,
                  dst + (static_cast<std::ptrdiff_t>(ch) * n + b) * hw);
    }
  }
}
template <typename T>
void cm_to_nchw(const T* src, int n, int c, int hw, T* dst) {
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      std::copy_n(src + (static_cast<std::ptrdiff_t>(ch) * n + b) * hw, hw,
                  dst + (static_cast<std::ptrdiff_t>(b) * c + ch) * hw);
    }
  }
}

template <typename T>
void check_bias(const Var<T>& bias, std::int64_t channels, const char* op) {
  if (!bias.valid()) return;
  if (bias.value().rank() != 1 || bias.dim(0) != channels) {
    throw ShapeError(std::string(op) + ": bias must be [" + std::to_string(channels) + "], got " +
                     shape_string(bias.shape()));
  }
}

template <typename T>
void accumulate(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  kernels::axpy<T>(T(1), src.ptr(), dst.ptr(), static_cast<std::size_t>(src.size()));
}

template <typename T>
T gelu_cdf(T x) {
  return T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, int stride, int padding) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");
  const auto& x = input.value();
  const auto& w = weight.value();
  if (w.dim(1) != x.dim(1)) {
    throw ShapeError("conv2d: weight expects " + std::to_string(w.dim(1)) +
                     " input channels, input " + shape_string(x.shape()) + " has " +
                     std::to_string(x.dim(1)));
  }
  ConvGeometry g{static_cast<int>(x.dim(0)), static_cast<int>(x.dim(1)),
                 static_cast<int>(x.dim(2)), static_cast<int>(x.dim(3)),
                 static_cast<int>(w.dim(2)), static_cast<int>(w.dim(3)), stride, padding, 0, 0};
  if (g.kh > g.h + 2 * padding || g.kw > g.w + 2 * padding) {
    throw ShapeError("conv2d: kernel " + shape_string(w.shape()) + " larger than padded input " +
                     shape_string(x.shape()));
  }
  g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
  g.ow = (g.w + 2 * padding - g.kw) / stride + 1;
  const int out_c = static_cast<int>(w.dim(0));
  check_bias(bias, out_c, "conv2d");

  Scratch<T> col(static_cast<std::size_t>(g.rows()) * g.cols());
  im2col(g, x.ptr(), col.data());
  Scratch<T> mat(static_cast<std::size_t>(out_c) * g.cols());
  kernels::gemm<T>(false, false, out_c, g.cols(), g.rows(), w.ptr(), g.rows(), col.data(),
                   g.cols(), T(0), mat.data(), g.cols());
  if (bias.valid()) {
    const auto& b = bias.value();
    for (int o = 0; o < out_c; ++o) {
      T* row = mat.data() + static_cast<std::ptrdiff_t>(o) * g.cols();
      for (int j = 0; j < g.cols(); ++j) row[j] += b[o];
    }
  }
  BasicTensor<T> out({g.n, out_c, g.oh, g.ow});
  cm_to_nchw(mat.data(), g.n, out_c, g.oh * g.ow, out.ptr());

  return input.tape().record(
      std::move(out), {input, weight, bias},
      [input, weight, bias, g, out_c](Tape<T>& tape, const BasicTensor<T>& dy) {
        Scratch<T> dmat(static_cast<std::size_t>(out_c) * g.cols());
        nchw_to_cm(dy.ptr(), g.n, out_c, g.oh * g.ow, dmat.data());
        if (tape.requires_grad(bias)) {
          auto& db = tape.grad(bias);
          for (int o = 0; o < out_c; ++o) {
            const T* row = dmat.data() + static_cast<std::ptrdiff_t>(o) * g.cols();
            T s = T(0);
            for (int j = 0; j < g.cols(); ++j) s += row[j];
            db[o] += s;
          }
        }
        const bool need_w = tape.requires_grad(weight);
        const bool need_x = tape.requires_grad(input);
        if (!need_w && !need_x) return;
        Scratch<T> col(static_cast<std::size_t>(g.rows()) * g.cols());
        if (need_w) {
          im2col(g, input.value().ptr(), col.data());
          auto& dw = tape.grad(weight);
          kernels::gemm<T>(false, true, out_c, g.rows(), g.cols(), dmat.data(), g.cols(),
                           col.data(), g.cols(), T(1), dw.ptr(), g.rows());
        }
        if (need_x) {
          kernels::gemm<T>(true, false, g.rows(), g.cols(), out_c, weight.value().ptr(),
                           g.rows(), dmat.data(), g.cols(), T(0), col.data(), g.cols());
          col2im(g, col.data(), tape.grad(input).ptr());
        }
      });
}

template <typename T>
Var<T> conv_transpose2d(Var<T> input, Var<T> weight, Var<T> bias, int stride) {
  require_rank(input, 4, "conv_transpose2d", "input");
  require_rank(weight, 4, "conv_transpose2d", "weight");
  if (stride < 1) throw ShapeError("conv_transpose2d: stride must be >= 1");
  const auto& x = input.value();
  const auto& w = weight.value();
  if (w.dim(0) != x.dim(1)) {
    throw ShapeError("conv_transpose2d: weight expects " + std::to_string(w.dim(0)) +
                     " input channels, input " + shape_string(x.shape()) + " has " +
                     std::to_string(x.dim(1)));
  }
  const int n = static_cast<int>(x.dim(0));
  const int in_c = static_cast<int>(x.dim(1));
  const int h = static_cast<int>(x.dim(2));
  const int wd = static_cast<int>(x.dim(3));
  const int out_c = static_cast<int>(w.dim(1));
  const int kh = static_cast<int>(w.dim(2));
  const int kw = static_cast<int>(w.dim(3));
  check_bias(bias, out_c, "conv_transpose2d");
  // Output geometry seen as the image of a stride-s convolution whose output is x.
  ConvGeometry g{n, out_c, (h - 1) * stride + kh, (wd - 1) * stride + kw, kh, kw, stride, 0, h,
                 wd};
  const int hw = h * wd;

  Scratch<T> xm(static_cast<std::size_t>(in_c) * n * hw);
  nchw_to_cm(x.ptr(), n, in_c, hw, xm.data());
  Scratch<T> col(static_cast<std::size_t>(g.rows()) * g.cols());
  kernels::gemm<T>(true, false, g.rows(), g.cols(), in_c, w.ptr(), g.rows(), xm.data(), g.cols(),
                   T(0), col.data(), g.cols());
  BasicTensor<T> out({n, out_c, g.h, g.w});
  col2im(g, col.data(), out.ptr());
  if (bias.valid()) {
    const auto& b = bias.value();
    const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(g.h) * g.w;
    for (int bi = 0; bi < n; ++bi) {
      for (int o = 0; o < out_c; ++o) {
        T* p = out.ptr() + (static_cast<std::ptrdiff_t>(bi) * out_c + o) * plane;
        for (std::ptrdiff_t j = 0; j < plane; ++j) p[j] += b[o];
      }
    }
  }

  return input.tape().record(
      std::move(out), {input, weight, bias},
      [input, weight, bias, g, in_c, hw](Tape<T>& tape, const BasicTensor<T>& dy) {
        if (tape.requires_grad(bias)) {
          auto& db = tape.grad(bias);
          const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(g.h) * g.w;
          for (int bi = 0; bi < g.n; ++bi) {
            for (int o = 0; o < g.c; ++o) {
              const T* p = dy.ptr() + (static_cast<std::ptrdiff_t>(bi) * g.c + o) * plane;
              T s = T(0);
              for (std::ptrdiff_t j = 0; j < plane; ++j) s += p[j];
              db[o] += s;
            }
          }
        }
        const bool need_w = tape.requires_grad(weight);
        const bool need_x = tape.requires_grad(input);
        if (!need_w && !need_x) return;
        Scratch<T> dcol(static_cast<std::size_t>(g.rows()) * g.cols());
        im2col(g, dy.ptr(), dcol.data());
        if (need_x) {
          Scratch<T> dxm(static_cast<std::size_t>(in_c) * g.cols());
          kernels::gemm<T>(false, false, in_c, g.cols(), g.rows(), weight.value().ptr(),
                           g.rows(), dcol.data(), g.cols(), T(0), dxm.data(), g.cols());
          BasicTensor<T> dx(input.shape());
          cm_to_nchw(dxm.data(), g.n, in_c, hw, dx.ptr());
          accumulate(tape.grad(input), dx);
        }
        if (need_w) {
          Scratch<T> xm(static_cast<std::size_t>(in_c) * g.cols());
          nchw_to_cm(input.value().ptr(), g.n, in_c, hw, xm.data());
          auto& dw = tape.grad(weight);
          kernels::gemm<T>(false, true, in_c, g.rows(), g.cols(), xm.data(), g.cols(),
                           dcol.data(), g.cols(), T(1), dw.ptr(), g.rows());
        }
      });
}

template <typename T>
Var<T> batchnorm2d(Var<T> input, Var<T> gamma, Var<T> beta, BasicTensor<T>& running_mean,
                   BasicTensor<T>& running_var, Mode mode, double momentum, double eps) {
  require_rank(input, 4, "batchnorm2d", "input");
  const auto& x = input.value();
  const int n = static_cast<int>(x.dim(0));
  const int c = static_cast<int>(x.dim(1));
  const std::ptrdiff_t hw = x.dim(2) * x.dim(3);
  for (const BasicTensor<T>* t : std::initializer_list<const BasicTensor<T>*>{&gamma.value(), &beta.value(), &running_mean, &running_var}) {
    if (t->rank() != 1 || t->dim(0) != c) {
      throw ShapeError("batchnorm2d: per-channel parameters must be [" + std::to_string(c) +
                       "], got " + shape_string(t->shape()));
    }
  }
  const std::ptrdiff_t count = n * hw;
  const bool train = mode == Mode::kTrain;
  if (train && count < 2) {
    throw NumericError("batchnorm2d: train mode needs at least 2 values per channel, got " +
                       std::to_string(count) + " for input " + shape_string(x.shape()));
  }

  BasicTensor<T> mean({c});
  BasicTensor<T> inv_std({c});
  for (int ch = 0; ch < c; ++ch) {
    if (train) {
      T s = T(0);
      for (int b = 0; b < n; ++b) {
        const T* p = x.ptr() + (static_cast<std::ptrdiff_t>(b) * c + ch) * hw;
        for (std::ptrdiff_t j = 0; j < hw; ++j) s += p[j];
      }
      const T mu = s / static_cast<T>(count);
      T v = T(0);
      for (int b = 0; b < n; ++b) {
        const T* p = x.ptr() + (static_cast<std::ptrdiff_t>(b) * c + ch) * hw;
        for (std::ptrdiff_t j = 0; j < hw; ++j) v += (p[j] - mu) * (p[j] - mu);
      }
      const T var = v / static_cast<T>(count);
      mean[ch] = mu;
      inv_std[ch] = T(1) / std::sqrt(var + static_cast<T>(eps));
      const T unbiased = v / static_cast<T>(count - 1);
      const T m = static_cast<T>(momentum);
      running_mean[ch] = (T(1) - m) * running_mean[ch] + m * mu;
      running_var[ch] = (T(1) - m) * running_var[ch] + m * unbiased;
    } else {
      mean[ch] = running_mean[ch];
      const T denom = running_var[ch] + static_cast<T>(eps);
      if (!(denom > T(0))) throw NumericError("batchnorm2d: non-positive running variance");
      inv_std[ch] = T(1) / std::sqrt(denom);
    }
  }

  BasicTensor<T> xhat(x.shape());
  BasicTensor<T> out(x.shape());
  const auto& g = gamma.value();
  const auto& bt = beta.value();
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(b) * c + ch) * hw;
      for (std::ptrdiff_t j = 0; j < hw; ++j) {
        const T v = (x[off + j] - mean[ch]) * inv_std[ch];
        xhat[off + j] = v;
        out[off + j] = g[ch] * v + bt[ch];
      }
    }
  }

  return input.tape().record(
      std::move(out), {input, gamma, beta},
      [input, gamma, beta, xhat = std::move(xhat), inv_std, n, c, hw, train](
          Tape<T>& tape, const BasicTensor<T>& dy) {
        const auto& gv = gamma.value();
        const T m = static_cast<T>(n * hw);
        const bool need_x = tape.requires_grad(input);
        BasicTensor<T>* dg = tape.requires_grad(gamma) ? &tape.grad(gamma) : nullptr;
        BasicTensor<T>* db = tape.requires_grad(beta) ? &tape.grad(beta) : nullptr;
        BasicTensor<T>* dx = need_x ? &tape.grad(input) : nullptr;
        for (int ch = 0; ch < c; ++ch) {
          T sum_dy = T(0);
          T sum_dy_xhat = T(0);
          for (int b = 0; b < n; ++b) {
            const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(b) * c + ch) * hw;
            for (std::ptrdiff_t j = 0; j < hw; ++j) {
              sum_dy += dy[off + j];
              sum_dy_xhat += dy[off + j] * xhat[off + j];
            }
          }
          if (dg) (*dg)[ch] += sum_dy_xhat;
          if (db) (*db)[ch] += sum_dy;
          if (!dx) continue;
          const T k = gv[ch] * inv_std[ch];
          for (int b = 0; b < n; ++b) {
            const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(b) * c + ch) * hw;
            for (std::ptrdiff_t j = 0; j < hw; ++j) {
              if (train) {
                (*dx)[off + j] +=
                    k * (dy[off + j] - sum_dy / m - xhat[off + j] * sum_dy_xhat / m);
              } else {
                (*dx)[off + j] += k * dy[off + j];
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> relu(Var<T> x) {
  BasicTensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::int64_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  return x.tape().record(std::move(out), {x}, [x](Tape<T>& tape, const BasicTensor<T>& dy) {
    auto& dx = tape.grad(x);
    const auto& xv = x.value();
    for (std::int64_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > T(0)) dx[i] += dy[i];
    }
  });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  BasicTensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::int64_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * gelu_cdf(xv[i]);
  return x.tape().record(std::move(out), {x}, [x](Tape<T>& tape, const BasicTensor<T>& dy) {
    auto& dx = tape.grad(x);
    const auto& xv = x.value();
    const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    for (std::int64_t i = 0; i < xv.size(); ++i) {
      const T v = xv[i];
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      dx[i] += dy[i] * (gelu_cdf(v) + v * pdf);
    }
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  require_rank(x, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  const int n = static_cast<int>(x.dim(0));
  const int in = static_cast<int>(x.dim(1));
  const int out_f = static_cast<int>(weight.dim(0));
  if (weight.dim(1) != in) {
    throw ShapeError("linear: weight " + shape_string(weight.shape()) + " incompatible with input " +
                     shape_string(x.shape()));
  }
  check_bias(bias, out_f, "linear");
  BasicTensor<T> out({n, out_f});
  kernels::gemm<T>(false, true, n, out_f, in, x.value().ptr(), in, weight.value().ptr(), in, T(0),
                   out.ptr(), out_f);
  if (bias.valid()) {
    const auto& b = bias.value();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < out_f; ++j) out[static_cast<std::int64_t>(i) * out_f + j] += b[j];
    }
  }
  return x.tape().record(
      std::move(out), {x, weight, bias},
      [x, weight, bias, n, in, out_f](Tape<T>& tape, const BasicTensor<T>& dy) {
        if (tape.requires_grad(x)) {
          kernels::gemm<T>(false, false, n, in, out_f, dy.ptr(), out_f, weight.value().ptr(), in,
                           T(1), tape.grad(x).ptr(), in);
        }
        if (tape.requires_grad(weight)) {
          kernels::gemm<T>(true, false, out_f, in, n, dy.ptr(), out_f, x.value().ptr(), in, T(1),
                           tape.grad(weight).ptr(), in);
        }
        if (tape.requires_grad(bias)) {
          auto& db = tape.grad(bias);
          for (int i = 0; i < n; ++i) {
            for (int j = 0; j < out_f; ++j) db[j] += dy[static_cast<std::int64_t>(i) * out_f + j];
          }
        }
      });
}

namespace {

template <typename T>
struct AttentionCache {
  int t = 0, d = 0, heads = 0, dh = 0;
  std::vector<T> q, k, v;  // [T, D]
  std::vector<T> probs;    // [heads, T, T]
  std::vector<T> context;  // [T, D]
};

template <typename T>
AttentionCache<T> attention_core(const BasicTensor<T>& x, const BasicTensor<T>& wq,
                                 const BasicTensor<T>* wk, const BasicTensor<T>* wv, int heads) {
  if (x.rank() != 2) throw ShapeError("attention: tokens must be [T, D], got " + shape_string(x.shape()));
  AttentionCache<T> c;
  c.t = static_cast<int>(x.dim(0));
  c.d = static_cast<int>(x.dim(1));
  if (c.t == 0) throw ShapeError("attention: empty token sequence");
  if (heads < 1 || c.d % heads != 0) {
    throw ShapeError("attention: dim " + std::to_string(c.d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  for (const auto* w : {&wq, wk, wv}) {
    if (w && (w->rank() != 2 || w->dim(0) != c.d || w->dim(1) != c.d)) {
      throw ShapeError("attention: projection weights must be [D, D], got " +
                       shape_string(w->shape()));
    }
  }
  c.heads = heads;
  c.dh = c.d / heads;
  const std::size_t td = static_cast<std::size_t>(c.t) * c.d;
  c.q.resize(td);
  c.k.resize(td);
  kernels::gemm<T>(false, true, c.t, c.d, c.d, x.ptr(), c.d, wq.ptr(), c.d, T(0), c.q.data(), c.d);
  kernels::gemm<T>(false, true, c.t, c.d, c.d, x.ptr(), c.d, wk->ptr(), c.d, T(0), c.k.data(), c.d);
  if (wv) {
    c.v.resize(td);
    kernels::gemm<T>(false, true, c.t, c.d, c.d, x.ptr(), c.d, wv->ptr(), c.d, T(0), c.v.data(),
                     c.d);
  }
  const T scl = T(1) / std::sqrt(static_cast<T>(c.dh));
  c.probs.resize(static_cast<std::size_t>(heads) * c.t * c.t);
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < c.t; ++i) {
      T* row = c.probs.data() + (static_cast<std::size_t>(h) * c.t + i) * c.t;
      T mx = -std::numeric_limits<T>::infinity();
      for (int j = 0; j < c.t; ++j) {
        T s = T(0);
        for (int e = 0; e < c.dh; ++e) {
          s += c.q[static_cast<std::size_t>(i) * c.d + h * c.dh + e] *
               c.k[static_cast<std::size_t>(j) * c.d + h * c.dh + e];
        }
        row[j] = s * scl;
        mx = std::max(mx, row[j]);
      }
      T z = T(0);
      for (int j = 0; j < c.t; ++j) {
        row[j] = std::exp(row[j] - mx);
        z += row[j];
      }
      for (int j = 0; j < c.t; ++j) row[j] /= z;
    }
  }
  if (wv) {
    c.context.assign(td, T(0));
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < c.t; ++i) {
        const T* row = c.probs.data() + (static_cast<std::size_t>(h) * c.t + i) * c.t;
        T* ctx = c.context.data() + static_cast<std::size_t>(i) * c.d + h * c.dh;
        for (int j = 0; j < c.t; ++j) {
          const T* vr = c.v.data() + static_cast<std::size_t>(j) * c.d + h * c.dh;
          for (int e = 0; e < c.dh; ++e) ctx[e] += row[j] * vr[e];
        }
      }
    }
  }
  return c;
}

}  // namespace

template <typename T>
BasicTensor<T> attention_probabilities(const BasicTensor<T>& tokens, const BasicTensor<T>& wq,
                                       const BasicTensor<T>& wk, int heads) {
  AttentionCache<T> c = attention_core<T>(tokens, wq, &wk, nullptr, heads);
  return BasicTensor<T>({heads, c.t, c.t}, std::move(c.probs));
}

template <typename T>
Var<T> attention(Var<T> tokens, Var<T> wq, Var<T> wk, Var<T> wv, Var<T> wo, int heads) {
  const auto& x = tokens.value();
  AttentionCache<T> c = attention_core<T>(x, wq.value(), &wk.value(), &wv.value(), heads);
  const auto& wov = wo.value();
  if (wov.rank() != 2 || wov.dim(0) != c.d || wov.dim(1) != c.d) {
    throw ShapeError("attention: output projection must be [D, D], got " +
                     shape_string(wov.shape()));
  }
  BasicTensor<T> out = x;
  kernels::gemm<T>(false, true, c.t, c.d, c.d, c.context.data(), c.d, wov.ptr(), c.d, T(1),
                   out.ptr(), c.d);

  return tokens.tape().record(
      std::move(out), {tokens, wq, wk, wv, wo},
      [tokens, wq, wk, wv, wo, c = std::move(c)](Tape<T>& tape, const BasicTensor<T>& dy) {
        const int t = c.t, d = c.d, dh = c.dh;
        const std::size_t td = static_cast<std::size_t>(t) * d;
        const T scl = T(1) / std::sqrt(static_cast<T>(dh));
        if (tape.requires_grad(wo)) {
          kernels::gemm<T>(true, false, d, d, t, dy.ptr(), d, c.context.data(), d, T(1),
                           tape.grad(wo).ptr(), d);
        }
        std::vector<T> dctx(td);
        kernels::gemm<T>(false, false, t, d, d, dy.ptr(), d, wo.value().ptr(), d, T(0),
                         dctx.data(), d);
        std::vector<T> dq(td, T(0)), dk(td, T(0)), dv(td, T(0));
        std::vector<T> dp(static_cast<std::size_t>(t));
        for (int h = 0; h < c.heads; ++h) {
          for (int i = 0; i < t; ++i) {
            const T* p = c.probs.data() + (static_cast<std::size_t>(h) * t + i) * t;
            const T* g = dctx.data() + static_cast<std::size_t>(i) * d + h * dh;
            T dot_pp = T(0);
            for (int j = 0; j < t; ++j) {
              const T* vr = c.v.data() + static_cast<std::size_t>(j) * d + h * dh;
              T* dvr = dv.data() + static_cast<std::size_t>(j) * d + h * dh;
              T s = T(0);
              for (int e = 0; e < dh; ++e) {
                s += g[e] * vr[e];
                dvr[e] += p[j] * g[e];
              }
              dp[static_cast<std::size_t>(j)] = s;
              dot_pp += s * p[j];
            }
            for (int j = 0; j < t; ++j) {
              const T ds = p[j] * (dp[static_cast<std::size_t>(j)] - dot_pp) * scl;
              const T* qi = c.q.data() + static_cast<std::size_t>(i) * d + h * dh;
              const T* kj = c.k.data() + static_cast<std::size_t>(j) * d + h * dh;
              T* dqi = dq.data() + static_cast<std::size_t>(i) * d + h * dh;
              T* dkj = dk.data() + static_cast<std::size_t>(j) * d + h * dh;
              for (int e = 0; e < dh; ++e) {
                dqi[e] += ds * kj[e];
                dkj[e] += ds * qi[e];
              }
            }
          }
        }
        const auto& x = tokens.value();
        const std::pair<const Var<T>*, const std::vector<T>*> proj[] = {
            {&wq, &dq}, {&wk, &dk}, {&wv, &dv}};
        for (const auto& [w, g] : proj) {
          if (tape.requires_grad(*w)) {
            kernels::gemm<T>(true, false, d, d, t, g->data(), d, x.ptr(), d, T(1),
                             tape.grad(*w).ptr(), d);
          }
        }
        if (tape.requires_grad(tokens)) {
          auto& dx = tape.grad(tokens);
          accumulate(dx, dy);
          for (const auto& [w, g] : proj) {
            kernels::gemm<T>(false, false, t, d, d, g->data(), d, w->value().ptr(), d, T(1),
                             dx.ptr(), d);
          }
        }
      });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "add");
  BasicTensor<T> out = a.value();
  accumulate(out, b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<T>& tape, const BasicTensor<T>& dy) {
    if (tape.requires_grad(a)) accumulate(tape.grad(a), dy);
    if (tape.requires_grad(b)) accumulate(tape.grad(b), dy);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "sub");
  BasicTensor<T> out = a.value();
  kernels::axpy<T>(T(-1), b.value().ptr(), out.ptr(), static_cast<std::size_t>(out.size()));
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<T>& tape, const BasicTensor<T>& dy) {
    if (tape.requires_grad(a)) accumulate(tape.grad(a), dy);
    if (tape.requires_grad(b)) {
      kernels::axpy<T>(T(-1), dy.ptr(), tape.grad(b).ptr(), static_cast<std::size_t>(dy.size()));
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "mul");
  BasicTensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<T>& tape, const BasicTensor<T>& dy) {
    if (tape.requires_grad(a)) {
      auto& da = tape.grad(a);
      for (std::int64_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * b.value()[i];
    }
    if (tape.requires_grad(b)) {
      auto& db = tape.grad(b);
      for (std::int64_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * a.value()[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  BasicTensor<T> out = x.value();
  for (auto& v : out.data()) v *= factor;
  return x.tape().record(std::move(out), {x}, [x, factor](Tape<T>& tape, const BasicTensor<T>& dy) {
    kernels::axpy<T>(factor, dy.ptr(), tape.grad(x).ptr(), static_cast<std::size_t>(dy.size()));
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T s = T(0);
  for (T v : x.value().data()) s += v;
  return x.tape().record(BasicTensor<T>({1}, s), {x},
                         [x](Tape<T>& tape, const BasicTensor<T>& dy) {
                           auto& dx = tape.grad(x);
                           for (auto& v : dx.data()) v += dy[0];
                         });
}

template <typename T>
Var<T> mean(Var<T> x) {
  if (x.value().size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  BasicTensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [x](Tape<T>& tape, const BasicTensor<T>& dy) {
    accumulate(tape.grad(x), dy);
  });
}

namespace {

// Splits a shape around `axis` into (outer, extent, inner) element counts.
struct AxisSplit {
  std::int64_t outer = 1, extent = 1, inner = 1;
};
AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<std::size_t>(i)];
  r.extent = s[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis < 0 || axis >= static_cast<int>(first.size())) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                     shape_string(first));
  }
  Shape out_shape = first;
  out_shape[static_cast<std::size_t>(axis)] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      if (static_cast<int>(i) != axis && s[i] != first[i]) ok = false;
    }
    if (!ok) {
      throw ShapeError("concat: incompatible shapes " + shape_string(first) + " and " +
                       shape_string(s) + " along axis " + std::to_string(axis));
    }
    out_shape[static_cast<std::size_t>(axis)] += s[static_cast<std::size_t>(axis)];
  }
  BasicTensor<T> out(out_shape);
  const AxisSplit os = split_axis(out_shape, axis);
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const AxisSplit ps = split_axis(p.shape(), axis);
    for (std::int64_t o = 0; o < os.outer; ++o) {
      std::copy_n(p.value().ptr() + o * ps.extent * ps.inner, ps.extent * ps.inner,
                  out.ptr() + (o * os.extent + offset) * os.inner);
    }
    offset += ps.extent;
  }
  return parts.front().tape().record_many(
      std::move(out), parts, [parts, axis](Tape<T>& tape, const BasicTensor<T>& dy) {
        const AxisSplit os = split_axis(dy.shape(), axis);
        std::int64_t offset = 0;
        for (const auto& p : parts) {
          const AxisSplit ps = split_axis(p.shape(), axis);
          if (tape.requires_grad(p)) {
            auto& dp = tape.grad(p);
            for (std::int64_t o = 0; o < os.outer; ++o) {
              const T* src = dy.ptr() + (o * os.extent + offset) * os.inner;
              T* dst = dp.ptr() + o * ps.extent * ps.inner;
              for (std::int64_t j = 0; j < ps.extent * ps.inner; ++j) dst[j] += src[j];
            }
          }
          offset += ps.extent;
        }
      });
}

template <typename T>
Var<T> slice(Var<T> x, int axis, std::int64_t start, std::int64_t length) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw ShapeError("slice: axis out of range for " + shape_string(s));
  }
  if (start < 0 || length < 0 || start + length > s[static_cast<std::size_t>(axis)]) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") out of bounds for " + shape_string(s));
  }
  Shape out_shape = s;
  out_shape[static_cast<std::size_t>(axis)] = length;
  BasicTensor<T> out(out_shape);
  const AxisSplit xs = split_axis(s, axis);
  for (std::int64_t o = 0; o < xs.outer; ++o) {
    std::copy_n(x.value().ptr() + (o * xs.extent + start) * xs.inner, length * xs.inner,
                out.ptr() + o * length * xs.inner);
  }
  return x.tape().record(
      std::move(out), {x}, [x, axis, start, length](Tape<T>& tape, const BasicTensor<T>& dy) {
        const AxisSplit xs = split_axis(x.shape(), axis);
        auto& dx = tape.grad(x);
        for (std::int64_t o = 0; o < xs.outer; ++o) {
          const T* src = dy.ptr() + o * length * xs.inner;
          T* dst = dx.ptr() + (o * xs.extent + start) * xs.inner;
          for (std::int64_t j = 0; j < length * xs.inner; ++j) dst[j] += src[j];
        }
      });
}

template <typename T>
Var<T> gather_rows(Var<T> table, const std::vector<int>& rows) {
  require_rank(table, 2, "gather_rows", "table");
  const std::int64_t r = table.dim(0);
  const std::int64_t d = table.dim(1);
  BasicTensor<T> out({static_cast<std::int64_t>(rows.size()), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= r) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                       shape_string(table.shape()));
    }
    std::copy_n(table.value().ptr() + rows[i] * d, d, out.ptr() + static_cast<std::int64_t>(i) * d);
  }
  return table.tape().record(std::move(out), {table},
                             [table, rows, d](Tape<T>& tape, const BasicTensor<T>& dy) {
                               auto& dt = tape.grad(table);
                               for (std::size_t i = 0; i < rows.size(); ++i) {
                                 for (std::int64_t j = 0; j < d; ++j) {
                                   dt[rows[i] * d + j] += dy[static_cast<std::int64_t>(i) * d + j];
                                 }
                               }
                             });
}

template <typename T>
Var<T> hyper_dot(Var<T> features, Var<T> weights) {
  require_rank(features, 4, "hyper_dot", "features");
  require_rank(weights, 3, "hyper_dot", "weights");
  const int n = static_cast<int>(features.dim(0));
  const int c = static_cast<int>(features.dim(1));
  const int hw = static_cast<int>(features.dim(2) * features.dim(3));
  const int k = static_cast<int>(weights.dim(1));
  if (weights.dim(0) != n || weights.dim(2) != c) {
    throw ShapeError("hyper_dot: weights " + shape_string(weights.shape()) +
                     " incompatible with features " + shape_string(features.shape()));
  }
  BasicTensor<T> out({n, k, features.dim(2), features.dim(3)});
  for (int b = 0; b < n; ++b) {
    kernels::gemm<T>(false, false, k, hw, c,
                     weights.value().ptr() + static_cast<std::ptrdiff_t>(b) * k * c, c,
                     features.value().ptr() + static_cast<std::ptrdiff_t>(b) * c * hw, hw, T(0),
                     out.ptr() + static_cast<std::ptrdiff_t>(b) * k * hw, hw);
  }
  return features.tape().record(
      std::move(out), {features, weights},
      [features, weights, n, c, hw, k](Tape<T>& tape, const BasicTensor<T>& dy) {
        const bool need_f = tape.requires_grad(features);
        const bool need_w = tape.requires_grad(weights);
        for (int b = 0; b < n; ++b) {
          const T* g = dy.ptr() + static_cast<std::ptrdiff_t>(b) * k * hw;
          if (need_w) {
            kernels::gemm<T>(false, true, k, c, hw, g, hw,
                             features.value().ptr() + static_cast<std::ptrdiff_t>(b) * c * hw, hw,
                             T(1), tape.grad(weights).ptr() + static_cast<std::ptrdiff_t>(b) * k * c,
                             c);
          }
          if (need_f) {
            kernels::gemm<T>(true, false, c, hw, k,
                             weights.value().ptr() + static_cast<std::ptrdiff_t>(b) * k * c, c, g,
                             hw, T(1),
                             tape.grad(features).ptr() + static_cast<std::ptrdiff_t>(b) * c * hw,
                             hw);
          }
        }
      });
}

#define SQSM_INSTANTIATE_OPS(T)                                                                 \
  template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>, int, int);                                  \
  template Var<T> conv_transpose2d<T>(Var<T>, Var<T>, Var<T>, int);                             \
  template Var<T> batchnorm2d<T>(Var<T>, Var<T>, Var<T>, BasicTensor<T>&, BasicTensor<T>&, Mode, \
                                 double, double);                                               \
  template Var<T> relu<T>(Var<T>);                                                              \
  template Var<T> gelu<T>(Var<T>);                                                              \
  template Var<T> linear<T>(Var<T>, Var<T>, Var<T>);                                            \
  template Var<T> attention<T>(Var<T>, Var<T>, Var<T>, Var<T>, Var<T>, int);                    \
  template BasicTensor<T> attention_probabilities<T>(const BasicTensor<T>&, const BasicTensor<T>&, \
                                                     const BasicTensor<T>&, int);               \
  template Var<T> add<T>(Var<T>, Var<T>);                                                       \
  template Var<T> sub<T>(Var<T>, Var<T>);                                                       \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                       \
  template Var<T> scale<T>(Var<T>, T);                                                          \
  template Var<T> sum<T>(Var<T>);                                                               \
  template Var<T> mean<T>(Var<T>);                                                              \
  template Var<T> reshape<T>(Var<T>, Shape);                                                    \
  template Var<T> concat<T>(const std::vector<Var<T>>&, int);                                   \
  template Var<T> slice<T>(Var<T>, int, std::int64_t, std::int64_t);                            \
  template Var<T> gather_rows<T>(Var<T>, const std::vector<int>&);                              \
  template Var<T> hyper_dot<T>(Var<T>, Var<T>);

SQSM_INSTANTIATE_OPS(float)
SQSM_INSTANTIATE_OPS(double)

}  // namespace sqsm::ops
