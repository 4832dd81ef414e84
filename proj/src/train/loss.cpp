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

#include <algorithm>
#include <cmath>
#include <memory>

#include "sqsm/train.hpp"

namespace sqsm::train {
namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct HeadLoss {
  double focal = 0.0;
  double dice = 0.0;
};

// Loss of one mask head; `grad` (if non-null) receives d(focal_w * focal +
// dice_w * dice) / dz per pixel.
template <typename T>
HeadLoss head_loss(const T* z, const BinaryMask& gt, const LossWeights& w, T* grad) {
  const std::size_t n = gt.data.size();
  const double gamma = w.focal_gamma, alpha = w.focal_alpha;
  double focal = 0.0, inter = 0.0, psum = 0.0, gsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double zi = static_cast<double>(z[i]);
    const double p = sigmoid(zi);
    const bool g = gt.data[i] != 0;
    // log p = -softplus(-z), log(1 - p) = -softplus(z).
    if (g) {
      focal += alpha * std::pow(1.0 - p, gamma) * softplus(-zi);
    } else {
      focal += (1.0 - alpha) * std::pow(p, gamma) * softplus(zi);
    }
    inter += g ? p : 0.0;
    psum += p;
    gsum += g ? 1.0 : 0.0;
  }
  const double den = psum + gsum + w.dice_smooth;
  HeadLoss r;
  r.focal = focal / static_cast<double>(n);
  r.dice = 1.0 - (2.0 * inter + w.dice_smooth) / den;
  if (grad) {
    const double num = 2.0 * inter + w.dice_smooth;
    for (std::size_t i = 0; i < n; ++i) {
      const double zi = static_cast<double>(z[i]);
      const double p = sigmoid(zi);
      const bool g = gt.data[i] != 0;
      double df = 0.0;
      if (g) {
        df = alpha * std::pow(1.0 - p, gamma) * (gamma * p * (-softplus(-zi)) - (1.0 - p));
      } else {
        df = (1.0 - alpha) * std::pow(p, gamma) * (p - gamma * (1.0 - p) * (-softplus(zi)));
      }
      const double dd = -((g ? 2.0 : 0.0) * den - num) / (den * den) * p * (1.0 - p);
      grad[i] = static_cast<T>(w.focal * df / static_cast<double>(n) + w.dice * dd);
    }
  }
  return r;
}

template <typename T>
double thresholded_iou(const T* z, const BinaryMask& gt) {
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const bool p = z[i] > T(0);
    const bool g = gt.data[i] != 0;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double focal_loss_mean(const float* logits, const BinaryMask& gt, double gamma, double alpha) {
  LossWeights w;
  w.focal_gamma = gamma;
  w.focal_alpha = alpha;
  return head_loss<float>(logits, gt, w, nullptr).focal;
}

double dice_loss(const float* logits, const BinaryMask& gt, double smooth) {
  LossWeights w;
  w.dice_smooth = smooth;
  return head_loss<float>(logits, gt, w, nullptr).dice;
}

template <typename T>
LossResult<T> segmentation_loss(Var<T> logits, Var<T> iou, const std::vector<BinaryMask>& gt,
                                const LossWeights& weights, const LossTargets* frozen) {
  const Shape& s = logits.shape();
  if (s.size() != 4) throw ShapeError("segmentation_loss: logits must be [N, k, H, W]");
  const std::int64_t n = s[0], k = s[1], h = s[2], w = s[3];
  if (iou.shape() != Shape{n, k}) {
    throw ShapeError("segmentation_loss: iou scores " + shape_string(iou.shape()) +
                     " do not match logits " + shape_string(s));
  }
  if (static_cast<std::int64_t>(gt.size()) != n) {
    throw ShapeError("segmentation_loss: " + std::to_string(gt.size()) + " targets for batch of " +
                     std::to_string(n));
  }
  for (const BinaryMask& g : gt) {
    if (g.height != h || g.width != w) throw ShapeError("segmentation_loss: target size mismatch");
    if (g.empty_mask()) throw ValidationError("segmentation_loss: empty ground-truth mask");
  }
  if (frozen && (static_cast<std::int64_t>(frozen->chosen.size()) != n ||
                 static_cast<std::int64_t>(frozen->actual_iou.size()) != n)) {
    throw ShapeError("segmentation_loss: frozen targets do not match the batch");
  }

  const std::int64_t plane = h * w;
  const T* z = logits.value().ptr();
  const T* q = iou.value().ptr();
  const bool want_grad = logits.tape().requires_grad(logits) || iou.tape().requires_grad(iou);
  auto dz = std::make_shared<BasicTensor<T>>(want_grad ? logits.shape() : Shape{0});
  auto dq = std::make_shared<BasicTensor<T>>(want_grad ? iou.shape() : Shape{0});

  LossResult<T> result;
  double batch_total = 0.0;
  for (std::int64_t b = 0; b < n; ++b) {
    const BinaryMask& g = gt[static_cast<std::size_t>(b)];
    std::vector<HeadLoss> heads;
    std::vector<double> actual;
    for (std::int64_t i = 0; i < k; ++i) {
      const T* zi = z + (b * k + i) * plane;
      heads.push_back(head_loss<T>(zi, g, weights, nullptr));
      actual.push_back(thresholded_iou(zi, g));
    }
    int chosen = 0;
    auto mask_loss = [&](int i) {
      return weights.focal * heads[static_cast<std::size_t>(i)].focal +
             weights.dice * heads[static_cast<std::size_t>(i)].dice;
    };
    for (int i = 1; i < k; ++i) {
      if (mask_loss(i) < mask_loss(chosen)) chosen = i;
    }
    if (frozen) {
      if (frozen->actual_iou[static_cast<std::size_t>(b)].size() != static_cast<std::size_t>(k)) {
        throw ShapeError("segmentation_loss: frozen IoU targets do not match k");
      }
      chosen = frozen->chosen[static_cast<std::size_t>(b)];
      actual = frozen->actual_iou[static_cast<std::size_t>(b)];
    }
    LossBreakdown br;
    br.chosen_mask_index = chosen;
    br.focal = heads[static_cast<std::size_t>(chosen)].focal;
    br.dice = heads[static_cast<std::size_t>(chosen)].dice;
    for (std::int64_t i = 0; i < k; ++i) {
      const double d = static_cast<double>(q[b * k + i]) - actual[static_cast<std::size_t>(i)];
      br.iou_mse += d * d;
      if (want_grad) (*dq)[b * k + i] = static_cast<T>(2.0 * weights.iou * d / static_cast<double>(n));
    }
    br.total = mask_loss(chosen) + weights.iou * br.iou_mse;
    if (want_grad) {
      T* gz = dz->ptr() + (b * k + chosen) * plane;
      head_loss<T>(z + (b * k + chosen) * plane, g, weights, gz);
      for (std::int64_t j = 0; j < plane; ++j) gz[j] = static_cast<T>(gz[j] / static_cast<T>(n));
    }
    batch_total += br.total;
    result.per_sample.push_back(br);
    result.targets.chosen.push_back(chosen);
    result.targets.actual_iou.push_back(std::move(actual));
  }

  BasicTensor<T> value({1}, static_cast<T>(batch_total / static_cast<double>(n)));
  result.total = logits.tape().record(
      std::move(value), {logits, iou}, [logits, iou, dz, dq](Tape<T>& tape, const BasicTensor<T>& dy) {
        if (tape.requires_grad(logits)) {
          auto& g = tape.grad(logits);
          for (std::int64_t i = 0; i < g.size(); ++i) g[i] += dy[0] * (*dz)[i];
        }
        if (tape.requires_grad(iou)) {
          auto& g = tape.grad(iou);
          for (std::int64_t i = 0; i < g.size(); ++i) g[i] += dy[0] * (*dq)[i];
        }
      });
  return result;
}

template LossResult<float> segmentation_loss<float>(Var<float>, Var<float>,
                                                    const std::vector<BinaryMask>&,
                                                    const LossWeights&, const LossTargets*);
template LossResult<double> segmentation_loss<double>(Var<double>, Var<double>,
                                                      const std::vector<BinaryMask>&,
                                                      const LossWeights&, const LossTargets*);

}  // namespace sqsm::train
