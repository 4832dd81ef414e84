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
#include <cstring>

#include "sqsm/quant.hpp"

namespace sqsm::quant {

namespace {

// Channel count and the stride pattern of `axis` in a row-major tensor.
struct AxisLayout {
  std::int64_t outer = 1, channels = 1, inner = 1;
};

AxisLayout layout_of(const Shape& shape, int axis) {
  if (axis < 0 || axis >= static_cast<int>(shape.size())) {
    throw ShapeError("quantization axis " + std::to_string(axis) + " out of range for " +
                     shape_string(shape));
  }
  AxisLayout l;
  for (int i = 0; i < axis; ++i) l.outer *= shape[static_cast<std::size_t>(i)];
  l.channels = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

QuantizedTensor quantize_per_channel(const Tensor& w, int axis) {
  const AxisLayout l = layout_of(w.shape(), axis);
  QuantizedTensor q;
  q.shape = w.shape();
  q.axis = axis;
  q.values.assign(static_cast<std::size_t>(w.size()), 0);
  q.scales.assign(static_cast<std::size_t>(l.channels), 1.0f);
  std::vector<double> max_abs(static_cast<std::size_t>(l.channels), 0.0);
  for (std::int64_t o = 0; o < l.outer; ++o) {
    for (std::int64_t c = 0; c < l.channels; ++c) {
      const float* src = w.ptr() + (o * l.channels + c) * l.inner;
      for (std::int64_t i = 0; i < l.inner; ++i) {
        if (!std::isfinite(src[i])) throw NumericError("cannot quantize a non-finite weight");
        max_abs[static_cast<std::size_t>(c)] =
            std::max(max_abs[static_cast<std::size_t>(c)], std::abs(static_cast<double>(src[i])));
      }
    }
  }
  for (std::int64_t c = 0; c < l.channels; ++c) {
    const double m = max_abs[static_cast<std::size_t>(c)];
    if (m > 0.0) q.scales[static_cast<std::size_t>(c)] = static_cast<float>(m / 127.0);
  }
  for (std::int64_t o = 0; o < l.outer; ++o) {
    for (std::int64_t c = 0; c < l.channels; ++c) {
      const double s = q.scales[static_cast<std::size_t>(c)];
      const std::int64_t base = (o * l.channels + c) * l.inner;
      for (std::int64_t i = 0; i < l.inner; ++i) {
        const long v = std::lround(static_cast<double>(w[base + i]) / s);
        q.values[static_cast<std::size_t>(base + i)] = static_cast<std::int8_t>(std::clamp(v, -127L, 127L));
      }
    }
  }
  return q;
}

Tensor dequantize(const QuantizedTensor& q) {
  const AxisLayout l = layout_of(q.shape, q.axis);
  if (static_cast<std::int64_t>(q.values.size()) != shape_numel(q.shape) ||
      static_cast<std::int64_t>(q.scales.size()) != l.channels) {
    throw ShapeError("quantized tensor buffers do not match shape " + shape_string(q.shape));
  }
  Tensor w(q.shape);
  for (std::int64_t o = 0; o < l.outer; ++o) {
    for (std::int64_t c = 0; c < l.channels; ++c) {
      const float s = q.scales[static_cast<std::size_t>(c)];
      const std::int64_t base = (o * l.channels + c) * l.inner;
      for (std::int64_t i = 0; i < l.inner; ++i) {
        w[base + i] = static_cast<float>(q.values[static_cast<std::size_t>(base + i)]) * s;
      }
    }
  }
  return w;
}

std::optional<int> quantization_axis(const std::string& name, const Shape& shape) {
  if (shape.size() < 2) return std::nullopt;
  // Transposed convolutions store [in, out, k, k].
  if (ends_with(name, ".up.weight")) return 1;
  if (ends_with(name, ".weight")) return 0;
  // Attention projections are [out, in] like linear weights.
  for (const char* s : {".wq", ".wk", ".wv", ".wo"}) {
    if (ends_with(name, s)) return 0;
  }
  return std::nullopt;
}

}  // namespace sqsm::quant
