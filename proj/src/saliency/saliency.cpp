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

#include "sqsm/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace sqsm::saliency {

void Heatmap::validate() const {
  if (height <= 0 || width <= 0 ||
      values.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw ValidationError("heatmap size does not match its data");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = values[i];
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw ValidationError("heatmap value " + std::to_string(v) + " at index " +
                            std::to_string(i) + " is outside [0, 1]");
    }
  }
}

int value_bin(float v, int bins) {
  return std::min(bins - 1, static_cast<int>(std::floor(static_cast<double>(v) * bins)));
}

double between_class_variance(std::int64_t n0, std::int64_t sum0, std::int64_t n1,
                              std::int64_t sum1) {
  if (n0 == 0 || n1 == 0) return 0.0;
  const double n = static_cast<double>(n0 + n1);
  const double w0 = static_cast<double>(n0) / n;
  const double w1 = static_cast<double>(n1) / n;
  const double mu0 = static_cast<double>(sum0) / static_cast<double>(n0);
  const double mu1 = static_cast<double>(sum1) / static_cast<double>(n1);
  return w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
}

double otsu_threshold(const Heatmap& heatmap, int bins) {
  heatmap.validate();
  if (bins < 2) throw ValidationError("otsu_threshold needs at least 2 bins");
  std::vector<std::int64_t> hist(static_cast<std::size_t>(bins), 0);
  for (float v : heatmap.values) ++hist[static_cast<std::size_t>(value_bin(v, bins))];
  std::int64_t total_n = 0, total_s = 0;
  for (int b = 0; b < bins; ++b) {
    total_n += hist[static_cast<std::size_t>(b)];
    total_s += hist[static_cast<std::size_t>(b)] * b;
  }
  std::int64_t n0 = 0, s0 = 0;
  double best = 0.0;
  int best_t = 0;
  for (int t = 1; t < bins; ++t) {
    n0 += hist[static_cast<std::size_t>(t - 1)];
    s0 += hist[static_cast<std::size_t>(t - 1)] * (t - 1);
    const double var = between_class_variance(n0, s0, total_n - n0, total_s - s0);
    if (var > best) {
      best = var;
      best_t = t;
    }
  }
  if (best_t == 0) {
    throw ValidationError("otsu_threshold: heatmap is constant (all values share one bin)");
  }
  return static_cast<double>(best_t) / bins;
}

BinaryMask binarize(const Heatmap& heatmap, double threshold) {
  BinaryMask m(heatmap.height, heatmap.width);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    m.data[i] = static_cast<double>(heatmap.values[i]) >= threshold;
  }
  return m;
}

namespace {

int find_root(std::vector<int>& parent, int x) {
  while (parent[static_cast<std::size_t>(x)] != x) {
    parent[static_cast<std::size_t>(x)] =
        parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    x = parent[static_cast<std::size_t>(x)];
  }
  return x;
}

void unite(std::vector<int>& parent, int a, int b) {
  a = find_root(parent, a);
  b = find_root(parent, b);
  if (a == b) return;
  // Keep the smaller provisional label as root so raster order is preserved.
  if (a < b) {
    parent[static_cast<std::size_t>(b)] = a;
  } else {
    parent[static_cast<std::size_t>(a)] = b;
  }
}

}  // namespace

std::vector<Blob> extract_blobs(const BinaryMask& binary, const Heatmap& heatmap) {
  if (binary.height != heatmap.height || binary.width != heatmap.width) {
    throw ValidationError("extract_blobs: mask and heatmap sizes differ");
  }
  const int h = binary.height, w = binary.width;
  std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
  std::vector<int> parent;
  // First pass: provisional labels from the four already-visited neighbours.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!binary.at(y, x)) continue;
      int cur = -1;
      const int nb[4][2] = {{-1, -1}, {0, -1}, {1, -1}, {-1, 0}};
      for (const auto& d : nb) {
        const int nx = x + d[0], ny = y + d[1];
        if (nx < 0 || nx >= w || ny < 0) continue;
        const int l = label[static_cast<std::size_t>(ny) * w + nx];
        if (l < 0) continue;
        if (cur < 0) {
          cur = l;
        } else {
          unite(parent, cur, l);
        }
      }
      if (cur < 0) {
        cur = static_cast<int>(parent.size());
        parent.push_back(cur);
      }
      label[static_cast<std::size_t>(y) * w + x] = cur;
    }
  }
  // Second pass: resolve roots and gather pixels in raster order.
  std::vector<int> dense(parent.size(), -1);
  std::vector<Blob> blobs;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int l = label[static_cast<std::size_t>(y) * w + x];
      if (l < 0) continue;
      const int root = find_root(parent, l);
      int& id = dense[static_cast<std::size_t>(root)];
      if (id < 0) {
        id = static_cast<int>(blobs.size());
        blobs.emplace_back();
        blobs.back().label = id;
        blobs.back().max_value = -1.0f;
      }
      Blob& b = blobs[static_cast<std::size_t>(id)];
      b.pixels.push_back({x, y});
      const float v = heatmap.at(y, x);
      if (v > b.max_value) {
        b.max_value = v;
        b.max_count = 1;
      } else if (v == b.max_value) {
        ++b.max_count;
      }
    }
  }
  for (Blob& b : blobs) {
    double sx = 0.0, sy = 0.0;
    for (const Point& p : b.pixels) {
      sx += p.x;
      sy += p.y;
    }
    b.cx = sx / static_cast<double>(b.pixels.size());
    b.cy = sy / static_cast<double>(b.pixels.size());
  }
  return blobs;
}

const Blob& select_salient_blob(const std::vector<Blob>& blobs) {
  if (blobs.empty()) throw NoSalientRegion("no blobs to choose from");
  const Blob* best = &blobs.front();
  for (const Blob& b : blobs) {
    const auto key = [](const Blob& x) {
      return std::make_tuple(x.max_value, x.max_count, x.pixels.size(), -x.label);
    };
    if (key(b) > key(*best)) best = &b;
  }
  return *best;
}

std::array<RealPoint, 4> quadrant_centroids(const Blob& blob) {
  double sx[4] = {0, 0, 0, 0}, sy[4] = {0, 0, 0, 0};
  int n[4] = {0, 0, 0, 0};
  for (const Point& p : blob.pixels) {
    const int q = (p.y >= blob.cy ? 2 : 0) + (p.x >= blob.cx ? 1 : 0);
    sx[q] += p.x;
    sy[q] += p.y;
    ++n[q];
  }
  std::array<RealPoint, 4> out{};
  for (int q = 0; q < 4; ++q) {
    out[static_cast<std::size_t>(q)] =
        n[q] > 0 ? RealPoint{sx[q] / n[q], sy[q] / n[q]} : RealPoint{blob.cx, blob.cy};
  }
  return out;
}

Point nearest_blob_pixel(const Blob& blob, double x, double y) {
  if (blob.pixels.empty()) throw ValidationError("nearest_blob_pixel: empty blob");
  Point best = blob.pixels.front();
  double best_d = 1e300;
  for (const Point& p : blob.pixels) {
    const double d = (p.x - x) * (p.x - x) + (p.y - y) * (p.y - y);
    const bool tie_wins = d == best_d && (p.y < best.y || (p.y == best.y && p.x < best.x));
    if (d < best_d || tie_wins) {
      best_d = d;
      best = p;
    }
  }
  return best;
}

std::array<Point, 5> sample_five_clicks(const Blob& blob) {
  if (blob.pixels.empty()) throw ValidationError("sample_five_clicks: empty blob");
  std::array<Point, 5> out{};
  out[0] = nearest_blob_pixel(blob, blob.cx, blob.cy);
  const auto q = quadrant_centroids(blob);
  for (std::size_t i = 0; i < 4; ++i) out[i + 1] = nearest_blob_pixel(blob, q[i].x, q[i].y);
  return out;
}

std::array<Point, 5> sample_grid_clicks(const Blob& blob) {
  if (blob.pixels.empty()) throw ValidationError("sample_grid_clicks: empty blob");
  int x0 = blob.pixels.front().x, x1 = x0, y0 = blob.pixels.front().y, y1 = y0;
  for (const Point& p : blob.pixels) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const double fx[5] = {0.5, 0.25, 0.75, 0.25, 0.75};
  const double fy[5] = {0.5, 0.25, 0.25, 0.75, 0.75};
  std::array<Point, 5> out{};
  for (std::size_t i = 0; i < 5; ++i) {
    out[i] = nearest_blob_pixel(blob, x0 + fx[i] * (x1 - x0), y0 + fy[i] * (y1 - y0));
  }
  return out;
}

AutoClicks synthesize_clicks(const Heatmap& heatmap, ClickStrategy strategy) {
  heatmap.validate();
  AutoClicks r;
  try {
    r.threshold = otsu_threshold(heatmap);
  } catch (const ValidationError& e) {
    throw NoSalientRegion(std::string("saliency map has no contrast: ") + e.what());
  }
  r.saliency_mask = binarize(heatmap, r.threshold);
  const std::vector<Blob> blobs = extract_blobs(r.saliency_mask, heatmap);
  if (blobs.empty()) throw NoSalientRegion("thresholded saliency map is empty");
  r.blob = select_salient_blob(blobs);
  r.points = strategy == ClickStrategy::kGrid ? sample_grid_clicks(r.blob)
                                              : sample_five_clicks(r.blob);
  return r;
}

Heatmap baseline_saliency(const Image& image) {
  const int h = image.height, w = image.width;
  Heatmap out(h, w);
  if (h == 0 || w == 0) return out;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  double mean[3] = {0, 0, 0};
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) mean[c] += image.data[c * plane + i];
    mean[c] /= static_cast<double>(plane);
  }
  const double sigma = 0.3 * std::min(h, w);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  std::vector<double> raw(plane);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = (image.data[c * plane + i] - mean[c]) / 255.0;
        d2 += d * d;
      }
      const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      raw[i] = std::sqrt(d2) * std::exp(-r2 / (2.0 * sigma * sigma));
    }
  }
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double range = *hi - *lo;
  if (range <= 1e-12) return out;
  for (std::size_t i = 0; i < plane; ++i) {
    out.values[i] = static_cast<float>(std::clamp((raw[i] - *lo) / range, 0.0, 1.0));
  }
  return out;
}

}  // namespace sqsm::saliency
