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

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqsm/image.hpp"

namespace sqsm::saliency {

/// H x W map with values in [0, 1], row-major.
struct Heatmap {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  Heatmap() = default;
  Heatmap(int h, int w, float fill = 0.0f)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }

  /// Throws ValidationError on non-finite or out-of-range values.
  void validate() const;
};

/// Raised when thresholding leaves nothing to prompt from.
class NoSalientRegion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Histogram bin of a heatmap value: min(bins - 1, floor(v * bins)).
int value_bin(float v, int bins);

/// Between-class variance w0 * w1 * (mu0 - mu1)^2 of splitting a histogram into
/// bins [0, t) and [t, bins), with class means in bin-index units. Zero when a
/// class is empty.
double between_class_variance(std::int64_t n0, std::int64_t sum0, std::int64_t n1,
                              std::int64_t sum1);

/// Otsu threshold t / bins maximising between-class variance over t in
/// [1, bins); ties go to the lowest t. Pixels with value >= threshold are
/// foreground. Throws ValidationError when no split separates anything.
double otsu_threshold(const Heatmap& heatmap, int bins = 256);

BinaryMask binarize(const Heatmap& heatmap, double threshold);

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Blob {
  int label = 0;
  std::vector<Point> pixels;  // raster order
  float max_value = 0.0f;
  int max_count = 0;
  double cx = 0.0;
  double cy = 0.0;
};

/// 8-connected components of `binary`, labelled in raster order of their
/// first pixel. Maximum statistics come from `heatmap`.
std::vector<Blob> extract_blobs(const BinaryMask& binary, const Heatmap& heatmap);

/// Highest max_value, then higher max_count, then more pixels, then lowest label.
const Blob& select_salient_blob(const std::vector<Blob>& blobs);

struct RealPoint {
  double x = 0.0;
  double y = 0.0;
};

/// Centroids of the four quadrants about the blob centroid, in the order
/// top-left, top-right, bottom-left, bottom-right. Pixels with x == cx or
/// y == cy fall on the >= side; an empty quadrant yields the blob centroid.
std::array<RealPoint, 4> quadrant_centroids(const Blob& blob);

/// Blob pixel nearest to (x, y); ties prefer smaller y, then smaller x.
Point nearest_blob_pixel(const Blob& blob, double x, double y);

/// Whole-blob centroid followed by the four quadrant centroids, each snapped
/// to the nearest blob pixel.
std::array<Point, 5> sample_five_clicks(const Blob& blob);

/// Alternative strategy: bounding-box grid positions (centre, then the four
/// quarter points in the same order) snapped to the blob.
std::array<Point, 5> sample_grid_clicks(const Blob& blob);

enum class ClickStrategy { kCenterOfMass, kGrid };

struct AutoClicks {
  double threshold = 0.0;
  BinaryMask saliency_mask;  // full thresholded map
  Blob blob;
  std::array<Point, 5> points{};
};

/// Threshold, extract blobs, pick the most salient one and place five clicks.
/// Throws NoSalientRegion when the map is flat or thresholding yields no blob.
AutoClicks synthesize_clicks(const Heatmap& heatmap,
                             ClickStrategy strategy = ClickStrategy::kCenterOfMass);

/// Colour contrast to the global mean colour weighted by a centred Gaussian
/// prior (sigma = 0.3 * min(H, W)), min-max normalised; flat input gives zeros.
Heatmap baseline_saliency(const Image& image);

}  // namespace sqsm::saliency
