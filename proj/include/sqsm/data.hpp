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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sqsm/image.hpp"
#include "sqsm/rng.hpp"
#include "sqsm/saliency.hpp"

namespace sqsm::data {

/// COCO-style run-length mask: column-major runs, starting with a zeros run.
struct RleMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> counts;

  static RleMask encode(const BinaryMask& mask);
  BinaryMask decode() const;
  std::int64_t area() const;
  /// Throws ValidationError unless sum(counts) == height * width.
  void validate() const;

  /// COCO compressed counts string (the "counts" field of pycocotools).
  std::string to_compressed() const;
  static RleMask from_compressed(const std::string& counts, int height, int width);

  friend bool operator==(const RleMask&, const RleMask&) = default;
};

/// Even-odd fill of a polygon [x0, y0, x1, y1, ...] sampled at pixel centres.
BinaryMask rasterize_polygon(const std::vector<double>& xy, int height, int width);

struct Sample {
  Image image;
  std::vector<RleMask> masks;
  std::string source_id;
  bool background_only = false;
  /// Optional finer-grained variants used by the saliency evaluation.
  std::vector<RleMask> fine_masks;
  /// Optional external saliency heatmap.
  std::optional<saliency::Heatmap> heatmap;

  std::vector<BinaryMask> decoded_masks() const;
  /// Throws ValidationError on masks that do not fit the image or are empty.
  void validate() const;
};

struct AugmentConfig {
  double merge_containment_tau = 0.9;
  double outlier_prob = 0.1;
  double crop_prob = 0.5;
  double crop_dilation_lo = 1.2;
  double crop_dilation_hi = 2.0;

  void validate() const;
};

/// Removes every mask A for which some mask B has area(B) > area(A) and
/// area(A & B) / area(A) >= tau. Survivors keep their order.
std::vector<BinaryMask> merge_nested_masks(const std::vector<BinaryMask>& masks, double tau);
std::vector<RleMask> merge_nested_masks(const std::vector<RleMask>& masks, double tau);
/// Indices of the masks merge_nested_masks keeps.
std::vector<std::size_t> merge_survivors(const std::vector<BinaryMask>& masks, double tau);

/// With probability `prob` appends one foreground click drawn uniformly from the
/// pixels outside every mask. Skips silently when there is no such pixel.
std::vector<Click> inject_outlier_click(std::vector<Click> clicks,
                                        const std::vector<BinaryMask>& masks, Rng& rng,
                                        double prob);

struct CropResult {
  Sample sample;
  /// Position of the target in sample.masks; -1 if the resize erased it.
  int target_index = -1;
  bool cropped = false;
  /// Crop window [x0, x1) x [y0, y1) in source pixels.
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

/// With probability cfg.crop_prob crops a window around the target's bounding
/// box (scaled by a factor drawn from the dilation range, about the box centre,
/// clamped to the image), then resizes image (bilinear) and masks (nearest) to
/// out_size x out_size. Masks emptied by the crop are dropped. `forced_dilation`
/// bypasses both random draws and always crops.
CropResult center_crop_around_object(const Sample& sample, int target_index, Rng& rng,
                                     const AugmentConfig& cfg, int out_size,
                                     std::optional<double> forced_dilation = std::nullopt);

/// Resizes image and masks to out_size x out_size without cropping.
Sample resize_sample(const Sample& sample, int out_size);

/// n foreground clicks drawn i.i.d. uniformly (with replacement) from the mask.
std::vector<Click> sample_training_clicks(const BinaryMask& mask, int n, Rng& rng);

Image resize_image(const Image& image, int height, int width);
BinaryMask resize_mask(const BinaryMask& mask, int height, int width);

struct SceneSpec {
  int size = 64;
  int min_objects = 1;
  int max_objects = 3;
  int min_parts = 1;
  int max_parts = 2;
  double noise_sd = 6.0;
};

/// Mask indices of one composite object inside Sample::masks.
struct SceneObject {
  std::vector<int> parts;
  int base = 0;
  int composite = 0;
};

struct SyntheticScene {
  Sample sample;
  std::vector<SceneObject> objects;
};

/// Nested-shape scene: each object is a base (ellipse or rounded rectangle) with
/// 1-2 parts overlapping its boundary. Masks per object are the visible parts, the
/// visible base and their union, in that order.
SyntheticScene generate_synthetic_scene(Rng& rng, const SceneSpec& spec);

/// Scene i of a seeded set uses Rng(base_seed + i).
std::vector<SyntheticScene> generate_synthetic_set(std::uint64_t base_seed, int count,
                                                   const SceneSpec& spec);

// Image and dataset files.
Image read_image(const std::filesystem::path& path);
Image decode_image(const std::vector<std::uint8_t>& bytes);
void write_image(const std::filesystem::path& path, const Image& image);
std::vector<std::uint8_t> encode_png(const Image& image);
std::vector<std::uint8_t> encode_mask_png(const BinaryMask& mask);
BinaryMask decode_mask_png(const std::vector<std::uint8_t>& bytes);
/// 8-bit grayscale PNG, value / 255.
saliency::Heatmap read_heatmap(const std::filesystem::path& path);
saliency::Heatmap decode_heatmap(const std::vector<std::uint8_t>& bytes);
void write_heatmap(const std::filesystem::path& path, const saliency::Heatmap& heatmap);

/// Writes images/<id>.png, annotations.json (COCO instance subset with
/// compressed RLE), fine.json when any sample has fine masks and
/// heatmaps/<id>.png for samples carrying one.
void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples);
/// Reads the layout above. Segmentations may be compressed RLE, uncompressed
/// RLE or polygons. Throws FormatError on malformed annotations.
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

}  // namespace sqsm::data
