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

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>

#include "sqsm/data.hpp"

namespace sqsm::data {

Image resize_image(const Image& image, int height, int width) {
  if (height <= 0 || width <= 0) throw ValidationError("resize_image: empty target size");
  if (image.height == height && image.width == width) return image;
  Image out(height, width);
  const std::size_t src_plane = static_cast<std::size_t>(image.height) * image.width;
  const std::size_t dst_plane = static_cast<std::size_t>(height) * width;
  for (int c = 0; c < 3; ++c) {
    cv::Mat src(image.height, image.width, CV_8UC1,
                const_cast<std::uint8_t*>(image.data.data() + c * src_plane));
    cv::Mat dst(height, width, CV_8UC1, out.data.data() + c * dst_plane);
    cv::resize(src, dst, dst.size(), 0, 0, cv::INTER_LINEAR);
  }
  return out;
}

BinaryMask resize_mask(const BinaryMask& mask, int height, int width) {
  if (height <= 0 || width <= 0) throw ValidationError("resize_mask: empty target size");
  if (mask.height == height && mask.width == width) return mask;
  BinaryMask out(height, width);
  cv::Mat src(mask.height, mask.width, CV_8UC1, const_cast<std::uint8_t*>(mask.data.data()));
  cv::Mat dst(height, width, CV_8UC1, out.data.data());
  cv::resize(src, dst, dst.size(), 0, 0, cv::INTER_NEAREST);
  return out;
}

std::vector<Click> inject_outlier_click(std::vector<Click> clicks,
                                        const std::vector<BinaryMask>& masks, Rng& rng,
                                        double prob) {
  if (masks.empty()) return clicks;
  // The coin is always drawn so the stream does not depend on the outcome.
  if (!rng.bernoulli(prob)) return clicks;
  const BinaryMask& first = masks.front();
  std::vector<int> background;
  for (int i = 0; i < static_cast<int>(first.data.size()); ++i) {
    bool covered = false;
    for (const BinaryMask& m : masks) covered = covered || m.data[static_cast<std::size_t>(i)];
    if (!covered) background.push_back(i);
  }
  if (background.empty()) return clicks;
  const int pick = background[rng.below(background.size())];
  clicks.push_back({pick % first.width, pick / first.width, Polarity::kForeground});
  return clicks;
}

std::vector<Click> sample_training_clicks(const BinaryMask& mask, int n, Rng& rng) {
  if (n < 1) throw ValidationError("sample_training_clicks needs n >= 1");
  std::vector<int> pixels;
  for (int i = 0; i < static_cast<int>(mask.data.size()); ++i) {
    if (mask.data[static_cast<std::size_t>(i)]) pixels.push_back(i);
  }
  if (pixels.empty()) throw ValidationError("sample_training_clicks: empty mask");
  std::vector<Click> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int p = pixels[rng.below(pixels.size())];
    out.push_back({p % mask.width, p / mask.width, Polarity::kForeground});
  }
  return out;
}

namespace {

Sample crop_and_resize(const Sample& sample, int x0, int y0, int x1, int y1, int out_size,
                       int target_index, int* new_target) {
  Sample out;
  out.source_id = sample.source_id;
  out.background_only = sample.background_only;
  const int cw = x1 - x0, ch = y1 - y0;
  Image crop(ch, cw);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < ch; ++y) {
      for (int x = 0; x < cw; ++x) crop.at(c, y, x) = sample.image.at(c, y0 + y, x0 + x);
    }
  }
  out.image = resize_image(crop, out_size, out_size);
  auto transform = [&](const RleMask& r) {
    const BinaryMask m = r.decode();
    BinaryMask cm(ch, cw);
    for (int y = 0; y < ch; ++y) {
      for (int x = 0; x < cw; ++x) cm.at(y, x) = m.at(y0 + y, x0 + x);
    }
    return resize_mask(cm, out_size, out_size);
  };
  *new_target = -1;
  for (std::size_t i = 0; i < sample.masks.size(); ++i) {
    const BinaryMask m = transform(sample.masks[i]);
    if (m.empty_mask()) continue;
    if (static_cast<int>(i) == target_index) *new_target = static_cast<int>(out.masks.size());
    out.masks.push_back(RleMask::encode(m));
  }
  for (const RleMask& r : sample.fine_masks) {
    const BinaryMask m = transform(r);
    if (!m.empty_mask()) out.fine_masks.push_back(RleMask::encode(m));
  }
  if (sample.heatmap) {
    saliency::Heatmap h(out_size, out_size);
    for (int y = 0; y < out_size; ++y) {
      for (int x = 0; x < out_size; ++x) {
        const int sy = y0 + std::min(ch - 1, y * ch / out_size);
        const int sx = x0 + std::min(cw - 1, x * cw / out_size);
        h.at(y, x) = sample.heatmap->at(sy, sx);
      }
    }
    out.heatmap = std::move(h);
  }
  return out;
}

}  // namespace

Sample resize_sample(const Sample& sample, int out_size) {
  int unused = -1;
  return crop_and_resize(sample, 0, 0, sample.image.width, sample.image.height, out_size, -1,
                         &unused);
}

CropResult center_crop_around_object(const Sample& sample, int target_index, Rng& rng,
                                     const AugmentConfig& cfg, int out_size,
                                     std::optional<double> forced_dilation) {
  cfg.validate();
  if (target_index < 0 || target_index >= static_cast<int>(sample.masks.size())) {
    throw ValidationError("center_crop_around_object: target index out of range");
  }
  const BinaryMask target = sample.masks[static_cast<std::size_t>(target_index)].decode();
  const int w = sample.image.width, h = sample.image.height;
  CropResult r;
  r.x1 = w;
  r.y1 = h;
  double factor = 0.0;
  if (forced_dilation) {
    r.cropped = true;
    factor = *forced_dilation;
  } else {
    r.cropped = rng.bernoulli(cfg.crop_prob);
    factor = rng.uniform(cfg.crop_dilation_lo, cfg.crop_dilation_hi);
  }
  if (r.cropped) {
    int bx0 = w, by0 = h, bx1 = -1, by1 = -1;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!target.at(y, x)) continue;
        bx0 = std::min(bx0, x);
        bx1 = std::max(bx1, x);
        by0 = std::min(by0, y);
        by1 = std::max(by1, y);
      }
    }
    if (bx1 < 0) throw ValidationError("center_crop_around_object: target mask is empty");
    // Box edges in continuous coordinates are [bx0, bx1 + 1).
    const double cx = 0.5 * (bx0 + bx1 + 1), cy = 0.5 * (by0 + by1 + 1);
    const double hw = 0.5 * factor * (bx1 + 1 - bx0), hh = 0.5 * factor * (by1 + 1 - by0);
    constexpr double kSlack = 1e-9;
    r.x0 = std::max(0, static_cast<int>(std::floor(cx - hw + kSlack)));
    r.y0 = std::max(0, static_cast<int>(std::floor(cy - hh + kSlack)));
    r.x1 = std::min(w, static_cast<int>(std::ceil(cx + hw - kSlack)));
    r.y1 = std::min(h, static_cast<int>(std::ceil(cy + hh - kSlack)));
  }
  r.sample = crop_and_resize(sample, r.x0, r.y0, r.x1, r.y1, out_size, target_index,
                             &r.target_index);
  return r;
}

}  // namespace sqsm::data
