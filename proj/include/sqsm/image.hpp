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
#include <optional>
#include <string>
#include <vector>

#include "sqsm/errors.hpp"

namespace sqsm {

/// 8-bit RGB image stored planar (3 x H x W).
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), data(static_cast<std::size_t>(3) * h * w, fill) {}

  std::uint8_t& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::uint8_t at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool empty() const { return data.empty(); }
  friend bool operator==(const Image&, const Image&) = default;
};

/// Row-major binary mask, one byte per pixel (0 or 1).
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool contains(int y, int x) const {
    return y >= 0 && y < height && x >= 0 && x < width && at(y, x) != 0;
  }
  std::int64_t area() const;
  bool empty_mask() const { return area() == 0; }
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

std::int64_t intersection_area(const BinaryMask& a, const BinaryMask& b);
/// IoU of two same-sized masks; two empty masks give 1.
double mask_iou(const BinaryMask& a, const BinaryMask& b);
void require_same_size(const BinaryMask& a, const BinaryMask& b, const char* what);

enum class Polarity : std::uint8_t { kForeground = 0, kBackground = 1 };

const char* polarity_name(Polarity p);
Polarity parse_polarity(const std::string& s);

struct Click {
  int x = 0;
  int y = 0;
  Polarity polarity = Polarity::kForeground;
  friend bool operator==(const Click&, const Click&) = default;
};

/// Inclusive pixel rectangle.
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  friend bool operator==(const Box&, const Box&) = default;
};

struct PromptSet {
  std::vector<Click> clicks;
  std::optional<Box> box;
  bool empty() const { return clicks.empty() && !box; }
  friend bool operator==(const PromptSet&, const PromptSet&) = default;
};

/// Throws ValidationError unless every click and box corner lies in [0, w) x [0, h).
void validate_prompts(const PromptSet& prompts, int height, int width);

/// Drops clicks identical to an earlier click; the first occurrence keeps its place.
PromptSet canonical_prompts(const PromptSet& prompts);

}  // namespace sqsm
