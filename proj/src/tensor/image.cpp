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

#include "sqsm/image.hpp"

#include <algorithm>

namespace sqsm {

std::int64_t BinaryMask::area() const {
  return std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; });
}

void require_same_size(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw ValidationError(std::string(what) + ": mask sizes differ (" + std::to_string(a.height) +
                          "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                          std::to_string(b.width) + ")");
  }
}

std::int64_t intersection_area(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b, "intersection_area");
  std::int64_t n = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) n += (a.data[i] != 0 && b.data[i] != 0);
  return n;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b, "mask_iou");
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool pa = a.data[i] != 0, pb = b.data[i] != 0;
    inter += pa && pb;
    uni += pa || pb;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

const char* polarity_name(Polarity p) {
  return p == Polarity::kForeground ? "fg" : "bg";
}

Polarity parse_polarity(const std::string& s) {
  if (s == "fg" || s == "foreground" || s == "positive" || s == "1") return Polarity::kForeground;
  if (s == "bg" || s == "background" || s == "negative" || s == "0") return Polarity::kBackground;
  throw ValidationError("unknown click polarity '" + s + "' (expected fg or bg)");
}

void validate_prompts(const PromptSet& prompts, int height, int width) {
  auto inside = [&](int x, int y) { return x >= 0 && x < width && y >= 0 && y < height; };
  for (const Click& c : prompts.clicks) {
    if (!inside(c.x, c.y)) {
      throw ValidationError("click (" + std::to_string(c.x) + ", " + std::to_string(c.y) +
                            ") outside " + std::to_string(width) + "x" + std::to_string(height) +
                            " image");
    }
  }
  if (prompts.box) {
    const Box& b = *prompts.box;
    if (!inside(b.x0, b.y0) || !inside(b.x1, b.y1) || b.x0 > b.x1 || b.y0 > b.y1) {
      throw ValidationError("box (" + std::to_string(b.x0) + ", " + std::to_string(b.y0) + ", " +
                            std::to_string(b.x1) + ", " + std::to_string(b.y1) +
                            ") is not an in-bounds rectangle");
    }
  }
}

PromptSet canonical_prompts(const PromptSet& prompts) {
  PromptSet out;
  out.box = prompts.box;
  for (const Click& c : prompts.clicks) {
    if (std::find(out.clicks.begin(), out.clicks.end(), c) == out.clicks.end()) {
      out.clicks.push_back(c);
    }
  }
  return out;
}

}  // namespace sqsm
