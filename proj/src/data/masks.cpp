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

#include "sqsm/data.hpp"

namespace sqsm::data {

RleMask RleMask::encode(const BinaryMask& mask) {
  RleMask r;
  r.height = mask.height;
  r.width = mask.width;
  std::uint8_t cur = 0;
  std::uint32_t run = 0;
  for (int x = 0; x < mask.width; ++x) {
    for (int y = 0; y < mask.height; ++y) {
      const std::uint8_t v = mask.at(y, x) != 0;
      if (v != cur) {
        r.counts.push_back(run);
        run = 0;
        cur = v;
      }
      ++run;
    }
  }
  r.counts.push_back(run);
  return r;
}

BinaryMask RleMask::decode() const {
  validate();
  BinaryMask m(height, width);
  std::size_t pos = 0;
  std::uint8_t v = 0;
  for (std::uint32_t run : counts) {
    for (std::uint32_t i = 0; i < run; ++i, ++pos) {
      const int x = static_cast<int>(pos / static_cast<std::size_t>(height));
      const int y = static_cast<int>(pos % static_cast<std::size_t>(height));
      m.at(y, x) = v;
    }
    v ^= 1;
  }
  return m;
}

std::int64_t RleMask::area() const {
  std::int64_t a = 0;
  for (std::size_t i = 1; i < counts.size(); i += 2) a += counts[i];
  return a;
}

void RleMask::validate() const {
  if (height < 0 || width < 0) throw ValidationError("RLE mask has negative size");
  std::uint64_t total = 0;
  for (std::uint32_t c : counts) total += c;
  const std::uint64_t want = static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width);
  if (total != want) {
    throw ValidationError("RLE counts sum to " + std::to_string(total) + ", expected " +
                          std::to_string(want));
  }
}

// Each count (delta-coded against the count two back after the first two) is
// written as little-endian 5-bit groups with a continuation bit, offset by '0'.
std::string RleMask::to_compressed() const {
  std::string s;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    std::int64_t x = counts[i];
    if (i > 2) x -= counts[i - 2];
    bool more = true;
    while (more) {
      char c = static_cast<char>(x & 0x1f);
      x >>= 5;
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) c |= 0x20;
      s.push_back(static_cast<char>(c + 48));
    }
  }
  return s;
}

RleMask RleMask::from_compressed(const std::string& str, int height, int width) {
  RleMask r;
  r.height = height;
  r.width = width;
  std::size_t p = 0;
  while (p < str.size()) {
    std::int64_t x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= str.size()) throw FormatError("truncated compressed RLE string", p);
      const int c = static_cast<unsigned char>(str[p]) - 48;
      if (c < 0 || c > 63) throw FormatError("invalid character in compressed RLE", p);
      x |= static_cast<std::int64_t>(c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -(static_cast<std::int64_t>(1) << (5 * k));
    }
    if (r.counts.size() > 2) x += r.counts[r.counts.size() - 2];
    if (x < 0 || x > UINT32_MAX) throw FormatError("compressed RLE count out of range", p);
    r.counts.push_back(static_cast<std::uint32_t>(x));
  }
  try {
    r.validate();
  } catch (const ValidationError& e) {
    throw FormatError(e.what(), str.size());
  }
  return r;
}

BinaryMask rasterize_polygon(const std::vector<double>& xy, int height, int width) {
  if (xy.size() < 6 || xy.size() % 2 != 0) {
    throw ValidationError("polygon needs at least three (x, y) vertices");
  }
  BinaryMask m(height, width);
  const std::size_t n = xy.size() / 2;
  std::vector<double> xs;
  for (int y = 0; y < height; ++y) {
    const double py = y + 0.5;
    xs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const double x0 = xy[2 * i], y0 = xy[2 * i + 1];
      const double x1 = xy[2 * ((i + 1) % n)], y1 = xy[2 * ((i + 1) % n) + 1];
      // Half-open rule so shared vertices are counted once.
      if ((y0 <= py) != (y1 <= py)) xs.push_back(x0 + (py - y0) * (x1 - x0) / (y1 - y0));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
      // Pixel centres x + 0.5 inside [xs[i], xs[i + 1]).
      const int lo = std::max(0, static_cast<int>(std::ceil(xs[i] - 0.5)));
      const int hi = std::min(width, static_cast<int>(std::ceil(xs[i + 1] - 0.5)));
      for (int x = lo; x < hi; ++x) m.at(y, x) = 1;
    }
  }
  return m;
}

std::vector<BinaryMask> Sample::decoded_masks() const {
  std::vector<BinaryMask> out;
  out.reserve(masks.size());
  for (const RleMask& r : masks) out.push_back(r.decode());
  return out;
}

void Sample::validate() const {
  if (image.height <= 0 || image.width <= 0 ||
      image.data.size() != static_cast<std::size_t>(3) * image.height * image.width) {
    throw ValidationError("sample " + source_id + " has no valid image");
  }
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const RleMask& m = masks[i];
    if (m.height != image.height || m.width != image.width) {
      throw ValidationError("sample " + source_id + ": mask " + std::to_string(i) +
                            " does not match the image size");
    }
    m.validate();
    if (m.area() == 0 && !background_only) {
      throw ValidationError("sample " + source_id + ": mask " + std::to_string(i) + " is empty");
    }
  }
  if (heatmap && (heatmap->height != image.height || heatmap->width != image.width)) {
    throw ValidationError("sample " + source_id + ": heatmap does not match the image size");
  }
}

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ValidationError(std::string(name) + " must lie in [0, 1], got " + std::to_string(p));
    }
  };
  prob(outlier_prob, "outlier_prob");
  prob(crop_prob, "crop_prob");
  if (!(merge_containment_tau > 0.0 && merge_containment_tau <= 1.0)) {
    throw ValidationError("merge_containment_tau must lie in (0, 1]");
  }
  if (!(crop_dilation_lo > 0.0 && crop_dilation_lo <= crop_dilation_hi)) {
    throw ValidationError("crop dilation range must satisfy 0 < lo <= hi");
  }
}

namespace {

struct MaskInfo {
  std::int64_t area = 0;
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive bbox; empty when x1 < x0
};

MaskInfo describe(const BinaryMask& m) {
  MaskInfo info;
  info.x0 = m.width;
  info.y0 = m.height;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      ++info.area;
      info.x0 = std::min(info.x0, x);
      info.x1 = std::max(info.x1, x);
      info.y0 = std::min(info.y0, y);
      info.y1 = std::max(info.y1, y);
    }
  }
  return info;
}

std::int64_t overlap_in_box(const BinaryMask& a, const BinaryMask& b, int x0, int y0, int x1,
                            int y1) {
  std::int64_t n = 0;
  for (int y = y0; y <= y1; ++y) {
    const std::uint8_t* pa = a.data.data() + static_cast<std::size_t>(y) * a.width;
    const std::uint8_t* pb = b.data.data() + static_cast<std::size_t>(y) * b.width;
    for (int x = x0; x <= x1; ++x) n += (pa[x] & pb[x]) != 0;
  }
  return n;
}

}  // namespace

std::vector<std::size_t> merge_survivors(const std::vector<BinaryMask>& masks, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ValidationError("merge tau must lie in (0, 1]");
  for (std::size_t i = 1; i < masks.size(); ++i) {
    require_same_size(masks[0], masks[i], "merge_nested_masks");
  }
  std::vector<MaskInfo> info;
  info.reserve(masks.size());
  for (const BinaryMask& m : masks) info.push_back(describe(m));
  std::vector<std::size_t> keep;
  for (std::size_t a = 0; a < masks.size(); ++a) {
    const MaskInfo& ia = info[a];
    bool removed = false;
    for (std::size_t b = 0; b < masks.size() && !removed && ia.area > 0; ++b) {
      const MaskInfo& ib = info[b];
      if (ib.area <= ia.area) continue;
      // Overlap can only occur inside the intersection of the two boxes.
      const int x0 = std::max(ia.x0, ib.x0), x1 = std::min(ia.x1, ib.x1);
      const int y0 = std::max(ia.y0, ib.y0), y1 = std::min(ia.y1, ib.y1);
      if (x0 > x1 || y0 > y1) continue;
      const std::int64_t inter = overlap_in_box(masks[a], masks[b], x0, y0, x1, y1);
      removed = static_cast<double>(inter) / static_cast<double>(ia.area) >= tau;
    }
    if (!removed) keep.push_back(a);
  }
  return keep;
}

std::vector<BinaryMask> merge_nested_masks(const std::vector<BinaryMask>& masks, double tau) {
  std::vector<BinaryMask> out;
  for (std::size_t i : merge_survivors(masks, tau)) out.push_back(masks[i]);
  return out;
}

std::vector<RleMask> merge_nested_masks(const std::vector<RleMask>& masks, double tau) {
  std::vector<BinaryMask> decoded;
  decoded.reserve(masks.size());
  for (const RleMask& r : masks) decoded.push_back(r.decode());
  std::vector<RleMask> out;
  for (std::size_t i : merge_survivors(decoded, tau)) out.push_back(masks[i]);
  return out;
}

}  // namespace sqsm::data
