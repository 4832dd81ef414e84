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
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "sqsm/data.hpp"

namespace sqsm::data {
namespace {

struct Shape {
  bool ellipse = true;
  double cx = 0, cy = 0, rx = 1, ry = 1;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    if (ellipse) return (dx * dx) / (rx * rx) + (dy * dy) / (ry * ry) <= 1.0;
    const double rc = 0.35 * std::min(rx, ry);
    const double qx = std::max(std::abs(dx) - (rx - rc), 0.0);
    const double qy = std::max(std::abs(dy) - (ry - rc), 0.0);
    return std::abs(dx) <= rx && std::abs(dy) <= ry && qx * qx + qy * qy <= rc * rc;
  }
};

BinaryMask rasterize(const Shape& s, int size) {
  BinaryMask m(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) m.at(y, x) = s.contains(x, y);
  }
  return m;
}

using Rgb = std::array<double, 3>;

double color_distance(const Rgb& a, const Rgb& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                   (a[2] - b[2]) * (a[2] - b[2]));
}

Rgb distinct_color(Rng& rng, const std::vector<Rgb>& avoid) {
  constexpr double kMinDistance = 90.0;
  Rgb c{};
  for (int attempt = 0; attempt < 200; ++attempt) {
    c = {rng.uniform(0, 255), rng.uniform(0, 255), rng.uniform(0, 255)};
    bool ok = true;
    for (const Rgb& a : avoid) ok = ok && color_distance(a, c) >= kMinDistance;
    if (ok) break;
  }
  return c;
}

struct Bounds {
  int x0, y0, x1, y1;
};

std::optional<Bounds> bbox(const BinaryMask& m) {
  Bounds b{m.width, m.height, -1, -1};
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      b.x0 = std::min(b.x0, x);
      b.x1 = std::max(b.x1, x);
      b.y0 = std::min(b.y0, y);
      b.y1 = std::max(b.y1, y);
    }
  }
  if (b.x1 < 0) return std::nullopt;
  return b;
}

struct Built {
  std::vector<BinaryMask> parts;  // visible
  BinaryMask base;                // visible
  BinaryMask composite;
  std::vector<Shape> part_shapes;
  Shape base_shape;
};

std::optional<Built> try_object(Rng& rng, const SceneSpec& spec, double rmin, double rmax,
                                const std::vector<Bounds>& taken) {
  const int s = spec.size;
  Built b;
  b.base_shape.ellipse = rng.bernoulli(0.5);
  b.base_shape.rx = rng.uniform(rmin, rmax);
  b.base_shape.ry = rng.uniform(rmin, rmax);
  b.base_shape.cx = rng.uniform(0.15 * s, 0.85 * s);
  b.base_shape.cy = rng.uniform(0.15 * s, 0.85 * s);
  const int nparts = static_cast<int>(rng.range(spec.min_parts, spec.max_parts));
  const double first_angle = rng.uniform(0, 2 * std::numbers::pi);
  for (int j = 0; j < nparts; ++j) {
    Shape p;
    p.ellipse = rng.bernoulli(0.5);
    // Parts sit on the base outline, spread apart so they do not cover each other.
    const double a = first_angle + j * rng.uniform(0.6, 1.4) * std::numbers::pi;
    const double r = std::min(b.base_shape.rx, b.base_shape.ry);
    p.rx = std::max(2.5, rng.uniform(0.3, 0.55) * r);
    p.ry = std::max(2.5, rng.uniform(0.3, 0.55) * r);
    p.cx = b.base_shape.cx + b.base_shape.rx * std::cos(a);
    p.cy = b.base_shape.cy + b.base_shape.ry * std::sin(a);
    b.part_shapes.push_back(p);
  }
  const BinaryMask base_full = rasterize(b.base_shape, s);
  std::vector<BinaryMask> part_full;
  for (const Shape& p : b.part_shapes) part_full.push_back(rasterize(p, s));
  b.composite = base_full;
  for (const BinaryMask& p : part_full) {
    for (std::size_t i = 0; i < p.data.size(); ++i) b.composite.data[i] |= p.data[i];
  }
  // Later parts are painted over earlier ones; all parts over the base.
  for (std::size_t j = 0; j < part_full.size(); ++j) {
    BinaryMask vis = part_full[j];
    for (std::size_t k = j + 1; k < part_full.size(); ++k) {
      for (std::size_t i = 0; i < vis.data.size(); ++i) vis.data[i] &= !part_full[k].data[i];
    }
    std::int64_t outside_base = 0;
    for (std::size_t i = 0; i < vis.data.size(); ++i) outside_base += vis.data[i] && !base_full.data[i];
    if (vis.area() < 12 || outside_base < 6) return std::nullopt;
    b.parts.push_back(std::move(vis));
  }
  b.base = base_full;
  for (const BinaryMask& p : part_full) {
    for (std::size_t i = 0; i < p.data.size(); ++i) b.base.data[i] &= !p.data[i];
  }
  if (b.base.area() < 40) return std::nullopt;
  const auto box = bbox(b.composite);
  if (!box || box->x0 == 0 || box->y0 == 0 || box->x1 == s - 1 || box->y1 == s - 1) {
    return std::nullopt;
  }
  constexpr int kGap = 2;
  for (const Bounds& t : taken) {
    const bool apart = box->x1 + kGap < t.x0 || t.x1 + kGap < box->x0 || box->y1 + kGap < t.y0 ||
                       t.y1 + kGap < box->y0;
    if (!apart) return std::nullopt;
  }
  return b;
}

}  // namespace

SyntheticScene generate_synthetic_scene(Rng& rng, const SceneSpec& spec) {
  if (spec.size < 16 || spec.min_objects < 1 || spec.max_objects < spec.min_objects ||
      spec.min_parts < 1 || spec.max_parts < spec.min_parts) {
    throw ValidationError("invalid synthetic scene spec");
  }
  const int s = spec.size;
  const int wanted = static_cast<int>(rng.range(spec.min_objects, spec.max_objects));
  // Smaller objects when more of them must fit.
  const double scale = s / 64.0;
  const double rmin = (wanted == 1 ? 9.0 : wanted == 2 ? 7.0 : 6.0) * scale;
  const double rmax = (wanted == 1 ? 16.0 : wanted == 2 ? 12.0 : 10.0) * scale;

  std::vector<Built> objects;
  std::vector<Bounds> taken;
  for (int o = 0; o < wanted; ++o) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      auto built = try_object(rng, spec, rmin, rmax, taken);
      if (!built) continue;
      taken.push_back(*bbox(built->composite));
      objects.push_back(std::move(*built));
      break;
    }
  }
  if (objects.empty()) throw NumericError("synthetic scene generation failed to place an object");

  // Background: a linear gradient between two colours.
  const Rgb bg0 = distinct_color(rng, {});
  const Rgb bg1 = {std::clamp(bg0[0] + rng.uniform(-30, 30), 0.0, 255.0),
                   std::clamp(bg0[1] + rng.uniform(-30, 30), 0.0, 255.0),
                   std::clamp(bg0[2] + rng.uniform(-30, 30), 0.0, 255.0)};
  std::vector<Rgb> canvas(static_cast<std::size_t>(s) * s);
  const double gangle = rng.uniform(0, 2 * std::numbers::pi);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double t = 0.5 + 0.5 * ((x - s / 2.0) * std::cos(gangle) +
                                    (y - s / 2.0) * std::sin(gangle)) / (0.75 * s);
      Rgb& c = canvas[static_cast<std::size_t>(y) * s + x];
      for (int k = 0; k < 3; ++k) c[k] = bg0[k] + std::clamp(t, 0.0, 1.0) * (bg1[k] - bg0[k]);
    }
  }

  SyntheticScene scene;
  scene.sample.source_id = "synthetic";
  for (const Built& b : objects) {
    std::vector<Rgb> used{bg0, bg1};
    const Rgb base_color = distinct_color(rng, used);
    used.push_back(base_color);
    std::vector<Rgb> part_colors;
    for (std::size_t j = 0; j < b.parts.size(); ++j) {
      part_colors.push_back(distinct_color(rng, used));
      used.push_back(part_colors.back());
    }
    for (std::size_t i = 0; i < canvas.size(); ++i) {
      if (b.base.data[i]) canvas[i] = base_color;
      for (std::size_t j = 0; j < b.parts.size(); ++j) {
        if (b.parts[j].data[i]) canvas[i] = part_colors[j];
      }
    }
    SceneObject obj;
    for (const BinaryMask& p : b.parts) {
      obj.parts.push_back(static_cast<int>(scene.sample.masks.size()));
      scene.sample.masks.push_back(RleMask::encode(p));
    }
    obj.base = static_cast<int>(scene.sample.masks.size());
    scene.sample.masks.push_back(RleMask::encode(b.base));
    obj.composite = static_cast<int>(scene.sample.masks.size());
    scene.sample.masks.push_back(RleMask::encode(b.composite));
    scene.objects.push_back(std::move(obj));
  }

  Image img(s, s);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const Rgb& c = canvas[static_cast<std::size_t>(y) * s + x];
      for (int k = 0; k < 3; ++k) {
        const double v = c[k] + rng.normal(0.0, spec.noise_sd);
        img.at(k, y, x) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  scene.sample.image = std::move(img);
  return scene;
}

std::vector<SyntheticScene> generate_synthetic_set(std::uint64_t base_seed, int count,
                                                   const SceneSpec& spec) {
  std::vector<SyntheticScene> out;
  out.reserve(static_cast<std::size_t>(std::max(0, count)));
  for (int i = 0; i < count; ++i) {
    Rng rng(base_seed + static_cast<std::uint64_t>(i));
    SyntheticScene scene = generate_synthetic_scene(rng, spec);
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%05d", i);
    scene.sample.source_id = id;
    out.push_back(std::move(scene));
  }
  return out;
}

}  // namespace sqsm::data
