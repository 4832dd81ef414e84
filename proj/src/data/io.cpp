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

#include <opencv2/imgcodecs.hpp>

#include <fstream>
#include <map>
#include <json.hpp>

#include "sqsm/data.hpp"

namespace sqsm::data {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Image from_mat(const cv::Mat& m) {
  Image img(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      const cv::Vec3b bgr = m.at<cv::Vec3b>(y, x);
      img.at(0, y, x) = bgr[2];
      img.at(1, y, x) = bgr[1];
      img.at(2, y, x) = bgr[0];
    }
  }
  return img;
}

cv::Mat to_mat(const Image& img) {
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      m.at<cv::Vec3b>(y, x) = cv::Vec3b(img.at(2, y, x), img.at(1, y, x), img.at(0, y, x));
    }
  }
  return m;
}

std::vector<std::uint8_t> encode(const cv::Mat& m) {
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", m, out)) throw FormatError("PNG encoding failed");
  return out;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

json annotation_json(const RleMask& r, int id, int image_id) {
  const BinaryMask m = r.decode();
  int x0 = m.width, y0 = m.height, x1 = -1, y1 = -1;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  json bbox = x1 < 0 ? json::array({0, 0, 0, 0}) : json::array({x0, y0, x1 - x0 + 1, y1 - y0 + 1});
  return {{"id", id},
          {"image_id", image_id},
          {"category_id", 1},
          {"iscrowd", 0},
          {"area", r.area()},
          {"bbox", bbox},
          {"segmentation", {{"size", {r.height, r.width}}, {"counts", r.to_compressed()}}}};
}

RleMask parse_segmentation(const json& seg, int height, int width) {
  if (seg.is_object()) {
    const auto& size = seg.at("size");
    const int h = size.at(0).get<int>(), w = size.at(1).get<int>();
    if (h != height || w != width) throw FormatError("segmentation size differs from its image");
    const json& counts = seg.at("counts");
    if (counts.is_string()) return RleMask::from_compressed(counts.get<std::string>(), h, w);
    RleMask r{h, w, counts.get<std::vector<std::uint32_t>>()};
    try {
      r.validate();
    } catch (const ValidationError& e) {
      throw FormatError(e.what());
    }
    return r;
  }
  if (seg.is_array()) {
    BinaryMask m(height, width);
    for (const json& poly : seg) {
      const BinaryMask p = rasterize_polygon(poly.get<std::vector<double>>(), height, width);
      for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] |= p.data[i];
    }
    return RleMask::encode(m);
  }
  throw FormatError("unsupported segmentation encoding");
}

json coco_document(const std::vector<Sample>& samples, bool fine) {
  json images = json::array(), anns = json::array();
  int ann_id = 1;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const int image_id = static_cast<int>(i) + 1;
    images.push_back({{"id", image_id},
                      {"file_name", s.source_id + ".png"},
                      {"height", s.image.height},
                      {"width", s.image.width}});
    for (const RleMask& r : fine ? s.fine_masks : s.masks) {
      anns.push_back(annotation_json(r, ann_id++, image_id));
    }
  }
  return {{"images", images},
          {"annotations", anns},
          {"categories", json::array({{{"id", 1}, {"name", "object"}}})}};
}

}  // namespace

Image decode_image(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) throw FormatError("empty image payload", 0);
  const cv::Mat m = cv::imdecode(bytes, cv::IMREAD_COLOR);
  if (m.empty()) throw FormatError("image payload could not be decoded", 0);
  return from_mat(m);
}

Image read_image(const fs::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw FormatError("cannot decode image " + path.string());
  return from_mat(m);
}

std::vector<std::uint8_t> encode_png(const Image& image) { return encode(to_mat(image)); }

void write_image(const fs::path& path, const Image& image) { write_bytes(path, encode_png(image)); }

std::vector<std::uint8_t> encode_mask_png(const BinaryMask& mask) {
  cv::Mat m(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) m.at<std::uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
  }
  return encode(m);
}

BinaryMask decode_mask_png(const std::vector<std::uint8_t>& bytes) {
  const cv::Mat m = cv::imdecode(bytes, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw FormatError("mask payload could not be decoded", 0);
  BinaryMask out(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) out.at(y, x) = m.at<std::uint8_t>(y, x) >= 128;
  }
  return out;
}

namespace {

saliency::Heatmap heatmap_from_mat(const cv::Mat& m) {
  saliency::Heatmap h(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) h.at(y, x) = m.at<std::uint8_t>(y, x) / 255.0f;
  }
  return h;
}

}  // namespace

saliency::Heatmap read_heatmap(const fs::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw FormatError("cannot decode heatmap " + path.string());
  return heatmap_from_mat(m);
}

saliency::Heatmap decode_heatmap(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) throw FormatError("empty heatmap payload", 0);
  const cv::Mat m = cv::imdecode(bytes, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw FormatError("heatmap payload could not be decoded", 0);
  return heatmap_from_mat(m);
}

void write_heatmap(const fs::path& path, const saliency::Heatmap& heatmap) {
  heatmap.validate();
  cv::Mat m(heatmap.height, heatmap.width, CV_8UC1);
  for (int y = 0; y < heatmap.height; ++y) {
    for (int x = 0; x < heatmap.width; ++x) {
      m.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(std::lround(heatmap.at(y, x) * 255.0f));
    }
  }
  write_bytes(path, encode(m));
}

void save_dataset(const fs::path& dir, const std::vector<Sample>& samples) {
  fs::create_directories(dir / "images");
  bool any_fine = false, any_heatmap = false;
  for (const Sample& s : samples) {
    s.validate();
    write_image(dir / "images" / (s.source_id + ".png"), s.image);
    any_fine = any_fine || !s.fine_masks.empty();
    any_heatmap = any_heatmap || s.heatmap.has_value();
  }
  {
    std::ofstream f(dir / "annotations.json");
    f << coco_document(samples, false).dump(1) << "\n";
  }
  if (any_fine) {
    std::ofstream f(dir / "fine.json");
    f << coco_document(samples, true).dump(1) << "\n";
  }
  if (any_heatmap) {
    fs::create_directories(dir / "heatmaps");
    for (const Sample& s : samples) {
      if (s.heatmap) write_heatmap(dir / "heatmaps" / (s.source_id + ".png"), *s.heatmap);
    }
  }
}

std::vector<Sample> load_dataset(const fs::path& dir) {
  const json doc = read_json(dir / "annotations.json");
  std::vector<Sample> samples;
  std::map<int, std::size_t> by_id;
  try {
    for (const json& im : doc.at("images")) {
      Sample s;
      const std::string file = im.at("file_name").get<std::string>();
      s.source_id = fs::path(file).stem().string();
      s.image = read_image(dir / "images" / file);
      if (im.contains("height") && (im.at("height").get<int>() != s.image.height ||
                                    im.at("width").get<int>() != s.image.width)) {
        throw FormatError("image " + file + " does not match its recorded size");
      }
      const fs::path hm = dir / "heatmaps" / (s.source_id + ".png");
      if (fs::exists(hm)) s.heatmap = read_heatmap(hm);
      by_id[im.at("id").get<int>()] = samples.size();
      samples.push_back(std::move(s));
    }
    auto attach = [&](const json& d, bool fine) {
      for (const json& a : d.at("annotations")) {
        const auto it = by_id.find(a.at("image_id").get<int>());
        if (it == by_id.end()) throw FormatError("annotation refers to an unknown image");
        Sample& s = samples[it->second];
        RleMask r = parse_segmentation(a.at("segmentation"), s.image.height, s.image.width);
        (fine ? s.fine_masks : s.masks).push_back(std::move(r));
      }
    };
    attach(doc, false);
    if (fs::exists(dir / "fine.json")) attach(read_json(dir / "fine.json"), true);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed annotations: ") + e.what());
  }
  for (Sample& s : samples) s.background_only = s.masks.empty();
  return samples;
}

}  // namespace sqsm::data
