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
#include <fstream>
#include <json.hpp>

#include "sqsm/train.hpp"

namespace sqsm::train {

SegmentationOutput output_from_masks(const std::vector<BinaryMask>& masks,
                                     const std::vector<float>& scores) {
  if (masks.empty() || masks.size() != scores.size()) {
    throw ValidationError("output_from_masks needs one score per mask");
  }
  const int h = masks[0].height, w = masks[0].width;
  SegmentationOutput out;
  out.mask_logits = Tensor({static_cast<std::int64_t>(masks.size()), h, w});
  for (std::size_t i = 0; i < masks.size(); ++i) {
    require_same_size(masks[0], masks[i], "output_from_masks");
    float* p = out.mask_logits.ptr() + static_cast<std::ptrdiff_t>(i) * h * w;
    for (std::size_t j = 0; j < masks[i].data.size(); ++j) p[j] = masks[i].data[j] ? 10.0f : -10.0f;
  }
  out.iou_scores = scores;
  out.best_index = argmax_score(scores);
  return out;
}

namespace {

data::Sample at_size(const data::Sample& s, int size) {
  if (s.image.height == size && s.image.width == size) return s;
  return data::resize_sample(s, size);
}

std::vector<BinaryMask> eval_masks(const data::Sample& s, std::optional<double> merge_tau) {
  std::vector<BinaryMask> masks = s.decoded_masks();
  if (merge_tau) masks = data::merge_nested_masks(masks, *merge_tau);
  masks.erase(std::remove_if(masks.begin(), masks.end(),
                             [](const BinaryMask& m) { return m.empty_mask(); }),
              masks.end());
  return masks;
}

}  // namespace

OracleSegmenter::OracleSegmenter(const std::vector<data::Sample>& dataset, int input_size,
                                 std::optional<double> merge_tau)
    : size_(input_size) {
  for (const data::Sample& s : dataset) {
    const data::Sample r = at_size(s, input_size);
    by_image_[r.image.data] = eval_masks(r, merge_tau);
  }
}

SegmentationOutput OracleSegmenter::segment(const Image& image, const PromptSet& prompts) {
  BinaryMask best(image.height, image.width);
  const auto it = by_image_.find(image.data);
  if (it != by_image_.end()) {
    std::int64_t best_area = -1;
    for (const BinaryMask& m : it->second) {
      bool all = true;
      for (const Click& c : prompts.clicks) {
        if (c.polarity == Polarity::kForeground && !m.contains(c.y, c.x)) all = false;
      }
      const std::int64_t a = m.area();
      if (all && (best_area < 0 || a < best_area)) {
        best = m;
        best_area = a;
      }
    }
  }
  return output_from_masks({best}, {1.0f});
}

const char* bucket_name(SizeBucket b) {
  switch (b) {
    case SizeBucket::kSmall:
      return "small";
    case SizeBucket::kMedium:
      return "medium";
    case SizeBucket::kLarge:
      return "large";
  }
  return "small";
}

SizeBucket size_bucket(std::int64_t area) {
  if (area < 32 * 32) return SizeBucket::kSmall;
  if (area <= 96 * 96) return SizeBucket::kMedium;
  return SizeBucket::kLarge;
}

EvalSummary summarize(const std::vector<EvalRecord>& records, std::int64_t excluded,
                      std::uint64_t seed) {
  double sum[3] = {0, 0, 0}, total = 0.0;
  std::int64_t cnt[3] = {0, 0, 0};
  EvalSummary s;
  for (const EvalRecord& r : records) {
    if (r.ambiguous) continue;
    const int b = static_cast<int>(r.size_bucket);
    sum[b] += r.iou;
    ++cnt[b];
    total += r.iou;
    ++s.count;
  }
  if (s.count > 0) s.overall = total / static_cast<double>(s.count);
  if (cnt[0] > 0) s.small = sum[0] / static_cast<double>(cnt[0]);
  if (cnt[1] > 0) s.medium = sum[1] / static_cast<double>(cnt[1]);
  if (cnt[2] > 0) s.large = sum[2] / static_cast<double>(cnt[2]);
  s.excluded_count = excluded;
  s.seed = seed;
  return s;
}

EvalReport miou_eval(Segmenter& model, const std::vector<data::Sample>& dataset,
                     const MiouOptions& options) {
  if (options.clicks_per_mask < 1) throw ValidationError("miou_eval needs at least one click");
  EvalReport report;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const data::Sample s = at_size(dataset[i], model.input_size());
    const std::vector<BinaryMask> masks = eval_masks(s, options.merge_tau);
    Rng rng(options.seed + static_cast<std::uint64_t>(i));
    for (std::size_t m = 0; m < masks.size(); ++m) {
      PromptSet prompts{data::sample_training_clicks(masks[m], options.clicks_per_mask, rng),
                        std::nullopt};
      const SegmentationOutput out = model.segment(s.image, prompts);
      EvalRecord r;
      r.sample_id = s.source_id;
      r.mask_index = static_cast<int>(m);
      r.clicks_used = options.clicks_per_mask;
      r.iou = mask_iou(select_best_mask(out).first, masks[m]);
      r.size_bucket = size_bucket(masks[m].area());
      report.records.push_back(std::move(r));
    }
  }
  report.summary = summarize(report.records, 0, options.seed);
  return report;
}

std::vector<BinaryMask> substitute_fine_masks(const std::vector<BinaryMask>& coarse,
                                              const std::vector<BinaryMask>& fine,
                                              std::vector<bool>* substituted) {
  std::vector<BinaryMask> out = coarse;
  if (substituted) substituted->assign(coarse.size(), false);
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    double best = -1.0;
    int best_j = -1;
    for (std::size_t j = 0; j < fine.size(); ++j) {
      const double v = mask_iou(coarse[i], fine[j]);
      if (v > best) {
        best = v;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j >= 0 && best > kSubstitutionIou) {
      out[i] = fine[static_cast<std::size_t>(best_j)];
      if (substituted) (*substituted)[i] = true;
    }
  }
  return out;
}

SaliencyDecision saliency_decision(const std::vector<BinaryMask>& coarse,
                                   const std::vector<BinaryMask>& fine,
                                   const saliency::Heatmap& heatmap,
                                   saliency::ClickStrategy strategy) {
  SaliencyDecision d;
  d.candidates = substitute_fine_masks(coarse, fine, &d.substituted);
  saliency::AutoClicks autos;
  try {
    autos = saliency::synthesize_clicks(heatmap, strategy);
  } catch (const saliency::NoSalientRegion&) {
    d.status = SaliencyStatus::kNoBlob;
    return d;
  }
  d.points = autos.points;
  if (d.candidates.empty()) {
    d.status = SaliencyStatus::kNoMasks;
    return d;
  }
  for (std::size_t i = 0; i < d.candidates.size(); ++i) {
    const double v = mask_iou(d.candidates[i], autos.saliency_mask);
    if (d.chosen < 0 || v > d.chosen_iou) {
      d.chosen = static_cast<int>(i);
      d.chosen_iou = v;
    }
  }
  const BinaryMask& chosen = d.candidates[static_cast<std::size_t>(d.chosen)];
  for (const saliency::Point& p : d.points) d.points_inside += chosen.contains(p.y, p.x);
  d.status = d.points_inside >= kMinPointsInside ? SaliencyStatus::kIncluded
                                                 : SaliencyStatus::kAmbiguous;
  return d;
}

SaliencyEvalReport saliency_eval(Segmenter& model, const std::vector<data::Sample>& dataset,
                                 const SaliencyEvalOptions& options) {
  if (options.clicks != 1 && options.clicks != 3) {
    throw ValidationError("saliency_eval uses 1 or 3 clicks");
  }
  SaliencyEvalReport rep;
  for (const data::Sample& raw : dataset) {
    const data::Sample s = at_size(raw, model.input_size());
    const saliency::Heatmap heatmap = s.heatmap ? *s.heatmap : saliency::baseline_saliency(s.image);
    std::vector<BinaryMask> fine;
    if (options.use_fine_masks) {
      for (const data::RleMask& r : s.fine_masks) fine.push_back(r.decode());
    }
    const SaliencyDecision d = saliency_decision(s.decoded_masks(), fine, heatmap, options.strategy);
    if (d.status == SaliencyStatus::kAmbiguous) {
      // Kept in the record stream for inspection; summaries skip it.
      EvalRecord r;
      r.sample_id = s.source_id;
      r.mask_index = d.chosen;
      r.clicks_used = options.clicks;
      r.size_bucket = size_bucket(d.candidates[static_cast<std::size_t>(d.chosen)].area());
      r.ambiguous = true;
      rep.eval.records.push_back(std::move(r));
      ++rep.ambiguous;
      continue;
    }
    if (d.status != SaliencyStatus::kIncluded) {
      ++rep.no_blob;
      continue;
    }
    PromptSet prompts;
    for (int c = 0; c < options.clicks; ++c) {
      prompts.clicks.push_back({d.points[static_cast<std::size_t>(c)].x,
                                d.points[static_cast<std::size_t>(c)].y, Polarity::kForeground});
    }
    const BinaryMask& gt = d.candidates[static_cast<std::size_t>(d.chosen)];
    EvalRecord r;
    r.sample_id = s.source_id;
    r.mask_index = d.chosen;
    r.clicks_used = options.clicks;
    r.iou = mask_iou(select_best_mask(model.segment(s.image, prompts)).first, gt);
    r.size_bucket = size_bucket(gt.area());
    rep.eval.records.push_back(std::move(r));
  }
  rep.eval.summary = summarize(rep.eval.records, rep.ambiguous + rep.no_blob, 0);
  return rep;
}

ProbeResult whole_object_probe(Segmenter& model, const std::vector<data::SyntheticScene>& scenes) {
  ProbeResult r;
  for (const data::SyntheticScene& scene : scenes) {
    if (scene.objects.empty() || scene.objects[0].parts.empty()) continue;
    const data::Sample s = at_size(scene.sample, model.input_size());
    const std::vector<BinaryMask> masks = s.decoded_masks();
    const BinaryMask& part = masks[static_cast<std::size_t>(scene.objects[0].parts[0])];
    const BinaryMask& composite = masks[static_cast<std::size_t>(scene.objects[0].composite)];
    if (part.empty_mask()) continue;
    saliency::Blob blob;
    double sx = 0, sy = 0;
    for (int y = 0; y < part.height; ++y) {
      for (int x = 0; x < part.width; ++x) {
        if (!part.at(y, x)) continue;
        blob.pixels.push_back({x, y});
        sx += x;
        sy += y;
      }
    }
    const double n = static_cast<double>(blob.pixels.size());
    const saliency::Point click = saliency::nearest_blob_pixel(blob, sx / n, sy / n);
    const PromptSet prompts{{{click.x, click.y, Polarity::kForeground}}, std::nullopt};
    const BinaryMask pred = select_best_mask(model.segment(s.image, prompts)).first;
    ++r.scenes;
    if (mask_iou(pred, composite) > mask_iou(pred, part)) ++r.preferring_composite;
  }
  r.fraction = r.scenes > 0 ? static_cast<double>(r.preferring_composite) / r.scenes : 0.0;
  return r;
}

namespace {

nlohmann::ordered_json number_or_null(double v) {
  return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v);
}

}  // namespace

std::string summary_json(const EvalSummary& s) {
  nlohmann::ordered_json j;
  j["overall"] = number_or_null(s.overall);
  j["small"] = number_or_null(s.small);
  j["medium"] = number_or_null(s.medium);
  j["large"] = number_or_null(s.large);
  j["count"] = s.count;
  j["excluded_count"] = s.excluded_count;
  j["seed"] = s.seed;
  return j.dump(2);
}

void write_report(const std::filesystem::path& summary_path, const EvalReport& report) {
  std::ofstream summary(summary_path);
  summary << summary_json(report.summary) << "\n";
  if (!summary) throw std::runtime_error("cannot write " + summary_path.string());
  std::filesystem::path records_path = summary_path;
  records_path.replace_extension(".jsonl");
  std::ofstream lines(records_path);
  for (const EvalRecord& r : report.records) {
    nlohmann::ordered_json j;
    j["sample_id"] = r.sample_id;
    j["mask_index"] = r.mask_index;
    j["clicks_used"] = r.clicks_used;
    j["iou"] = r.iou;
    j["size_bucket"] = bucket_name(r.size_bucket);
    j["ambiguous"] = r.ambiguous;
    lines << j.dump() << "\n";
  }
  if (!lines) throw std::runtime_error("cannot write " + records_path.string());
}

}  // namespace sqsm::train
