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
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sqsm/data.hpp"
#include "sqsm/model.hpp"

namespace sqsm::train {

// ---------------------------------------------------------------------------
// Loss

struct LossWeights {
  double focal = 20.0;
  double dice = 1.0;
  double iou = 1.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double dice_smooth = 1.0;
};

struct LossBreakdown {
  double focal = 0.0;  // of the chosen mask, mean over pixels
  double dice = 0.0;   // of the chosen mask
  double iou_mse = 0.0;
  double total = 0.0;
  int chosen_mask_index = 0;
};

/// Per-sample quantities a loss evaluation would otherwise derive from the
/// logits: the chosen head and the IoU targets. Freezing them makes the loss
/// smooth in the weights, which finite-difference checks need.
struct LossTargets {
  std::vector<int> chosen;
  std::vector<std::vector<double>> actual_iou;
};

template <typename T>
struct LossResult {
  Var<T> total;  // mean over the batch of per-sample totals
  std::vector<LossBreakdown> per_sample;
  LossTargets targets;
};

/// Per mask i: focal_w * focal(z_i, g) + dice_w * dice(z_i, g). The chosen mask
/// is the argmin (lowest index on ties). iou_mse sums (iou_i - IoU(z_i > 0, g))^2
/// over all k heads. Per-sample total = chosen mask loss + iou_w * iou_mse.
/// logits [N, k, H, W], iou [N, k]; gt masks must be H x W and nonempty.
template <typename T>
LossResult<T> segmentation_loss(Var<T> logits, Var<T> iou, const std::vector<BinaryMask>& gt,
                                const LossWeights& weights = {},
                                const LossTargets* frozen = nullptr);

/// Closed-form pieces, exposed for tests and reports.
double focal_loss_mean(const float* logits, const BinaryMask& gt, double gamma, double alpha);
double dice_loss(const float* logits, const BinaryMask& gt, double smooth);

// ---------------------------------------------------------------------------
// Optimisation

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Parameter<float>*> params, AdamConfig config = {});
  /// One update with learning rate `lr` from the accumulated gradients.
  void step(double lr);
  void zero_grad();
  std::int64_t steps() const { return t_; }

 private:
  std::vector<Parameter<float>*> params_;
  AdamConfig config_;
  std::vector<std::vector<float>> m_, v_;
  std::int64_t t_ = 0;
};

/// Linear decay from `base` at step 0 to 0 at step `total`.
double linear_decay_lr(double base, int step, int total);

struct TrainConfig {
  int steps = 2000;
  double lr = 5e-4;
  /// Images per step; each contributes masks_per_step (mask, clicks) entries.
  int images_per_step = 1;
  int masks_per_step = 8;
  int min_clicks = 1;
  int max_clicks = 3;
  bool merge_masks = true;
  data::AugmentConfig augment;
  LossWeights loss;
  AdamConfig adam;
  /// Fraction of the schedule after which batch norms stop using batch
  /// statistics and train against their running averages; 1 never freezes.
  double bn_freeze_fraction = 1.0;
  std::uint64_t seed = 0;
  int log_every = 50;
};

struct StepLog {
  int step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double focal = 0.0;
  double dice = 0.0;
  double iou_mse = 0.0;
  int batch = 0;
};

struct TrainResult {
  std::vector<StepLog> log;  // one entry per step
  double seconds = 0.0;
};

/// One training batch of images_per_step * masks_per_step (image, mask,
/// clicks) entries, already resized to the model input.
struct Batch {
  std::vector<std::string> source_ids;  // one per image
  std::vector<Image> images;            // one per entry
  std::vector<BinaryMask> targets;
  std::vector<PromptSet> prompts;
};

/// Draws the batch for `step` from Rng(seed + step).
Batch sample_batch(const std::vector<data::Sample>& dataset,
                   const std::vector<std::vector<std::size_t>>& survivors, int step,
                   const TrainConfig& config, int input_size);

/// Indices of the masks each sample contributes to training (all masks, or the
/// merge survivors when merging is enabled).
std::vector<std::vector<std::size_t>> training_masks(const std::vector<data::Sample>& dataset,
                                                     const TrainConfig& config);

/// Seeds of the synthetic toy benchmark: training scenes and held-out scenes.
inline constexpr std::uint64_t kToyTrainSceneSeed = 1000;
inline constexpr std::uint64_t kToyTestSceneSeed = 900000;
inline constexpr int kToyTrainScenes = 500;
inline constexpr int kToyTestScenes = 100;

/// Recipe used to train the 64 px toy model.
TrainConfig toy_train_config(std::uint64_t seed, bool merge_masks, int steps = 2000);

/// Trains in place. Throws NumericError on a non-finite loss.
TrainResult train_loop(SqueezeSam<float>& model, const std::vector<data::Sample>& dataset,
                       const TrainConfig& config,
                       const std::function<void(const StepLog&)>& on_log = {});

// ---------------------------------------------------------------------------
// Evaluation

/// Anything that maps an image and prompts to candidate masks.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual int input_size() const = 0;
  virtual SegmentationOutput segment(const Image& image, const PromptSet& prompts) = 0;
};

class ModelSegmenter final : public Segmenter {
 public:
  explicit ModelSegmenter(SqueezeSam<float>& model) : model_(model) {}
  int input_size() const override { return model_.config().input_size; }
  SegmentationOutput segment(const Image& image, const PromptSet& prompts) override {
    return model_.predict(image, prompts);
  }

 private:
  SqueezeSam<float>& model_;
};

/// Output whose candidate i is masks[i] (logits +/-10) with the given scores.
SegmentationOutput output_from_masks(const std::vector<BinaryMask>& masks,
                                     const std::vector<float>& scores);

/// Test double: returns the smallest registered mask of the same image that
/// contains every foreground click (an empty mask when none does).
class OracleSegmenter final : public Segmenter {
 public:
  OracleSegmenter(const std::vector<data::Sample>& dataset, int input_size,
                  std::optional<double> merge_tau);
  int input_size() const override { return size_; }
  SegmentationOutput segment(const Image& image, const PromptSet& prompts) override;

 private:
  int size_;
  std::map<std::vector<std::uint8_t>, std::vector<BinaryMask>> by_image_;
};

enum class SizeBucket { kSmall, kMedium, kLarge };
const char* bucket_name(SizeBucket b);
/// COCO convention: small < 32^2 <= medium <= 96^2 < large.
SizeBucket size_bucket(std::int64_t area);

struct EvalRecord {
  std::string sample_id;
  int mask_index = 0;
  int clicks_used = 0;
  double iou = 0.0;
  SizeBucket size_bucket = SizeBucket::kSmall;
  bool ambiguous = false;
};

struct EvalSummary {
  double overall = std::nan("");
  double small = std::nan("");
  double medium = std::nan("");
  double large = std::nan("");
  std::int64_t count = 0;
  std::int64_t excluded_count = 0;
  std::uint64_t seed = 0;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  EvalSummary summary;
};

/// Mean IoU overall and per bucket over non-ambiguous records.
EvalSummary summarize(const std::vector<EvalRecord>& records, std::int64_t excluded,
                      std::uint64_t seed);

struct MiouOptions {
  int clicks_per_mask = 3;
  std::uint64_t seed = 0;
  /// Evaluate against merge survivors instead of every annotated mask.
  std::optional<double> merge_tau;
};

/// For every gt mask: clicks from Rng(seed + sample_index), best candidate, IoU.
EvalReport miou_eval(Segmenter& model, const std::vector<data::Sample>& dataset,
                     const MiouOptions& options);

enum class SaliencyStatus { kIncluded, kAmbiguous, kNoBlob, kNoMasks };

/// Outcome of the per-image saliency protocol, before any model runs.
struct SaliencyDecision {
  SaliencyStatus status = SaliencyStatus::kNoBlob;
  std::vector<BinaryMask> candidates;  // after fine-mask substitution
  std::vector<bool> substituted;
  int chosen = -1;
  double chosen_iou = 0.0;  // vs the binarised saliency map
  int points_inside = 0;
  std::array<saliency::Point, 5> points{};
};

/// IoU above which a fine mask replaces its coarse counterpart.
inline constexpr double kSubstitutionIou = 0.80;
/// Gravity points that must fall inside the chosen mask.
inline constexpr int kMinPointsInside = 4;

/// Replaces each coarse mask by the fine mask of highest IoU with it when that
/// IoU exceeds kSubstitutionIou.
std::vector<BinaryMask> substitute_fine_masks(const std::vector<BinaryMask>& coarse,
                                              const std::vector<BinaryMask>& fine,
                                              std::vector<bool>* substituted = nullptr);

SaliencyDecision saliency_decision(const std::vector<BinaryMask>& coarse,
                                   const std::vector<BinaryMask>& fine,
                                   const saliency::Heatmap& heatmap,
                                   saliency::ClickStrategy strategy =
                                       saliency::ClickStrategy::kCenterOfMass);

struct SaliencyEvalOptions {
  /// 1 uses the blob centroid; 3 adds the first two quadrant points.
  int clicks = 1;
  saliency::ClickStrategy strategy = saliency::ClickStrategy::kCenterOfMass;
  bool use_fine_masks = true;
};

struct SaliencyEvalReport {
  EvalReport eval;
  std::int64_t ambiguous = 0;
  std::int64_t no_blob = 0;
};

/// Heatmaps come from the sample when present, otherwise baseline_saliency.
SaliencyEvalReport saliency_eval(Segmenter& model, const std::vector<data::Sample>& dataset,
                                 const SaliencyEvalOptions& options);

struct ProbeResult {
  double fraction = 0.0;
  int preferring_composite = 0;
  int scenes = 0;
};

/// Clicks the part pixel nearest the part centroid (first part of the first
/// object) and counts scenes where IoU(prediction, composite) > IoU(prediction, part).
ProbeResult whole_object_probe(Segmenter& model, const std::vector<data::SyntheticScene>& scenes);

/// Summary JSON and one JSON line per record.
std::string summary_json(const EvalSummary& s);
void write_report(const std::filesystem::path& summary_path, const EvalReport& report);

}  // namespace sqsm::train
