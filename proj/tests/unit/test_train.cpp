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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>

#include "sqsm/gradcheck.hpp"
#include "sqsm/train.hpp"

namespace sqsm::train {
namespace {

BinaryMask square(int size, int x0, int y0, int side) {
  BinaryMask m(size, size);
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x) m.at(y, x) = 1;
  return m;
}

// Logits [N, k, H, W] filled plane by plane.
template <typename T>
BasicTensor<T> planes(const std::vector<std::vector<T>>& per_plane, std::int64_t n, std::int64_t k,
                      int h, int w) {
  BasicTensor<T> t({n, k, h, w});
  for (std::size_t p = 0; p < per_plane.size(); ++p)
    for (std::size_t j = 0; j < per_plane[p].size(); ++j)
      t[static_cast<std::int64_t>(p * per_plane[p].size() + j)] = per_plane[p][j];
  return t;
}

std::vector<float> perfect_logits(const BinaryMask& gt, float mag) {
  std::vector<float> z(gt.data.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = gt.data[i] ? mag : -mag;
  return z;
}

TEST(SegmentationLoss, PerfectHeadIsChosenAndNearZero) {
  const BinaryMask gt = square(8, 2, 2, 4);
  Tape<float> tape(false);
  auto logits = tape.constant(planes<float>({std::vector<float>(64, 0.0f), perfect_logits(gt, 20.0f)}, 1, 2, 8, 8));
  auto iou = tape.constant(Tensor({1, 2}, 0.0f));
  const LossResult<float> r = segmentation_loss(logits, iou, {gt});
  ASSERT_EQ(r.per_sample.size(), 1u);
  EXPECT_EQ(r.per_sample[0].chosen_mask_index, 1);
  EXPECT_LT(r.per_sample[0].focal, 1e-9);
  EXPECT_LT(r.per_sample[0].dice, 1e-6);
  // Targets: head 0 predicts nothing (IoU 0), head 1 is exact (IoU 1).
  EXPECT_DOUBLE_EQ(r.targets.actual_iou[0][0], 0.0);
  EXPECT_DOUBLE_EQ(r.targets.actual_iou[0][1], 1.0);
  EXPECT_NEAR(r.per_sample[0].iou_mse, 1.0, 1e-12);
}

TEST(SegmentationLoss, ZeroLogitsMatchClosedForm) {
  const BinaryMask gt = square(8, 0, 0, 4);  // G = 16 of n = 64
  const std::vector<float> z(64, 0.0f);
  const double n = 64, g = 16, alpha = 0.25;
  // p = 1/2 everywhere: each focal term is weight * (1/2)^2 * ln 2.
  const double focal = (g * alpha + (n - g) * (1 - alpha)) * 0.25 * std::log(2.0) / n;
  const double dice = 1.0 - (2.0 * 0.5 * g + 1.0) / (0.5 * n + g + 1.0);
  EXPECT_NEAR(focal_loss_mean(z.data(), gt, 2.0, alpha), focal, 1e-12);
  EXPECT_NEAR(dice_loss(z.data(), gt, 1.0), dice, 1e-12);

  Tape<float> tape(false);
  auto logits = tape.constant(planes<float>({z}, 1, 1, 8, 8));
  auto iou = tape.constant(Tensor({1, 1}, 0.5f));
  const LossResult<float> r = segmentation_loss(logits, iou, {gt});
  // z > 0 is empty, so the IoU target is 0.
  EXPECT_NEAR(r.per_sample[0].iou_mse, 0.25, 1e-12);
  EXPECT_NEAR(r.total.value()[0], 20.0 * focal + dice + 0.25, 1e-5);
}

TEST(SegmentationLoss, DuplicatedHeadsTieToLowestIndex) {
  const BinaryMask gt = square(8, 1, 1, 5);
  Rng rng(3);
  std::vector<float> a(64), b(64);
  for (auto& v : a) v = static_cast<float>(rng.normal());
  for (auto& v : b) v = static_cast<float>(rng.normal());
  Tape<float> tape(false);
  auto iou = tape.constant(Tensor({1, 4}, 0.0f));
  const auto r1 = segmentation_loss(tape.constant(planes<float>({a, b, a, b}, 1, 4, 8, 8)), iou, {gt});
  const auto r2 = segmentation_loss(tape.constant(planes<float>({b, a, b, a}, 1, 4, 8, 8)), iou, {gt});
  const bool a_wins = r1.per_sample[0].chosen_mask_index == 0;
  EXPECT_EQ(r1.per_sample[0].chosen_mask_index, a_wins ? 0 : 1);
  EXPECT_EQ(r2.per_sample[0].chosen_mask_index, a_wins ? 1 : 0);
  EXPECT_DOUBLE_EQ(r1.per_sample[0].total - r1.per_sample[0].iou_mse,
                   r2.per_sample[0].total - r2.per_sample[0].iou_mse);
}

TEST(SegmentationLoss, RejectsMismatchedInputs) {
  Tape<float> tape(false);
  auto logits = tape.constant(Tensor({1, 2, 4, 4}));
  EXPECT_THROW(segmentation_loss(logits, tape.constant(Tensor({1, 3})), {square(4, 0, 0, 2)}),
               ShapeError);
  EXPECT_THROW(segmentation_loss(logits, tape.constant(Tensor({1, 2})), {square(5, 0, 0, 2)}),
               ShapeError);
  EXPECT_THROW(segmentation_loss(logits, tape.constant(Tensor({1, 2})), {BinaryMask(4, 4)}),
               ValidationError);
}

TEST(SegmentationLoss, GradCheckWithFrozenTargets) {
  Rng rng(11);
  const std::vector<BinaryMask> gt = {square(6, 1, 1, 3), square(6, 2, 0, 4)};
  TensorD z0({2, 3, 6, 6}), q0({2, 3});
  for (auto& v : z0.data()) v = 2.0 * rng.normal();
  for (auto& v : q0.data()) v = rng.uniform();
  LossTargets frozen;
  {
    Tape<double> t(false);
    frozen = segmentation_loss(t.constant(z0), t.constant(q0), gt).targets;
  }
  const GradCheckResult r = grad_check(
      [&](Tape<double>& t, const std::vector<Var<double>>& in) {
        return segmentation_loss(in[0], in[1], gt, LossWeights{}, &frozen).total;
      },
      {z0, q0});
  EXPECT_LT(r.max_relative_error, 1e-6) << r.worst_entry;
}

TEST(SegmentationLoss, EndToEndMicroModelGradCheck) {
  SqueezeSam<double> model(ModelConfig::micro(), 5);
  const int s = model.config().input_size;
  Rng rng(21);
  Image img(s, s);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  const std::vector<PromptSet> prompts = {
      {{{4, 5, Polarity::kForeground}, {9, 9, Polarity::kBackground}}, std::nullopt},
      {{{12, 3, Polarity::kForeground}}, Box{8, 0, 15, 7}}};
  const std::vector<BinaryMask> gt = {square(s, 2, 2, 6), square(s, 9, 1, 6)};
  TensorD encoded({2, 5, s, s});
  for (int b = 0; b < 2; ++b) {
    const TensorD e = encode_prompts_early<double>(img, prompts[b], model.config().click_radius());
    std::copy(e.data().begin(), e.data().end(), encoded.ptr() + b * 5 * s * s);
  }
  LossTargets frozen;
  {
    Tape<double> t(false);
    auto out = model.forward(t, t.constant(encoded), prompts, ops::Mode::kTrain);
    frozen = segmentation_loss(out.logits, out.iou, gt).targets;
  }
  nn::StateList<double> state = model.state();
  GradCheckOptions opts;
  opts.max_entries = 100;
  opts.seed = 4;
  const GradCheckResult r = grad_check(
      [&](Tape<double>& t) {
        auto out = model.forward(t, t.constant(encoded), prompts, ops::Mode::kTrain);
        return segmentation_loss(out.logits, out.iou, gt, LossWeights{}, &frozen).total;
      },
      state.params, opts);
  EXPECT_EQ(r.entries_checked, 100u);
  EXPECT_LT(r.max_relative_error, 1e-3) << r.worst_entry;
}

TEST(Optimiser, LinearDecaySchedule) {
  EXPECT_DOUBLE_EQ(linear_decay_lr(5e-4, 0, 2000), 5e-4);
  EXPECT_DOUBLE_EQ(linear_decay_lr(5e-4, 1000, 2000), 2.5e-4);
  EXPECT_DOUBLE_EQ(linear_decay_lr(5e-4, 2000, 2000), 0.0);
  EXPECT_DOUBLE_EQ(linear_decay_lr(5e-4, 3000, 2000), 0.0);
}

TEST(Optimiser, AdamMatchesReferenceRecurrence) {
  Parameter<float> p("w", Tensor({3}, 0.0f));
  p.value[0] = 1.0f;
  p.value[1] = -2.0f;
  Adam opt({&p});
  const std::vector<std::vector<float>> grads = {{0.5f, -1.0f, 0.0f}, {0.1f, 2.0f, 0.0f}, {-0.3f, 0.0f, 0.0f}};
  double w[3] = {1.0, -2.0, 0.0}, m[3] = {0, 0, 0}, v[3] = {0, 0, 0};
  for (std::size_t t = 0; t < grads.size(); ++t) {
    p.grad = Tensor({3});
    for (int i = 0; i < 3; ++i) p.grad[i] = grads[t][static_cast<std::size_t>(i)];
    opt.step(1e-2);
    for (int i = 0; i < 3; ++i) {
      const double g = grads[t][static_cast<std::size_t>(i)];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t + 1.0));
      const double vh = v[i] / (1 - std::pow(0.999, t + 1.0));
      w[i] -= 1e-2 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(p.value[i], w[i], 1e-6) << "step " << t << " entry " << i;
    }
  }
  EXPECT_EQ(opt.steps(), 3);
}

std::vector<data::Sample> scenes_as_samples(const std::vector<data::SyntheticScene>& scenes) {
  std::vector<data::Sample> out;
  for (const auto& s : scenes) out.push_back(s.sample);
  return out;
}

data::SceneSpec small_spec() {
  data::SceneSpec spec;
  spec.size = 32;
  spec.max_objects = 2;
  return spec;
}

TEST(Training, SampleBatchIsSeededAndWellFormed) {
  const auto dataset = scenes_as_samples(data::generate_synthetic_set(7, 6, small_spec()));
  TrainConfig cfg;
  const auto survivors = training_masks(dataset, cfg);
  int outliers = 0;
  for (int step = 0; step < 20; ++step) {
    const Batch a = sample_batch(dataset, survivors, step, cfg, 16);
    const Batch b = sample_batch(dataset, survivors, step, cfg, 16);
    ASSERT_EQ(a.targets.size(), 8u);
    ASSERT_EQ(a.images.size(), 8u);
    EXPECT_EQ(a.images, b.images);
    EXPECT_EQ(a.prompts, b.prompts);
    EXPECT_EQ(a.images[0].height, 16);
    EXPECT_EQ(a.source_ids.size(), 1u);
    for (std::size_t i = 0; i < a.targets.size(); ++i) {
      EXPECT_FALSE(a.targets[i].empty_mask());
      const auto& clicks = a.prompts[i].clicks;
      ASSERT_GE(clicks.size(), 1u);
      ASSERT_LE(clicks.size(), 4u);
      // Every click lies on the target except an injected outlier, which can
      // only be the last one and must miss every mask.
      for (std::size_t c = 0; c + 1 < clicks.size(); ++c) {
        EXPECT_TRUE(a.targets[i].contains(clicks[c].y, clicks[c].x));
      }
      const Click& tail = clicks.back();
      if (!a.targets[i].contains(tail.y, tail.x)) {
        ++outliers;
        for (const BinaryMask& t : a.targets) EXPECT_FALSE(t.contains(tail.y, tail.x));
      }
    }
  }
  // 160 entries at outlier_prob 0.1.
  EXPECT_GT(outliers, 3);
  EXPECT_LT(outliers, 35);
}

TEST(Training, ToyBatchesHoldOneMaskPerImage) {
  const auto dataset = scenes_as_samples(data::generate_synthetic_set(7, 6, small_spec()));
  const TrainConfig cfg = toy_train_config(7, true);
  EXPECT_EQ(cfg.steps, 2000);
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_TRUE(cfg.merge_masks);
  EXPECT_FALSE(toy_train_config(7, false, 10).merge_masks);
  const Batch b = sample_batch(dataset, training_masks(dataset, cfg), 3, cfg, 16);
  EXPECT_EQ(b.source_ids.size(), 8u);
  EXPECT_EQ(b.targets.size(), b.source_ids.size());
  EXPECT_EQ(b.images.size(), b.source_ids.size());
}

TEST(Training, MergingKeepsOnlyCompositesAsTargets) {
  const auto scenes = data::generate_synthetic_set(9, 10, small_spec());
  const auto dataset = scenes_as_samples(scenes);
  TrainConfig cfg;
  const auto merged = training_masks(dataset, cfg);
  cfg.merge_masks = false;
  const auto all = training_masks(dataset, cfg);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    std::vector<std::size_t> composites;
    for (const auto& o : scenes[i].objects) composites.push_back(static_cast<std::size_t>(o.composite));
    std::sort(composites.begin(), composites.end());
    EXPECT_EQ(merged[i], composites);
    EXPECT_EQ(all[i].size(), dataset[i].masks.size());
  }
}

TrainConfig micro_train_config(int steps) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.lr = 2e-3;
  cfg.seed = 17;
  return cfg;
}

TEST(Training, FiftyStepsLowerTheLoss) {
  const auto dataset = scenes_as_samples(data::generate_synthetic_set(1, 10, small_spec()));
  SqueezeSam<float> model(ModelConfig::micro(), 3);
  const TrainResult r = train_loop(model, dataset, micro_train_config(50));
  ASSERT_EQ(r.log.size(), 50u);
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) {
    first += r.log[static_cast<std::size_t>(i)].loss;
    last += r.log[r.log.size() - 1 - static_cast<std::size_t>(i)].loss;
  }
  EXPECT_LT(last, first);
  for (const StepLog& l : r.log) EXPECT_TRUE(std::isfinite(l.loss));
}

TEST(Training, SeededRunsGiveIdenticalWeights) {
  const auto dataset = scenes_as_samples(data::generate_synthetic_set(2, 4, small_spec()));
  SqueezeSam<float> a(ModelConfig::micro(), 8), b(ModelConfig::micro(), 8);
  train_loop(a, dataset, micro_train_config(5));
  train_loop(b, dataset, micro_train_config(5));
  const auto sa = a.state(), sb = b.state();
  ASSERT_EQ(sa.params.size(), sb.params.size());
  for (std::size_t i = 0; i < sa.params.size(); ++i) EXPECT_EQ(sa.params[i]->value, sb.params[i]->value);
  for (std::size_t i = 0; i < sa.buffers.size(); ++i) EXPECT_EQ(*sa.buffers[i].tensor, *sb.buffers[i].tensor);
}

TEST(Training, InvalidConfigIsRejected) {
  const auto dataset = scenes_as_samples(data::generate_synthetic_set(2, 2, small_spec()));
  SqueezeSam<float> model(ModelConfig::micro(), 1);
  TrainConfig cfg = micro_train_config(1);
  cfg.max_clicks = 0;
  EXPECT_THROW(train_loop(model, dataset, cfg), ValidationError);
  EXPECT_THROW(train_loop(model, {}, micro_train_config(1)), ValidationError);
}

// Returns a fixed mask regardless of the prompt.
class ConstantSegmenter final : public Segmenter {
 public:
  ConstantSegmenter(int size, BinaryMask m) : size_(size), mask_(std::move(m)) {}
  int input_size() const override { return size_; }
  SegmentationOutput segment(const Image&, const PromptSet&) override {
    return output_from_masks({mask_}, {1.0f});
  }

 private:
  int size_;
  BinaryMask mask_;
};

TEST(MiouEval, OracleScoresOneAndEmptyScoresZero) {
  const auto dataset = scenes_as_samples(data::generate_synthetic_set(4, 12, small_spec()));
  MiouOptions opts;
  opts.merge_tau = 0.9;
  OracleSegmenter oracle(dataset, 32, opts.merge_tau);
  const EvalReport good = miou_eval(oracle, dataset, opts);
  EXPECT_GT(good.summary.count, 12);
  EXPECT_DOUBLE_EQ(good.summary.overall, 1.0);

  ConstantSegmenter empty(32, BinaryMask(32, 32));
  const EvalReport bad = miou_eval(empty, dataset, opts);
  EXPECT_EQ(bad.summary.count, good.summary.count);
  EXPECT_DOUBLE_EQ(bad.summary.overall, 0.0);
}

TEST(MiouEval, CrossAgainstSquareIsFiveNinths) {
  // A 3x3 square scored against a plus of five of its pixels.
  BinaryMask sq = square(8, 2, 2, 3), plus(8, 8);
  for (auto [y, x] : std::vector<std::pair<int, int>>{{3, 3}, {2, 3}, {4, 3}, {3, 2}, {3, 4}}) plus.at(y, x) = 1;
  data::Sample s;
  s.image = Image(8, 8, 50);
  s.source_id = "x";
  s.masks = {data::RleMask::encode(sq)};
  ConstantSegmenter model(8, plus);
  const EvalReport r = miou_eval(model, {s}, {});
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_DOUBLE_EQ(r.records[0].iou, 5.0 / 9.0);
  EXPECT_EQ(r.records[0].clicks_used, 3);
}

TEST(MiouEval, SizeBucketsFollowCocoAreas) {
  EXPECT_EQ(size_bucket(1023), SizeBucket::kSmall);
  EXPECT_EQ(size_bucket(1024), SizeBucket::kMedium);
  EXPECT_EQ(size_bucket(9216), SizeBucket::kMedium);
  EXPECT_EQ(size_bucket(9217), SizeBucket::kLarge);
}

TEST(MiouEval, OverallIsCountWeightedMeanOfBuckets) {
  Rng rng(5);
  std::vector<EvalRecord> recs;
  for (int i = 0; i < 300; ++i) {
    EvalRecord r;
    r.iou = rng.uniform();
    r.size_bucket = static_cast<SizeBucket>(rng.below(3));
    r.ambiguous = rng.bernoulli(0.1);
    recs.push_back(r);
  }
  const EvalSummary s = summarize(recs, 7, 99);
  double total = 0;
  std::int64_t n = 0, per[3] = {0, 0, 0};
  for (const auto& r : recs) {
    if (r.ambiguous) continue;
    total += r.iou;
    ++n;
    ++per[static_cast<int>(r.size_bucket)];
  }
  EXPECT_EQ(s.count, n);
  EXPECT_NEAR(s.overall, total / n, 1e-12);
  EXPECT_NEAR(s.overall, (per[0] * s.small + per[1] * s.medium + per[2] * s.large) / n, 1e-12);
  EXPECT_EQ(s.excluded_count, 7);
  EXPECT_EQ(s.seed, 99u);
  EXPECT_TRUE(std::isnan(summarize({}, 0, 0).overall));
}

// Fine mask made of the first `keep` pixels (raster order) of `coarse`.
BinaryMask prefix_of(const BinaryMask& coarse, int keep) {
  BinaryMask m(coarse.height, coarse.width);
  for (std::size_t i = 0; i < m.data.size() && keep > 0; ++i) {
    if (coarse.data[i]) {
      m.data[i] = 1;
      --keep;
    }
  }
  return m;
}

TEST(SaliencyProtocol, SubstitutionBoundaryIsStrictEightyPercent) {
  const BinaryMask coarse = square(20, 5, 5, 10);  // area 100
  for (auto [keep, expect] : std::vector<std::pair<int, bool>>{{79, false}, {80, false}, {81, true}}) {
    std::vector<bool> sub;
    const BinaryMask fine = prefix_of(coarse, keep);
    const auto out = substitute_fine_masks({coarse}, {fine}, &sub);
    EXPECT_EQ(sub[0], expect) << keep;
    EXPECT_EQ(out[0], expect ? fine : coarse) << keep;
  }
}

TEST(SaliencyProtocol, SubstitutionPicksBestFineMask) {
  const BinaryMask coarse = square(20, 5, 5, 10);
  const BinaryMask f85 = prefix_of(coarse, 85), f95 = prefix_of(coarse, 95);
  const auto out = substitute_fine_masks({coarse, square(20, 0, 0, 2)}, {f85, f95});
  EXPECT_EQ(out[0], f95);
  EXPECT_EQ(out[1], square(20, 0, 0, 2));
}

saliency::Heatmap square_heatmap(int size, int x0, int y0, int side) {
  saliency::Heatmap h(size, size, 0.05f);
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x) h.at(y, x) = 0.9f;
  return h;
}

TEST(SaliencyProtocol, FourOfFivePointsBoundary) {
  const saliency::Heatmap heat = square_heatmap(24, 6, 6, 10);
  const auto autos = saliency::synthesize_clicks(heat);
  const BinaryMask blob = square(24, 6, 6, 10);
  for (const auto& p : autos.points) ASSERT_TRUE(blob.contains(p.y, p.x));
  // Remove `drop` of the five points (and nothing else) from the candidate.
  for (int drop = 0; drop <= 2; ++drop) {
    BinaryMask cand = blob;
    for (int i = 0; i < drop; ++i) {
      const auto& p = autos.points[static_cast<std::size_t>(i + 1)];
      cand.at(p.y, p.x) = 0;
    }
    const SaliencyDecision d = saliency_decision({cand}, {}, heat);
    EXPECT_EQ(d.points_inside, 5 - drop);
    EXPECT_EQ(d.status, drop <= 1 ? SaliencyStatus::kIncluded : SaliencyStatus::kAmbiguous) << drop;
  }
}

TEST(SaliencyProtocol, ChoosesMaskClosestToSaliencyAndReportsMissingBlob) {
  const saliency::Heatmap heat = square_heatmap(24, 6, 6, 10);
  const BinaryMask other = square(24, 0, 0, 4), near = square(24, 6, 6, 9);
  const SaliencyDecision d = saliency_decision({other, near}, {}, heat);
  EXPECT_EQ(d.chosen, 1);
  EXPECT_DOUBLE_EQ(d.chosen_iou, 81.0 / 100.0);
  EXPECT_EQ(saliency_decision({near}, {}, saliency::Heatmap(24, 24, 0.3f)).status,
            SaliencyStatus::kNoBlob);
  EXPECT_EQ(saliency_decision({}, {}, heat).status, SaliencyStatus::kNoMasks);
}

TEST(SaliencyProtocol, EvalCountsExclusions) {
  data::Sample inc, amb, flat;
  inc.image = amb.image = flat.image = Image(24, 24, 10);
  inc.source_id = "inc";
  amb.source_id = "amb";
  flat.source_id = "flat";
  inc.heatmap = square_heatmap(24, 6, 6, 10);
  amb.heatmap = square_heatmap(24, 6, 6, 10);
  flat.heatmap = saliency::Heatmap(24, 24, 0.2f);
  inc.masks = {data::RleMask::encode(square(24, 6, 6, 10))};
  amb.masks = {data::RleMask::encode(square(24, 6, 6, 3))};  // holds the top-left point only
  flat.masks = inc.masks;
  ConstantSegmenter model(24, square(24, 6, 6, 10));
  const SaliencyEvalReport r = saliency_eval(model, {inc, amb, flat}, {});
  EXPECT_EQ(r.ambiguous, 1);
  EXPECT_EQ(r.no_blob, 1);
  EXPECT_EQ(r.eval.summary.count, 1);
  EXPECT_EQ(r.eval.summary.excluded_count, 2);
  EXPECT_DOUBLE_EQ(r.eval.summary.overall, 1.0);
  SaliencyEvalOptions bad;
  bad.clicks = 2;
  EXPECT_THROW(saliency_eval(model, {inc}, bad), ValidationError);
}

// Lets a test pick which annotated mask of the first object is returned.
class ObjectSegmenter final : public Segmenter {
 public:
  ObjectSegmenter(const std::vector<data::SyntheticScene>& scenes, bool composite) {
    for (const auto& s : scenes) {
      const auto masks = s.sample.decoded_masks();
      const auto& o = s.objects[0];
      by_image_[s.sample.image.data] = masks[static_cast<std::size_t>(composite ? o.composite : o.parts[0])];
    }
    size_ = scenes[0].sample.image.height;
  }
  int input_size() const override { return size_; }
  SegmentationOutput segment(const Image& image, const PromptSet&) override {
    return output_from_masks({by_image_.at(image.data)}, {1.0f});
  }

 private:
  int size_ = 0;
  std::map<std::vector<std::uint8_t>, BinaryMask> by_image_;
};

TEST(WholeObjectProbe, OracleDoublesScoreOneAndZero) {
  const auto scenes = data::generate_synthetic_set(30, 20, small_spec());
  ObjectSegmenter whole(scenes, true), part(scenes, false);
  const ProbeResult a = whole_object_probe(whole, scenes);
  const ProbeResult b = whole_object_probe(part, scenes);
  EXPECT_EQ(a.scenes, 20);
  EXPECT_DOUBLE_EQ(a.fraction, 1.0);
  EXPECT_EQ(b.preferring_composite, 0);
  EXPECT_DOUBLE_EQ(b.fraction, 0.0);
}

TEST(Reports, SummaryAndRecordsAreWritten) {
  EvalReport rep;
  EvalRecord r;
  r.sample_id = "a";
  r.iou = 0.5;
  rep.records = {r};
  rep.summary = summarize(rep.records, 0, 3);
  const auto path = std::filesystem::temp_directory_path() / "sqsm_report_test.json";
  write_report(path, rep);
  const auto j = nlohmann::json::parse(std::ifstream(path));
  EXPECT_DOUBLE_EQ(j["overall"].get<double>(), 0.5);
  EXPECT_TRUE(j["large"].is_null());
  std::ifstream lines(std::filesystem::path(path).replace_extension(".jsonl"));
  std::string line;
  ASSERT_TRUE(std::getline(lines, line));
  EXPECT_EQ(nlohmann::json::parse(line)["size_bucket"], "small");
}

}  // namespace
}  // namespace sqsm::train
