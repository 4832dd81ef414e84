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
#include <chrono>
#include <cmath>
#include <sstream>

#include "sqsm/train.hpp"

namespace sqsm::train {

Adam::Adam(std::vector<Parameter<float>*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (Parameter<float>* p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p->numel()), 0.0f);
    v_.emplace_back(static_cast<std::size_t>(p->numel()), 0.0f);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const float step = static_cast<float>(lr / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  const float eps = static_cast<float>(config_.eps);
  const float fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter<float>& p = *params_[i];
    if (p.grad.shape() != p.value.shape()) continue;
    float* w = p.value.ptr();
    const float* g = p.grad.ptr();
    float* m = m_[i].data();
    float* v = v_[i].data();
    for (std::int64_t j = 0; j < p.numel(); ++j) {
      m[j] = fb1 * m[j] + (1.0f - fb1) * g[j];
      v[j] = fb2 * v[j] + (1.0f - fb2) * g[j] * g[j];
      w[j] -= step * m[j] / (std::sqrt(v[j] * inv_c2) + eps);
    }
  }
}

void Adam::zero_grad() {
  for (Parameter<float>* p : params_) p->zero_grad();
}

double linear_decay_lr(double base, int step, int total) {
  if (total <= 0) return 0.0;
  const double frac = std::clamp(static_cast<double>(step) / total, 0.0, 1.0);
  return base * (1.0 - frac);
}

std::vector<std::vector<std::size_t>> training_masks(const std::vector<data::Sample>& dataset,
                                                     const TrainConfig& config) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(dataset.size());
  for (const data::Sample& s : dataset) {
    const std::vector<BinaryMask> masks = s.decoded_masks();
    if (config.merge_masks) {
      out.push_back(data::merge_survivors(masks, config.augment.merge_containment_tau));
    } else {
      std::vector<std::size_t> all;
      for (std::size_t i = 0; i < masks.size(); ++i) {
        if (!masks[i].empty_mask()) all.push_back(i);
      }
      out.push_back(std::move(all));
    }
  }
  return out;
}

Batch sample_batch(const std::vector<data::Sample>& dataset,
                   const std::vector<std::vector<std::size_t>>& survivors, int step,
                   const TrainConfig& config, int input_size) {
  if (dataset.empty()) throw ValidationError("training dataset is empty");
  Rng rng(config.seed + static_cast<std::uint64_t>(step));
  Batch batch;
  for (int img = 0; img < config.images_per_step; ++img) {
    std::size_t idx = 0;
    bool found = false;
    for (int attempt = 0; attempt < 64 && !found; ++attempt) {
      idx = static_cast<std::size_t>(rng.below(dataset.size()));
      found = !survivors[idx].empty();
    }
    if (!found) throw ValidationError("could not draw a training image with masks");

    const data::Sample& src = dataset[idx];
    data::Sample reduced;
    reduced.image = src.image;
    reduced.source_id = src.source_id;
    for (std::size_t m : survivors[idx]) reduced.masks.push_back(src.masks[m]);
    const int target = static_cast<int>(rng.below(reduced.masks.size()));
    const data::CropResult crop =
        data::center_crop_around_object(reduced, target, rng, config.augment, input_size);
    const std::vector<BinaryMask> masks = crop.sample.decoded_masks();
    if (masks.empty()) {
      throw ValidationError("every mask of " + src.source_id + " vanished at the model input size");
    }

    batch.source_ids.push_back(src.source_id);
    // Masks are drawn uniformly with replacement so every step has a full batch.
    for (int e = 0; e < config.masks_per_step; ++e) {
      const BinaryMask& mask = masks[static_cast<std::size_t>(rng.below(masks.size()))];
      const int n = static_cast<int>(rng.range(config.min_clicks, config.max_clicks));
      std::vector<Click> clicks = data::sample_training_clicks(mask, n, rng);
      clicks = data::inject_outlier_click(std::move(clicks), masks, rng, config.augment.outlier_prob);
      batch.images.push_back(crop.sample.image);
      batch.targets.push_back(mask);
      batch.prompts.push_back(canonical_prompts(PromptSet{std::move(clicks), std::nullopt}));
    }
  }
  return batch;
}

TrainConfig toy_train_config(std::uint64_t seed, bool merge_masks, int steps) {
  TrainConfig c;
  c.steps = steps;
  c.seed = seed;
  c.merge_masks = merge_masks;
  c.lr = 2e-3;
  // One mask per image: batch statistics over masks of a single image would
  // carry information between entries that running statistics cannot.
  c.images_per_step = 8;
  c.masks_per_step = 1;
  return c;
}

TrainResult train_loop(SqueezeSam<float>& model, const std::vector<data::Sample>& dataset,
                       const TrainConfig& config,
                       const std::function<void(const StepLog&)>& on_log) {
  config.augment.validate();
  if (config.steps < 0 || config.images_per_step < 1 || config.masks_per_step < 1 ||
      config.min_clicks < 1 || config.max_clicks < config.min_clicks ||
      !(config.bn_freeze_fraction >= 0.0 && config.bn_freeze_fraction <= 1.0)) {
    throw ValidationError("invalid training configuration");
  }
  const auto start = std::chrono::steady_clock::now();
  const int size = model.config().input_size;
  const auto survivors = training_masks(dataset, config);
  nn::StateList<float> state = model.state();
  Adam opt(state.params, config.adam);
  opt.zero_grad();

  TrainResult result;
  const std::size_t plane = static_cast<std::size_t>(5) * size * size;
  const int freeze_at = static_cast<int>(std::ceil(config.bn_freeze_fraction * config.steps));
  for (int step = 0; step < config.steps; ++step) {
    const Batch batch = sample_batch(dataset, survivors, step, config, size);
    const auto n = static_cast<std::int64_t>(batch.targets.size());
    Tensor encoded({n, 5, size, size});
    for (std::int64_t b = 0; b < n; ++b) {
      const auto i = static_cast<std::size_t>(b);
      const Tensor e = encode_prompts_early<float>(batch.images[i], batch.prompts[i],
                                                   model.config().click_radius());
      std::copy(e.data().begin(), e.data().end(), encoded.ptr() + b * static_cast<std::int64_t>(plane));
    }
    Tape<float> tape;
    const ops::Mode mode = step < freeze_at ? ops::Mode::kTrain : ops::Mode::kInfer;
    auto out = model.forward(tape, tape.constant(std::move(encoded)), batch.prompts, mode);
    LossResult<float> loss = segmentation_loss(out.logits, out.iou, batch.targets, config.loss);

    StepLog log;
    log.step = step;
    log.lr = linear_decay_lr(config.lr, step, config.steps);
    log.loss = static_cast<double>(loss.total.value()[0]);
    log.batch = static_cast<int>(n);
    for (const LossBreakdown& b : loss.per_sample) {
      log.focal += b.focal / static_cast<double>(n);
      log.dice += b.dice / static_cast<double>(n);
      log.iou_mse += b.iou_mse / static_cast<double>(n);
    }
    if (!std::isfinite(log.loss)) {
      std::ostringstream msg;
      msg << "training diverged at step " << step << " (image " << batch.source_ids.front()
          << "): loss=" << log.loss << " focal=" << log.focal << " dice=" << log.dice
          << " iou_mse=" << log.iou_mse << " lr=" << log.lr;
      throw NumericError(msg.str());
    }
    tape.backward(loss.total);
    opt.step(log.lr);
    opt.zero_grad();
    result.log.push_back(log);
    if (on_log && (config.log_every > 0) && (step % config.log_every == 0 || step + 1 == config.steps)) {
      on_log(log);
    }
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace sqsm::train
