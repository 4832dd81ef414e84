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
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sqsm/image.hpp"
#include "sqsm/nn.hpp"

namespace sqsm {

struct ModelConfig {
  int input_size = 64;
  int down_stages = 6;
  /// Output channels of each encoder stage; the last entry is the 1x1 bottleneck
  /// and must equal token_dim.
  std::vector<int> channel_schedule{16, 24, 32, 48, 64, 128};
  int transformer_layers = 2;
  int token_dim = 128;
  int heads = 4;
  int ffn_dim = 128;
  int mask_count = 4;
  double click_radius_frac = 0.01;
  bool batchnorm_folded = false;

  static constexpr int kMaxChannels = 256;
  static constexpr int kFourierFrequencies = 8;

  /// Throws ShapeError describing the first violated constraint.
  void validate() const;
  int click_radius() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);

  /// Desk-scale configuration used by the acceptance suite (64 px).
  static ModelConfig toy();
  /// 1024 px reconstruction of the full-size model.
  static ModelConfig reference();
  /// 16 px configuration small enough for full finite-difference checks.
  static ModelConfig micro();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Early-fusion encoding: normalised RGB, click disks (+1 fg / -1 bg, later
/// clicks overwrite earlier ones) and a filled box rectangle. [5, S, S].
template <typename T>
BasicTensor<T> encode_prompts_early(const Image& image, const PromptSet& prompts, int radius);

/// 2 * 2 * kFourierFrequencies features of a click position in an S x S frame.
std::array<double, 4 * ModelConfig::kFourierFrequencies> fourier_features(double x, double y,
                                                                          int size);

struct SegmentationOutput {
  Tensor mask_logits;  // [k, H, W]
  std::vector<float> iou_scores;
  int best_index = 0;
};

/// Index of the largest score; ties resolve to the lowest index.
int argmax_score(const std::vector<float>& scores);

/// Binary mask of the best-scoring candidate (sigmoid(logit) > 0.5) and its score.
std::pair<BinaryMask, float> select_best_mask(const SegmentationOutput& output);
/// Candidate `index` thresholded at logit 0.
BinaryMask candidate_mask(const SegmentationOutput& output, int index);

/// UNet encoder / decoder with a token transformer at the 1x1 bottleneck.
template <typename T>
class SqueezeSam {
 public:
  SqueezeSam(const ModelConfig& config, std::uint64_t seed);
  SqueezeSam(const SqueezeSam&) = delete;
  SqueezeSam& operator=(const SqueezeSam&) = delete;
  SqueezeSam(SqueezeSam&&) = default;
  SqueezeSam& operator=(SqueezeSam&&) = default;

  struct Output {
    Var<T> logits;  // [N, k, S, S]
    Var<T> iou;     // [N, k]
  };

  /// encoded: [N, 5, S, S]; prompts[i] supplies the click tokens of sample i.
  Output forward(Tape<T>& tape, Var<T> encoded, const std::vector<PromptSet>& prompts,
                 ops::Mode mode);

  /// Single-image inference; the image must already be S x S. Repeated clicks
  /// are dropped first so they leave the encoded input unchanged.
  SegmentationOutput predict(const Image& image, const PromptSet& prompts);

  /// Parameters and buffers in a fixed, name-unique order.
  nn::StateList<T> state();
  std::int64_t param_count();
  /// Largest output channel count over every constructed layer.
  int max_layer_channels() const;

  /// Folds every batch norm into its convolution (inference only afterwards).
  void fold_batchnorm();

  const ModelConfig& config() const { return config_; }

 private:
  Var<T> click_tokens(Tape<T>& tape, const PromptSet& prompts);

  ModelConfig config_;
  std::vector<nn::DoubleConvDown<T>> encoder_;
  std::vector<nn::DoubleConvUp<T>> decoder_;
  std::vector<nn::TransformerLayer<T>> transformer_;
  Parameter<T> mask_tokens_;  // [k, D]
  Parameter<T> iou_token_;    // [1, D]
  nn::Linear<T> click_embed_;
  Parameter<T> polarity_embed_;  // [2, D]
  nn::MaskMlpHead<T> head_;
};

}  // namespace sqsm
