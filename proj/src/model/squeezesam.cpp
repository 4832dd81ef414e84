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

#include "sqsm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

namespace sqsm {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ShapeError("model config: " + msg); };
  if (down_stages < 1 || down_stages > 16) fail("down_stages must be in [1, 16]");
  if (input_size != (1 << down_stages)) {
    fail("input_size " + std::to_string(input_size) + " must equal 2^down_stages = " +
         std::to_string(1 << down_stages));
  }
  if (static_cast<int>(channel_schedule.size()) != down_stages) {
    fail("channel_schedule has " + std::to_string(channel_schedule.size()) + " entries, expected " +
         std::to_string(down_stages));
  }
  for (int c : channel_schedule) {
    if (c <= 0 || c % 2 != 0) fail("channel counts must be positive and even, got " + std::to_string(c));
    if (c > kMaxChannels) fail("channel count " + std::to_string(c) + " exceeds 256");
  }
  if (channel_schedule.back() != token_dim) {
    fail("bottleneck channels " + std::to_string(channel_schedule.back()) +
         " must equal token_dim " + std::to_string(token_dim));
  }
  if (token_dim > kMaxChannels || ffn_dim > kMaxChannels || ffn_dim <= 0) {
    fail("token_dim and ffn_dim must be in [1, 256]");
  }
  if (heads <= 0 || token_dim % heads != 0) {
    fail("token_dim " + std::to_string(token_dim) + " not divisible by " + std::to_string(heads) +
         " heads");
  }
  if (transformer_layers < 0) fail("transformer_layers must be non-negative");
  if (mask_count != 4) fail("mask_count must be 4");
  if (!(click_radius_frac > 0.0 && click_radius_frac < 1.0)) {
    fail("click_radius_frac must be in (0, 1)");
  }
}

int ModelConfig::click_radius() const {
  return std::max(2, static_cast<int>(std::lround(click_radius_frac * input_size)));
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["input_size"] = input_size;
  j["down_stages"] = down_stages;
  j["channel_schedule"] = channel_schedule;
  j["transformer_layers"] = transformer_layers;
  j["token_dim"] = token_dim;
  j["heads"] = heads;
  j["ffn_dim"] = ffn_dim;
  j["mask_count"] = mask_count;
  j["click_radius_frac"] = click_radius_frac;
  j["batchnorm_folded"] = batchnorm_folded;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config is not valid JSON: ") + e.what());
  }
  ModelConfig c;
  try {
    c.input_size = j.at("input_size").get<int>();
    c.down_stages = j.at("down_stages").get<int>();
    c.channel_schedule = j.at("channel_schedule").get<std::vector<int>>();
    c.transformer_layers = j.at("transformer_layers").get<int>();
    c.token_dim = j.at("token_dim").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.mask_count = j.at("mask_count").get<int>();
    c.click_radius_frac = j.at("click_radius_frac").get<double>();
    c.batchnorm_folded = j.at("batchnorm_folded").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config is missing a field: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  // Radius 5 at 64 px.
  c.click_radius_frac = 0.08;
  return c;
}

ModelConfig ModelConfig::reference() {
  ModelConfig c;
  c.input_size = 1024;
  c.down_stages = 10;
  c.channel_schedule = {32, 64, 96, 128, 192, 256, 256, 256, 256, 256};
  c.token_dim = 256;
  c.heads = 8;
  c.ffn_dim = 256;
  return c;
}

ModelConfig ModelConfig::micro() {
  ModelConfig c;
  c.input_size = 16;
  c.down_stages = 4;
  c.channel_schedule = {4, 8, 8, 16};
  c.token_dim = 16;
  c.heads = 2;
  c.ffn_dim = 16;
  return c;
}

template <typename T>
BasicTensor<T> encode_prompts_early(const Image& image, const PromptSet& prompts, int radius) {
  const int h = image.height, w = image.width;
  if (h <= 0 || w <= 0) throw ValidationError("encode_prompts_early: empty image");
  validate_prompts(prompts, h, w);
  BasicTensor<T> out({5, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < 3 * plane; ++i) {
    out.storage()[i] = static_cast<T>((image.data[i] / 255.0 - 0.5) / 0.5);
  }
  T* clicks = out.ptr() + 3 * plane;
  const int r2 = radius * radius;
  for (const Click& c : prompts.clicks) {
    const T v = c.polarity == Polarity::kForeground ? T(1) : T(-1);
    for (int dy = -radius; dy <= radius; ++dy) {
      for (int dx = -radius; dx <= radius; ++dx) {
        const int y = c.y + dy, x = c.x + dx;
        if (dx * dx + dy * dy > r2 || y < 0 || y >= h || x < 0 || x >= w) continue;
        clicks[static_cast<std::size_t>(y) * w + x] = v;
      }
    }
  }
  if (prompts.box) {
    T* box = out.ptr() + 4 * plane;
    for (int y = prompts.box->y0; y <= prompts.box->y1; ++y) {
      for (int x = prompts.box->x0; x <= prompts.box->x1; ++x) {
        box[static_cast<std::size_t>(y) * w + x] = T(1);
      }
    }
  }
  return out;
}

template Tensor encode_prompts_early<float>(const Image&, const PromptSet&, int);
template TensorD encode_prompts_early<double>(const Image&, const PromptSet&, int);

std::array<double, 4 * ModelConfig::kFourierFrequencies> fourier_features(double x, double y,
                                                                          int size) {
  std::array<double, 4 * ModelConfig::kFourierFrequencies> f{};
  const double u = (x + 0.5) / size;
  const double v = (y + 0.5) / size;
  for (int k = 0; k < ModelConfig::kFourierFrequencies; ++k) {
    const double s = std::ldexp(std::numbers::pi, k);
    f[4 * k + 0] = std::sin(s * u);
    f[4 * k + 1] = std::cos(s * u);
    f[4 * k + 2] = std::sin(s * v);
    f[4 * k + 3] = std::cos(s * v);
  }
  return f;
}

int argmax_score(const std::vector<float>& scores) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

BinaryMask candidate_mask(const SegmentationOutput& output, int index) {
  const Tensor& l = output.mask_logits;
  const int h = static_cast<int>(l.dim(1)), w = static_cast<int>(l.dim(2));
  if (index < 0 || index >= l.dim(0)) {
    throw ValidationError("candidate index " + std::to_string(index) + " out of range");
  }
  BinaryMask m(h, w);
  const float* p = l.ptr() + static_cast<std::ptrdiff_t>(index) * h * w;
  // sigmoid(z) > 0.5 exactly when z > 0.
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = p[i] > 0.0f;
  return m;
}

std::pair<BinaryMask, float> select_best_mask(const SegmentationOutput& output) {
  const int best = argmax_score(output.iou_scores);
  return {candidate_mask(output, best), output.iou_scores.at(static_cast<std::size_t>(best))};
}

template <typename T>
SqueezeSam<T>::SqueezeSam(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto& ch = config_.channel_schedule;
  const int stages = config_.down_stages;
  const int d = config_.token_dim;
  int in = 5;
  for (int i = 0; i < stages; ++i) {
    encoder_.emplace_back("enc." + std::to_string(i), in, ch[i], rng);
    in = ch[i];
  }
  for (int l = 0; l < config_.transformer_layers; ++l) {
    transformer_.emplace_back("xf." + std::to_string(l), d, config_.heads, config_.ffn_dim, rng);
  }
  for (int i = stages - 1; i >= 0; --i) {
    const int skip = i > 0 ? ch[i - 1] : 5;
    const int out = i > 0 ? ch[i - 1] : ch[0];
    decoder_.emplace_back("dec." + std::to_string(i), ch[i], skip, out, rng);
  }
  auto token_init = [&](Shape shape) {
    BasicTensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(rng.normal());
    return t;
  };
  mask_tokens_ = Parameter<T>("tokens.mask", token_init({config_.mask_count, d}));
  iou_token_ = Parameter<T>("tokens.iou", token_init({1, d}));
  click_embed_ = nn::Linear<T>("tokens.click", 4 * ModelConfig::kFourierFrequencies, d, rng);
  polarity_embed_ = Parameter<T>("tokens.polarity", token_init({2, d}));
  head_ = nn::MaskMlpHead<T>("head", d, ch[0], config_.mask_count, rng);
  if (config_.batchnorm_folded) {
    for (auto& e : encoder_) e.mark_folded();
    for (auto& e : decoder_) e.mark_folded();
  }
}

template <typename T>
Var<T> SqueezeSam<T>::click_tokens(Tape<T>& tape, const PromptSet& prompts) {
  const auto n = static_cast<std::int64_t>(prompts.clicks.size());
  constexpr int kF = 4 * ModelConfig::kFourierFrequencies;
  BasicTensor<T> feats({n, kF});
  std::vector<int> pol;
  for (std::int64_t i = 0; i < n; ++i) {
    const Click& c = prompts.clicks[static_cast<std::size_t>(i)];
    const auto f = fourier_features(c.x, c.y, config_.input_size);
    for (int j = 0; j < kF; ++j) feats.at(i, j) = static_cast<T>(f[static_cast<std::size_t>(j)]);
    pol.push_back(static_cast<int>(c.polarity));
  }
  Var<T> pos = click_embed_.forward(tape, tape.constant(std::move(feats)));
  return ops::add(pos, ops::gather_rows(tape.param(polarity_embed_), pol));
}

template <typename T>
typename SqueezeSam<T>::Output SqueezeSam<T>::forward(Tape<T>& tape, Var<T> encoded,
                                                      const std::vector<PromptSet>& prompts,
                                                      ops::Mode mode) {
  const Shape& s = encoded.shape();
  const int sz = config_.input_size;
  if (s.size() != 4 || s[1] != 5 || s[2] != sz || s[3] != sz) {
    throw ShapeError("SqueezeSam expects [N, 5, " + std::to_string(sz) + ", " +
                     std::to_string(sz) + "] input, got " + shape_string(s));
  }
  const std::int64_t n = s[0];
  if (static_cast<std::int64_t>(prompts.size()) != n) {
    throw ShapeError("SqueezeSam: " + std::to_string(prompts.size()) + " prompt sets for batch of " +
                     std::to_string(n));
  }
  const int d = config_.token_dim;
  const int k = config_.mask_count;

  std::vector<Var<T>> skips;
  Var<T> x = encoded;
  for (auto& stage : encoder_) {
    skips.push_back(x);
    x = stage.forward(tape, x, mode);
  }
  Var<T> bottleneck = ops::reshape(x, {n, d});

  Var<T> mask_tok = tape.param(mask_tokens_);
  Var<T> iou_tok = tape.param(iou_token_);
  std::vector<Var<T>> out_bottleneck, out_iou;
  std::vector<std::vector<Var<T>>> out_masks(static_cast<std::size_t>(k));
  for (std::int64_t b = 0; b < n; ++b) {
    std::vector<Var<T>> parts{ops::slice(bottleneck, 0, b, 1), mask_tok, iou_tok};
    if (!prompts[static_cast<std::size_t>(b)].clicks.empty()) {
      parts.push_back(click_tokens(tape, prompts[static_cast<std::size_t>(b)]));
    }
    Var<T> seq = ops::concat(parts, 0);
    for (auto& layer : transformer_) seq = layer.forward(tape, seq);
    out_bottleneck.push_back(ops::slice(seq, 0, 0, 1));
    for (int i = 0; i < k; ++i) out_masks[static_cast<std::size_t>(i)].push_back(ops::slice(seq, 0, 1 + i, 1));
    out_iou.push_back(ops::slice(seq, 0, 1 + k, 1));
  }

  x = ops::reshape(ops::concat(out_bottleneck, 0), {n, d, 1, 1});
  for (std::size_t j = 0; j < decoder_.size(); ++j) {
    x = decoder_[j].forward(tape, x, skips[skips.size() - 1 - j], mode);
  }
  std::vector<Var<T>> head_tokens;
  for (auto& m : out_masks) head_tokens.push_back(ops::concat(m, 0));
  Var<T> weights = head_.mask_weights(tape, head_tokens);
  return {ops::hyper_dot(x, weights), head_.iou(tape, ops::concat(out_iou, 0))};
}

template <typename T>
SegmentationOutput SqueezeSam<T>::predict(const Image& image, const PromptSet& raw_prompts) {
  const int sz = config_.input_size;
  if (image.height != sz || image.width != sz) {
    throw ShapeError("predict expects a " + std::to_string(sz) + "x" + std::to_string(sz) +
                     " image, got " + std::to_string(image.height) + "x" +
                     std::to_string(image.width));
  }
  const PromptSet prompts = canonical_prompts(raw_prompts);
  Tape<T> tape(false);
  BasicTensor<T> enc = encode_prompts_early<T>(image, prompts, config_.click_radius());
  enc.reshape({1, 5, sz, sz});
  Output out = forward(tape, tape.constant(std::move(enc)), {prompts}, ops::Mode::kInfer);
  SegmentationOutput r;
  r.mask_logits = out.logits.value().template cast<float>();
  r.mask_logits.reshape({config_.mask_count, sz, sz});
  for (T v : out.iou.value().data()) r.iou_scores.push_back(static_cast<float>(v));
  for (float v : r.mask_logits.data()) {
    if (!std::isfinite(v)) throw NumericError("predict produced non-finite mask logits");
  }
  r.best_index = argmax_score(r.iou_scores);
  return r;
}

template <typename T>
nn::StateList<T> SqueezeSam<T>::state() {
  nn::StateList<T> s;
  for (auto& e : encoder_) e.collect(s);
  for (auto& l : transformer_) l.collect(s);
  for (auto& dstage : decoder_) dstage.collect(s);
  s.params.push_back(&mask_tokens_);
  s.params.push_back(&iou_token_);
  click_embed_.collect(s);
  s.params.push_back(&polarity_embed_);
  head_.collect(s);
  return s;
}

template <typename T>
std::int64_t SqueezeSam<T>::param_count() {
  return nn::param_count(state());
}

template <typename T>
int SqueezeSam<T>::max_layer_channels() const {
  int m = 0;
  for (const auto& e : encoder_) m = std::max({m, e.first.conv.out_channels(), e.second.conv.out_channels()});
  for (const auto& dstage : decoder_) {
    m = std::max({m, static_cast<int>(dstage.up.weight.value.dim(1)),
                  dstage.first.conv.out_channels(), dstage.second.conv.out_channels()});
  }
  for (const auto& l : transformer_) {
    m = std::max({m, l.dim, static_cast<int>(l.ffn_in.weight.value.dim(0))});
  }
  m = std::max(m, static_cast<int>(click_embed_.weight.value.dim(0)));
  for (const auto& mlp : head_.mask_mlps) {
    for (const auto* lin : {&mlp.l0, &mlp.l1, &mlp.l2}) {
      m = std::max(m, static_cast<int>(lin->weight.value.dim(0)));
    }
  }
  return m;
}

template <typename T>
void SqueezeSam<T>::fold_batchnorm() {
  for (auto& e : encoder_) e.fold();
  for (auto& dstage : decoder_) dstage.fold();
  config_.batchnorm_folded = true;
}

template class SqueezeSam<float>;
template class SqueezeSam<double>;

}  // namespace sqsm
