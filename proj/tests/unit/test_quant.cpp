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
#include <cstring>
#include <filesystem>

#include "sqsm/quant.hpp"

namespace sqsm::quant {
namespace {

Tensor random_tensor(Rng& rng, Shape shape, double sd = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(sd * rng.normal());
  return t;
}

TEST(QuantizePerChannel, TernaryWeightsAreExact) {
  Rng rng(1);
  Tensor w({4, 3, 3, 3});
  for (auto& v : w.data()) v = static_cast<float>(static_cast<int>(rng.below(3)) - 1);
  // Every output channel needs a nonzero entry for its scale to be 1/127.
  for (int c = 0; c < 4; ++c) w.at(c, 0, 0, 0) = 1.0f;
  const QuantizedTensor q = quantize_per_channel(w, 0);
  for (float s : q.scales) EXPECT_FLOAT_EQ(s, 1.0f / 127.0f);
  const Tensor d = dequantize(q);
  for (std::int64_t i = 0; i < w.size(); ++i) {
    EXPECT_EQ(q.values[static_cast<std::size_t>(i)], static_cast<int>(w[i]) * 127);
    EXPECT_FLOAT_EQ(d[i], w[i]);
  }
}

TEST(QuantizePerChannel, ErrorBoundedByHalfScale) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int axis = static_cast<int>(rng.below(2));
    const Tensor w = random_tensor(rng, {5, 6, 2, 2}, 0.1 + trial);
    const QuantizedTensor q = quantize_per_channel(w, axis);
    const Tensor d = dequantize(q);
    ASSERT_EQ(q.scales.size(), static_cast<std::size_t>(w.dim(axis)));
    for (int a = 0; a < 5; ++a)
      for (int b = 0; b < 6; ++b)
        for (int k = 0; k < 4; ++k) {
          const int c = axis == 0 ? a : b;
          const float s = q.scales[static_cast<std::size_t>(c)];
          const float orig = w.at(a, b, k / 2, k % 2), back = d.at(a, b, k / 2, k % 2);
          // Half a step, plus float rounding of the product.
          EXPECT_LE(std::abs(orig - back), 0.5f * s * (1.0f + 1e-5f));
          const auto v = q.values[static_cast<std::size_t>(((a * 6 + b) * 2 + k / 2) * 2 + k % 2)];
          EXPECT_LE(std::abs(static_cast<int>(v)), 127);
        }
  }
}

TEST(QuantizePerChannel, ChannelMaximumMapsTo127) {
  Tensor w({2, 3}, 0.0f);
  w.at(0, 1) = -0.5f;
  w.at(0, 2) = 0.25f;
  const QuantizedTensor q = quantize_per_channel(w, 0);
  EXPECT_FLOAT_EQ(q.scales[0], 0.5f / 127.0f);
  EXPECT_EQ(q.values[1], -127);
  EXPECT_EQ(q.values[2], 64);  // 63.5 rounds away from zero
  // The all-zero row uses the sentinel scale.
  EXPECT_EQ(q.scales[1], 1.0f);
  EXPECT_EQ(q.values[3], 0);
}

TEST(QuantizePerChannel, RejectsBadInput) {
  Tensor w({2, 2}, 1.0f);
  EXPECT_THROW(quantize_per_channel(w, 2), ShapeError);
  w[1] = std::nanf("");
  EXPECT_THROW(quantize_per_channel(w, 0), NumericError);
}

TEST(QuantizationAxis, FollowsLayerLayouts) {
  EXPECT_EQ(quantization_axis("enc.0.0.conv.weight", {4, 5, 3, 3}), 0);
  EXPECT_EQ(quantization_axis("dec.3.up.weight", {16, 8, 2, 2}), 1);
  EXPECT_EQ(quantization_axis("xf.0.wq", {16, 16}), 0);
  EXPECT_EQ(quantization_axis("head.mask0.0.weight", {16, 16}), 0);
  EXPECT_EQ(quantization_axis("enc.0.0.conv.bias", {4}), std::nullopt);
  EXPECT_EQ(quantization_axis("tokens.mask", {4, 16}), std::nullopt);
  EXPECT_EQ(quantization_axis("tokens.polarity", {2, 16}), std::nullopt);
}

ModelFile sample_file() {
  ModelFile f;
  f.config_json = R"({"format":"sqsm-model"})";
  f.tensors.push_back({"a", DType::kFloat32, {3}, std::vector<std::uint8_t>(12, 7)});
  f.tensors.push_back({"b", DType::kInt8, {1, 5}, {1, 2, 3, 4, 5}});
  f.tensors.push_back({"c", DType::kFloat64, {}, std::vector<std::uint8_t>(8, 9)});
  return f;
}

std::uint64_t read_u64(const std::vector<std::uint8_t>& b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

TEST(ModelFileFormat, HeaderLayoutIsLittleEndian) {
  const ModelFile f = sample_file();
  const auto bytes = serialize(f);
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(std::memcmp(bytes.data(), "SQSM", 4), 0);
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[8], f.config_json.size());
  // First table entry follows the config and the tensor count.
  std::size_t at = 12 + f.config_json.size();
  EXPECT_EQ(bytes[at], 3);
  at += 4;
  EXPECT_EQ(bytes[at], 1);  // name length
  EXPECT_EQ(bytes[at + 2], 'a');
  EXPECT_EQ(bytes[at + 3], 0);  // float32
  EXPECT_EQ(bytes[at + 4], 1);  // rank
  EXPECT_EQ(read_u64(bytes, at + 5), 3u);
  const std::uint64_t offset = read_u64(bytes, at + 13);
  EXPECT_EQ(offset % 8, 0u);
  EXPECT_EQ(read_u64(bytes, at + 21), 12u);
  EXPECT_EQ(bytes[offset], 7);
}

TEST(ModelFileFormat, RoundTripIsIdentity) {
  const ModelFile f = sample_file();
  const auto bytes = serialize(f);
  const ModelFile g = parse(bytes);
  EXPECT_EQ(g, f);
  EXPECT_EQ(serialize(g), bytes);
}

TEST(ModelFileFormat, CorruptionIsFormatErrorWithOffset) {
  const auto good = serialize(sample_file());
  auto bad = good;
  bad[0] = 'X';
  try {
    parse(bad);
    FAIL() << "bad magic accepted";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  bad = good;
  bad[4] = 2;
  try {
    parse(bad);
    FAIL() << "bad version accepted";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  // Every proper prefix is rejected.
  for (std::size_t n = 0; n < good.size(); ++n) {
    EXPECT_THROW(parse(std::span<const std::uint8_t>(good.data(), n)), FormatError) << n;
  }
  // Moving the second tensor's offset onto the first one overlaps them.
  bad = good;
  const std::size_t first = 12 + sample_file().config_json.size() + 4;
  const std::size_t second = first + 2 + 1 + 2 + 8 + 16;
  for (int i = 0; i < 8; ++i) bad[second + 2 + 1 + 2 + 16 + static_cast<std::size_t>(i)] = bad[first + 13 + static_cast<std::size_t>(i)];
  EXPECT_THROW(parse(bad), FormatError);
}

TEST(ModelFileFormat, SerializeRejectsInconsistentRecords) {
  ModelFile f = sample_file();
  f.tensors[0].bytes.pop_back();
  EXPECT_THROW(serialize(f), ValidationError);
}

std::vector<float> all_weights(SqueezeSam<float>& m) {
  std::vector<float> out;
  const auto s = m.state();
  for (const auto* p : s.params) out.insert(out.end(), p->value.data().begin(), p->value.data().end());
  for (const auto& b : s.buffers) out.insert(out.end(), b.tensor->data().begin(), b.tensor->data().end());
  return out;
}

Image random_image(Rng& rng, int size) {
  Image img(size, size);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

TEST(ModelRoundTrip, FloatExportIsBitwise) {
  SqueezeSam<float> model(ModelConfig::micro(), 3);
  const ModelFile f = export_model(model);
  EXPECT_FALSE(is_quantized(f));
  const auto bytes = serialize(f);
  SqueezeSam<float> back = instantiate(parse(bytes));
  EXPECT_EQ(back.config(), model.config());
  EXPECT_EQ(all_weights(back), all_weights(model));
  EXPECT_EQ(serialize(export_model(back)), bytes);

  const auto path = std::filesystem::temp_directory_path() / "sqsm_roundtrip.sqsm";
  save_model(path, model);
  SqueezeSam<float> from_disk = load_model(path);
  EXPECT_EQ(all_weights(from_disk), all_weights(model));
  Rng rng(4);
  const Image img = random_image(rng, 16);
  const PromptSet p{{{5, 6, Polarity::kForeground}}, std::nullopt};
  EXPECT_EQ(from_disk.predict(img, p).mask_logits, model.predict(img, p).mask_logits);
}

TEST(ModelRoundTrip, QuantizedFileRoundTripsAndTracksFloatModel) {
  SqueezeSam<float> model(ModelConfig::micro(), 5);
  const ModelFile q = quantize_model(model);
  EXPECT_TRUE(model.config().batchnorm_folded);
  EXPECT_TRUE(is_quantized(q));
  const auto bytes = serialize(q);
  EXPECT_EQ(serialize(parse(bytes)), bytes);
  SqueezeSam<float> deq = instantiate(parse(bytes));
  EXPECT_TRUE(deq.config().batchnorm_folded);
  EXPECT_EQ(serialize(quantize_model(deq)), bytes);

  // Every quantized weight sits within half a step of the folded float weight.
  const auto fs = model.state(), qs = deq.state();
  for (std::size_t i = 0; i < fs.params.size(); ++i) {
    const auto* fp = fs.params[i];
    const auto* qp = qs.params[i];
    const auto axis = quantization_axis(fp->name, fp->value.shape());
    if (!axis) {
      EXPECT_EQ(qp->value, fp->value) << fp->name;
      continue;
    }
    const QuantizedTensor qt = quantize_per_channel(fp->value, *axis);
    EXPECT_EQ(qp->value, dequantize(qt)) << fp->name;
    const float smax = *std::max_element(qt.scales.begin(), qt.scales.end());
    for (std::int64_t j = 0; j < fp->value.size(); ++j) {
      EXPECT_LE(std::abs(fp->value[j] - qp->value[j]), 0.5f * smax * (1.0f + 1e-5f));
    }
  }
}

TEST(ModelRoundTrip, FoldThenQuantizeEqualsQuantizeUnfolded) {
  SqueezeSam<float> a(ModelConfig::micro(), 9), b(ModelConfig::micro(), 9);
  b.fold_batchnorm();
  EXPECT_EQ(serialize(quantize_model(a)), serialize(quantize_model(b)));
}

TEST(ModelRoundTrip, MissingOrExtraTensorsAreRejected) {
  SqueezeSam<float> model(ModelConfig::micro(), 1);
  ModelFile f = export_model(model);
  ModelFile extra = f;
  extra.tensors.push_back({"stray", DType::kFloat32, {1}, std::vector<std::uint8_t>(4, 0)});
  EXPECT_THROW(instantiate(extra), FormatError);
  f.tensors.erase(f.tensors.begin());
  EXPECT_THROW(instantiate(f), FormatError);
  ModelFile junk = export_model(model);
  junk.config_json = "{not json";
  EXPECT_THROW(instantiate(junk), FormatError);
}

TEST(ModelRoundTrip, ReferenceSizeReport) {
  SqueezeSam<float> model(ModelConfig::reference(), 0);
  const std::size_t quantized = serialize(quantize_model(model)).size();
  const std::int64_t params = model.param_count();
  // int8 weights dominate: about one byte per folded parameter.
  EXPECT_GT(static_cast<double>(quantized), 0.9 * static_cast<double>(params));
  EXPECT_LT(static_cast<double>(quantized), 1.1 * static_cast<double>(params));
  std::printf("reference int8 model file: %.2f MB for %lld parameters\n", quantized / 1e6,
              static_cast<long long>(params));
}

}  // namespace
}  // namespace sqsm::quant
