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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sqsm/model.hpp"

namespace sqsm::quant {

/// Symmetric per-channel int8 weights: w ~= values * scales[channel].
struct QuantizedTensor {
  Shape shape;
  int axis = 0;  // output-channel axis
  std::vector<std::int8_t> values;
  std::vector<float> scales;  // one per channel; zero point is always 0
};

/// scale_c = max|w_c| / 127 and q = round(w / scale_c) clamped to [-127, 127].
/// An all-zero channel gets scale 1 and zero values.
QuantizedTensor quantize_per_channel(const Tensor& w, int axis);
Tensor dequantize(const QuantizedTensor& q);

/// Output-channel axis of a weight the quantizer replaces, or nullopt for
/// tensors kept in float32 (biases, token embeddings, buffers).
std::optional<int> quantization_axis(const std::string& name, const Shape& shape);

// ---------------------------------------------------------------------------
// Model file

struct TensorRecord {
  std::string name;
  DType dtype = DType::kFloat32;
  Shape shape;
  std::vector<std::uint8_t> bytes;  // little-endian payload
  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

/// Layout (all integers little-endian):
///   "SQSM" | u16 version | u16 reserved (0) | u32 config length | config JSON
///   | u32 tensor count | per tensor: u16 name length, name, u8 dtype, u8 rank,
///     rank x i64 extents, u64 offset, u64 byte length
///   | zero padding | payload.
/// Offsets are absolute, 8-byte aligned, ascending and non-overlapping.
struct ModelFile {
  static constexpr std::uint16_t kVersion = 1;

  std::uint16_t version = kVersion;
  std::string config_json;
  std::vector<TensorRecord> tensors;

  const TensorRecord* find(const std::string& name) const;
  friend bool operator==(const ModelFile&, const ModelFile&) = default;
};

std::vector<std::uint8_t> serialize(const ModelFile& file);
/// Throws FormatError (carrying the byte offset) on bad magic, version,
/// truncation, inconsistent sizes or overlapping payloads.
ModelFile parse(std::span<const std::uint8_t> bytes);

void write_file(const std::filesystem::path& path, const ModelFile& file);
ModelFile read_file(const std::filesystem::path& path);

/// Float32 export of every parameter and buffer.
ModelFile export_model(SqueezeSam<float>& model);

/// Folds batch norms (in place, when not yet folded), then stores every
/// quantizable weight as int8 plus "<name>.scale" float32 scales.
ModelFile quantize_model(SqueezeSam<float>& model);

bool is_quantized(const ModelFile& file);
ModelConfig file_config(const ModelFile& file);

/// Builds the model described by the file; int8 weights are dequantized so
/// inference runs in float.
SqueezeSam<float> instantiate(const ModelFile& file);

inline void save_model(const std::filesystem::path& path, SqueezeSam<float>& model) {
  write_file(path, export_model(model));
}
inline SqueezeSam<float> load_model(const std::filesystem::path& path) {
  return instantiate(read_file(path));
}

}  // namespace sqsm::quant
