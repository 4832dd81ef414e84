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

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <set>

#include "sqsm/quant.hpp"

namespace sqsm::quant {

namespace {

constexpr char kMagic[4] = {'S', 'Q', 'S', 'M'};
constexpr std::size_t kAlign = 8;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    using Bits = std::make_unsigned_t<U>;
    const Bits u = static_cast<Bits>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : buf(b) {}

  void need(std::size_t n, const char* what) const {
    if (n > buf.size() - pos) {
      throw FormatError(std::string("truncated model file while reading ") + what, pos);
    }
  }
  template <typename U>
  U le(const char* what) {
    need(sizeof(U), what);
    std::make_unsigned_t<U> u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      u |= static_cast<std::make_unsigned_t<U>>(static_cast<std::make_unsigned_t<U>>(buf[pos + i]) << (8 * i));
    }
    pos += sizeof(U);
    return static_cast<U>(u);
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }

  std::span<const std::uint8_t> buf;
  std::size_t pos = 0;
};

template <typename T>
std::vector<std::uint8_t> to_le_bytes(std::span<const T> values) {
  Writer w;
  for (const T v : values) {
    if constexpr (std::is_same_v<T, float>) {
      w.le(std::bit_cast<std::uint32_t>(v));
    } else {
      w.le(v);
    }
  }
  return std::move(w.out);
}

std::vector<float> floats_from(const TensorRecord& r) {
  if (r.dtype != DType::kFloat32) throw FormatError("tensor " + r.name + " is not float32");
  std::vector<float> out(r.bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(r.bytes[i * 4 + static_cast<std::size_t>(b)]) << (8 * b);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

TensorRecord float_record(const std::string& name, const Tensor& t) {
  return {name, DType::kFloat32, t.shape(), to_le_bytes<float>(t.data())};
}

nlohmann::ordered_json header_json(const ModelConfig& config, const char* weights) {
  nlohmann::ordered_json j;
  j["format"] = "sqsm-model";
  j["weights"] = weights;
  j["model"] = nlohmann::ordered_json::parse(config.to_json());
  j["quantized"] = nlohmann::ordered_json::object();
  return j;
}

nlohmann::json parse_header(const ModelFile& file) {
  try {
    nlohmann::json j = nlohmann::json::parse(file.config_json);
    if (!j.is_object() || j.value("format", "") != "sqsm-model" || !j.contains("model")) {
      throw FormatError("model file header is not an sqsm-model description");
    }
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file header is not valid JSON: ") + e.what());
  }
}

}  // namespace

const TensorRecord* ModelFile::find(const std::string& name) const {
  for (const TensorRecord& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<std::uint8_t> serialize(const ModelFile& file) {
  Writer w;
  w.bytes(kMagic, 4);
  w.le<std::uint16_t>(file.version);
  w.le<std::uint16_t>(0);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(file.config_json.size()));
  w.bytes(file.config_json.data(), file.config_json.size());
  w.le<std::uint32_t>(static_cast<std::uint32_t>(file.tensors.size()));

  // The table size is known before the offsets, so compute the payload start
  // first and lay tensors out after it.
  std::size_t table = 0;
  for (const TensorRecord& t : file.tensors) table += 2 + t.name.size() + 2 + 8 * t.shape.size() + 16;
  std::size_t cursor = (w.out.size() + table + kAlign - 1) / kAlign * kAlign;
  std::vector<std::size_t> offsets;
  for (const TensorRecord& t : file.tensors) {
    if (t.name.empty() || t.name.size() > 0xFFFF) throw ValidationError("tensor name length out of range");
    if (t.shape.size() > 0xFF) throw ValidationError("tensor rank out of range");
    const auto expected = static_cast<std::size_t>(shape_numel(t.shape)) * dtype_size(t.dtype);
    if (t.bytes.size() != expected) {
      throw ValidationError("tensor " + t.name + " payload does not match its shape");
    }
    w.le<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.shape.size()));
    for (const std::int64_t d : t.shape) w.le<std::int64_t>(d);
    w.le<std::uint64_t>(cursor);
    w.le<std::uint64_t>(t.bytes.size());
    offsets.push_back(cursor);
    cursor = (cursor + t.bytes.size() + kAlign - 1) / kAlign * kAlign;
  }
  for (std::size_t i = 0; i < file.tensors.size(); ++i) {
    while (w.out.size() < offsets[i]) w.out.push_back(0);
    w.bytes(file.tensors[i].bytes.data(), file.tensors[i].bytes.size());
  }
  return std::move(w.out);
}

ModelFile parse(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic, expected SQSM", 0);
  r.pos = 4;
  ModelFile file;
  const std::size_t version_at = r.pos;
  file.version = r.le<std::uint16_t>("version");
  if (file.version != ModelFile::kVersion) {
    throw FormatError("unsupported model file version " + std::to_string(file.version), version_at);
  }
  const std::size_t reserved_at = r.pos;
  if (r.le<std::uint16_t>("reserved field") != 0) throw FormatError("reserved field must be 0", reserved_at);
  const auto config_len = r.le<std::uint32_t>("config length");
  file.config_json = r.str(config_len, "config");
  const auto count = r.le<std::uint32_t>("tensor count");

  struct Span {
    std::uint64_t offset, length;
    std::size_t entry_at;
  };
  std::vector<Span> spans;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t entry_at = r.pos;
    TensorRecord t;
    const auto name_len = r.le<std::uint16_t>("tensor name length");
    t.name = r.str(name_len, "tensor name");
    if (t.name.empty() || !names.insert(t.name).second) {
      throw FormatError("empty or duplicate tensor name '" + t.name + "'", entry_at);
    }
    const std::size_t dtype_at = r.pos;
    const auto dtype = r.le<std::uint8_t>("dtype");
    if (dtype > static_cast<std::uint8_t>(DType::kInt8)) throw FormatError("unknown dtype", dtype_at);
    t.dtype = static_cast<DType>(dtype);
    const auto rank = r.le<std::uint8_t>("rank");
    for (int d = 0; d < rank; ++d) {
      const std::size_t dim_at = r.pos;
      const auto extent = r.le<std::int64_t>("extent");
      if (extent < 0 || extent > (std::int64_t{1} << 40)) throw FormatError("bad extent", dim_at);
      t.shape.push_back(extent);
    }
    const Span s{r.le<std::uint64_t>("offset"), r.le<std::uint64_t>("byte length"), entry_at};
    const auto expected = static_cast<std::uint64_t>(shape_numel(t.shape)) * dtype_size(t.dtype);
    if (s.length != expected) {
      throw FormatError("tensor " + t.name + " byte length does not match its shape", entry_at);
    }
    spans.push_back(s);
    file.tensors.push_back(std::move(t));
  }
  std::uint64_t end = r.pos;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const Span& s = spans[i];
    if (s.offset % kAlign != 0 || s.offset < end) {
      throw FormatError("tensor " + file.tensors[i].name + " payload is misaligned or overlaps", s.entry_at);
    }
    if (s.offset > bytes.size() || s.length > bytes.size() - s.offset) {
      throw FormatError("truncated payload of tensor " + file.tensors[i].name,
                        static_cast<std::size_t>(std::min<std::uint64_t>(s.offset, bytes.size())));
    }
    const auto* p = bytes.data() + s.offset;
    file.tensors[i].bytes.assign(p, p + s.length);
    end = s.offset + s.length;
  }
  return file;
}

void write_file(const std::filesystem::path& path, const ModelFile& file) {
  const std::vector<std::uint8_t> bytes = serialize(file);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write model file " + path.string());
}

ModelFile read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(bytes);
}

ModelFile export_model(SqueezeSam<float>& model) {
  ModelFile file;
  file.config_json = header_json(model.config(), "float32").dump();
  const nn::StateList<float> state = model.state();
  for (const Parameter<float>* p : state.params) file.tensors.push_back(float_record(p->name, p->value));
  for (const nn::Buffer<float>& b : state.buffers) file.tensors.push_back(float_record(b.name, *b.tensor));
  return file;
}

ModelFile quantize_model(SqueezeSam<float>& model) {
  if (!model.config().batchnorm_folded) model.fold_batchnorm();
  nlohmann::ordered_json header = header_json(model.config(), "int8");
  ModelFile file;
  const nn::StateList<float> state = model.state();
  for (const Parameter<float>* p : state.params) {
    const std::optional<int> axis = quantization_axis(p->name, p->value.shape());
    if (!axis) {
      file.tensors.push_back(float_record(p->name, p->value));
      continue;
    }
    const QuantizedTensor q = quantize_per_channel(p->value, *axis);
    TensorRecord values{p->name, DType::kInt8, q.shape, {}};
    values.bytes.resize(q.values.size());
    std::memcpy(values.bytes.data(), q.values.data(), q.values.size());
    file.tensors.push_back(std::move(values));
    file.tensors.push_back({p->name + ".scale", DType::kFloat32,
                            {static_cast<std::int64_t>(q.scales.size())},
                            to_le_bytes<float>(q.scales)});
    header["quantized"][p->name] = *axis;
  }
  for (const nn::Buffer<float>& b : state.buffers) file.tensors.push_back(float_record(b.name, *b.tensor));
  file.config_json = header.dump();
  return file;
}

bool is_quantized(const ModelFile& file) { return parse_header(file).value("weights", "") == "int8"; }

ModelConfig file_config(const ModelFile& file) {
  const nlohmann::json j = parse_header(file);
  try {
    return ModelConfig::from_json(j.at("model").dump());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model config in file header: ") + e.what());
  }
}

SqueezeSam<float> instantiate(const ModelFile& file) {
  const nlohmann::json header = parse_header(file);
  const ModelConfig config = file_config(file);
  SqueezeSam<float> model(config, 0);
  const nn::StateList<float> state = model.state();
  const nlohmann::json quantized = header.value("quantized", nlohmann::json::object());
  std::set<std::string> used;

  auto take = [&](const std::string& name) -> const TensorRecord& {
    const TensorRecord* r = file.find(name);
    if (!r) throw FormatError("model file is missing tensor " + name);
    used.insert(name);
    return *r;
  };
  auto load_into = [&](const std::string& name, Tensor& dst) {
    const TensorRecord& r = take(name);
    if (r.shape != dst.shape()) {
      throw FormatError("tensor " + name + " has shape " + shape_string(r.shape) + ", model expects " +
                        shape_string(dst.shape()));
    }
    if (quantized.contains(name)) {
      if (r.dtype != DType::kInt8) throw FormatError("tensor " + name + " should be int8");
      QuantizedTensor q;
      q.shape = r.shape;
      q.axis = quantized.at(name).get<int>();
      q.values.resize(r.bytes.size());
      std::memcpy(q.values.data(), r.bytes.data(), r.bytes.size());
      q.scales = floats_from(take(name + ".scale"));
      try {
        dst = dequantize(q);
      } catch (const ShapeError& e) {
        throw FormatError(std::string("bad scales for ") + name + ": " + e.what());
      }
    } else {
      dst = Tensor(r.shape, floats_from(r));
    }
  };
  for (Parameter<float>* p : state.params) load_into(p->name, p->value);
  for (const nn::Buffer<float>& b : state.buffers) load_into(b.name, *b.tensor);
  for (const TensorRecord& r : file.tensors) {
    if (!used.count(r.name)) throw FormatError("model file has unexpected tensor " + r.name);
  }
  return model;
}

}  // namespace sqsm::quant
