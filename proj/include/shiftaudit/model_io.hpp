#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>

#include "shiftaudit/io.hpp"
#include "shiftaudit/mlp.hpp"
#include "shiftaudit/patterns.hpp"

namespace shiftaudit {

// Model container, little-endian:
//   magic "SHMLP\0\0\0" | u32 version | u32 layer count
//   per layer: u64 rows | u64 cols | u8 relu | rows*cols f64 weights | rows f64 biases
//   optional pattern section:
//     magic "SHPAT\0\0\0" | u8 mean convention | u64 source sample count
//     per layer: rows*cols f64 patterns | rows u8 degenerate flags
inline constexpr char kModelMagic[8] = {'S', 'H', 'M', 'L', 'P', 0, 0, 0};
inline constexpr char kPatternMagic[8] = {'S', 'H', 'P', 'A', 'T', 0, 0, 0};
inline constexpr std::uint32_t kModelFormatVersion = 1;

struct StoredModel {
  MlpModel model;
  std::optional<PatternSet> patterns;
};

inline Bytes encode_model(const MlpModel& model, const PatternSet* patterns = nullptr) {
  model.validate();
  ByteWriter w;
  w.raw(kModelMagic, sizeof kModelMagic);
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(model.depth()));
  for (const auto& layer : model.layers) {
    w.u64(layer.outputs());
    w.u64(layer.inputs());
    w.u8(layer.relu ? 1 : 0);
    w.f64s(layer.weights.values());
    w.f64s(layer.biases.values());
  }
  if (patterns) {
    check_patterns(model, *patterns);
    w.raw(kPatternMagic, sizeof kPatternMagic);
    w.u8(static_cast<std::uint8_t>(patterns->convention));
    w.u64(patterns->source_samples);
    for (const auto& lp : patterns->layers) {
      w.f64s(lp.patterns.values());
      for (auto f : lp.degenerate) w.u8(f);
    }
  }
  return w.take();
}

inline StoredModel decode_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.raw(sizeof kModelMagic, "model magic");
  if (std::memcmp(magic.data(), kModelMagic, sizeof kModelMagic) != 0) {
    throw FormatError("bad model magic, expected \"SHMLP\"", 0);
  }
  const auto version = r.u32("format version");
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version) + " (expected " +
                          std::to_string(kModelFormatVersion) + ")",
                      8);
  }
  const auto depth = r.u32("layer count");
  if (depth == 0) throw FormatError("model has no layers", 12);

  StoredModel out;
  for (std::uint32_t l = 0; l < depth; ++l) {
    const std::size_t at = r.offset();
    const auto rows = r.u64("layer rows");
    const auto cols = r.u64("layer cols");
    const auto relu = r.u8("relu flag");
    if (relu > 1) throw FormatError("relu flag must be 0 or 1", r.offset() - 1);
    if (rows == 0 || cols == 0 || cols > r.remaining() / 8 / rows) {
      throw FormatError("layer " + std::to_string(l) + " size fields exceed the file", at);
    }
    DenseLayer layer;
    layer.weights = Tensor({rows, cols}, r.f64s(rows * cols, "weights"));
    layer.biases = Tensor({rows}, r.f64s(rows, "biases"));
    layer.relu = relu == 1;
    out.model.layers.push_back(std::move(layer));
  }
  try {
    out.model.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("inconsistent model: ") + e.what(), r.offset());
  }

  if (!r.done()) {
    auto pmagic = r.raw(sizeof kPatternMagic, "pattern section magic");
    if (std::memcmp(pmagic.data(), kPatternMagic, sizeof kPatternMagic) != 0) {
      throw FormatError("unexpected trailing data after the model", r.offset() - sizeof kPatternMagic);
    }
    PatternSet ps;
    const auto conv = r.u8("pattern convention");
    if (conv > 1) throw FormatError("unknown pattern convention", r.offset() - 1);
    ps.convention = static_cast<PatternMeanConvention>(conv);
    ps.source_samples = r.u64("pattern source sample count");
    for (const auto& layer : out.model.layers) {
      LayerPatterns lp;
      lp.patterns = Tensor(layer.weights.shape(), r.f64s(layer.weights.size(), "patterns"));
      lp.normalization = Tensor({layer.outputs()});
      lp.degenerate.resize(layer.outputs());
      for (std::size_t i = 0; i < layer.outputs(); ++i) {
        lp.degenerate[i] = r.u8("degenerate flags");
        lp.normalization[i] = dot(lp.patterns.row(i), layer.weights.row(i));
      }
      ps.layers.push_back(std::move(lp));
    }
    if (!r.done()) throw FormatError("trailing bytes after the pattern section", r.offset());
    out.patterns = std::move(ps);
  }
  return out;
}

inline void save_model(const std::filesystem::path& path, const MlpModel& model,
                       const PatternSet* patterns = nullptr) {
  write_file(path, encode_model(model, patterns));
}

inline StoredModel load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

/// 64-bit FNV-1a of the serialized model (without patterns), as 16 hex digits.
inline std::string model_hash(const MlpModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : encode_model(model)) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = hex[h & 0xf];
    h >>= 4;
  }
  return s;
}

}  // namespace shiftaudit
