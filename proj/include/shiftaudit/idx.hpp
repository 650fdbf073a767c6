#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "shiftaudit/io.hpp"
#include "shiftaudit/tensor.hpp"

namespace shiftaudit {

/// Parses an IDX file (the MNIST container).
///
/// Layout, all integers big-endian: two zero bytes, a type code, the dimension count, one u32
/// extent per dimension, then the payload in row-major order. Only the unsigned-byte type
/// (0x08) is accepted.
inline Tensor parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FormatError("IDX header truncated", bytes.size());
  if (bytes[0] != 0 || bytes[1] != 0) throw FormatError("IDX magic must start with two zero bytes", 0);
  if (bytes[2] != 0x08) {
    throw FormatError("unsupported IDX type code " + std::to_string(bytes[2]) +
                          " (only 0x08 unsigned byte is supported)",
                      2);
  }
  const std::size_t ndims = bytes[3];
  if (ndims == 0) throw FormatError("IDX dimension count is 0", 3);

  std::size_t pos = 4;
  if (bytes.size() < pos + 4 * ndims) throw FormatError("IDX dimension table truncated", bytes.size());
  Tensor::Shape shape(ndims);
  std::size_t count = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    const std::uint32_t e = (std::uint32_t{bytes[pos]} << 24) | (std::uint32_t{bytes[pos + 1]} << 16) |
                            (std::uint32_t{bytes[pos + 2]} << 8) | std::uint32_t{bytes[pos + 3]};
    shape[d] = e;
    if (e != 0 && count > SIZE_MAX / e) throw FormatError("IDX extents overflow", pos);
    count *= e;
    pos += 4;
  }
  if (bytes.size() - pos < count) {
    throw FormatError("IDX payload truncated: expected " + std::to_string(count) + " bytes, found " +
                          std::to_string(bytes.size() - pos),
                      bytes.size());
  }
  if (bytes.size() - pos > count) throw FormatError("trailing bytes after IDX payload", pos + count);

  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = bytes[pos + i];
  return Tensor(std::move(shape), std::move(data));
}

/// Inverse of parse_idx; values must be integers in [0, 255].
inline Bytes serialize_idx(const Tensor& t) {
  if (t.rank() == 0 || t.rank() > 255) throw DimensionError("IDX needs between 1 and 255 dimensions");
  Bytes out{0, 0, 0x08, static_cast<std::uint8_t>(t.rank())};
  for (std::size_t e : t.shape()) {
    if (e > UINT32_MAX) throw DimensionError("IDX extent exceeds 32 bits");
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(e >> s));
  }
  out.reserve(out.size() + t.size());
  for (double v : t.values()) {
    if (!(v >= 0.0 && v <= 255.0) || v != static_cast<double>(static_cast<int>(v))) {
      throw RangeError("IDX unsigned-byte payload needs integers in [0, 255]");
    }
    out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

inline Tensor read_idx(const std::filesystem::path& path) { return parse_idx(read_file(path)); }

inline void write_idx(const std::filesystem::path& path, const Tensor& t) {
  write_file(path, serialize_idx(t));
}

}  // namespace shiftaudit
