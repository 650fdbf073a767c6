#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "shiftaudit/error.hpp"
#include "shiftaudit/tensor.hpp"

namespace shiftaudit {

using Bytes = std::vector<std::uint8_t>;

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string() + " for reading");
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FileError("write to " + path.string() + " failed");
}

/// Little-endian writer for the binary containers.
class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> vs) {
    for (double v : vs) f64(v);
  }

  const Bytes& bytes() const noexcept { return bytes_; }
  Bytes take() { return std::move(bytes_); }

 private:
  Bytes bytes_;
};

/// Little-endian reader; every short read is a FormatError carrying the offset.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  bool done() const noexcept { return pos_ == bytes_.size(); }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(std::string("truncated data while reading ") + what, pos_);
    }
  }

  std::span<const std::uint8_t> raw(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* what) { return raw(1, what)[0]; }
  std::uint32_t u32(const char* what) {
    auto s = raw(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | s[static_cast<std::size_t>(i)];
    return v;
  }
  std::uint64_t u64(const char* what) {
    auto s = raw(8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | s[static_cast<std::size_t>(i)];
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::vector<double> f64s(std::size_t n, const char* what) {
    if (n > remaining() / 8) {
      throw FormatError(std::string("truncated data while reading ") + what, pos_);
    }
    std::vector<double> out(n);
    for (auto& v : out) v = f64(what);
    return out;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

/// Vector dump: magic "SAVEC001", u64 length, then little-endian doubles. Used for saliency
/// maps and shift vectors.
inline constexpr char kVectorMagic[8] = {'S', 'A', 'V', 'E', 'C', '0', '0', '1'};

inline Bytes encode_vector(const Tensor& v) {
  ByteWriter w;
  w.raw(kVectorMagic, sizeof kVectorMagic);
  w.u64(v.size());
  w.f64s(v.values());
  return w.take();
}

inline Tensor decode_vector(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.raw(sizeof kVectorMagic, "vector magic");
  if (std::memcmp(magic.data(), kVectorMagic, sizeof kVectorMagic) != 0) {
    throw FormatError("bad vector magic, expected \"SAVEC001\"", 0);
  }
  const std::uint64_t n = r.u64("vector length");
  if (n > r.remaining() / 8) throw FormatError("vector length exceeds payload", r.offset());
  auto values = r.f64s(static_cast<std::size_t>(n), "vector payload");
  if (!r.done()) throw FormatError("trailing bytes after vector payload", r.offset());
  return Tensor::vector(std::move(values));
}

inline void write_vector(const std::filesystem::path& path, const Tensor& v) {
  write_file(path, encode_vector(v));
}

inline Tensor read_vector(const std::filesystem::path& path) {
  return decode_vector(read_file(path));
}

}  // namespace shiftaudit
