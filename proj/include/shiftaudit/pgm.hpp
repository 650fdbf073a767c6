#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <string>

#include "shiftaudit/io.hpp"
#include "shiftaudit/tensor.hpp"

namespace shiftaudit {

/// Binary portable graymap (P5). Pixels are stored row-major from the top-left corner.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  /// Pixel values scaled to [0, 1] as a `height × width` tensor.
  Tensor to_unit_tensor(unsigned maxval = 255) const {
    Tensor t({height, width});
    for (std::size_t i = 0; i < pixels.size(); ++i) t[i] = pixels[i] / static_cast<double>(maxval);
    return t;
  }
};

namespace detail {

inline std::size_t pgm_token(std::span<const std::uint8_t> b, std::size_t& pos) {
  for (;;) {
    while (pos < b.size() && std::isspace(b[pos])) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) throw FormatError("PGM header: expected a number", pos);
  std::size_t v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos] - '0');
    if (v > 1'000'000) throw FormatError("PGM header value too large", pos);
    ++pos;
  }
  return v;
}

}  // namespace detail

/// Parses a P5 graymap with maxval at most 255. Pixel values are returned raw; `maxval` is
/// written to the out parameter when given.
inline GrayImage parse_pgm(std::span<const std::uint8_t> b, unsigned* maxval_out = nullptr) {
  if (b.size() < 2 || b[0] != 'P' || b[1] != '5') throw FormatError("not a binary PGM (missing P5 magic)", 0);
  std::size_t pos = 2;
  GrayImage img;
  img.width = detail::pgm_token(b, pos);
  img.height = detail::pgm_token(b, pos);
  const std::size_t maxval = detail::pgm_token(b, pos);
  if (maxval == 0 || maxval > 255) throw FormatError("PGM maxval must be in [1, 255]", pos);
  if (pos >= b.size() || !std::isspace(b[pos])) throw FormatError("PGM header must end in whitespace", pos);
  ++pos;
  const std::size_t n = img.width * img.height;
  if (b.size() - pos < n) throw FormatError("PGM pixel data truncated", b.size());
  img.pixels.assign(b.begin() + static_cast<std::ptrdiff_t>(pos),
                    b.begin() + static_cast<std::ptrdiff_t>(pos + n));
  for (auto p : img.pixels) {
    if (p > maxval) throw FormatError("PGM pixel exceeds maxval", pos);
  }
  if (maxval_out) *maxval_out = static_cast<unsigned>(maxval);
  return img;
}

inline Bytes serialize_pgm(const GrayImage& img) {
  if (img.pixels.size() != img.width * img.height) throw DimensionError("PGM pixel count does not match size");
  const std::string header =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

/// Reads a P5 file into a `height × width` tensor with values in [0, 1].
inline Tensor read_pgm_unit(const std::filesystem::path& path) {
  unsigned maxval = 255;
  const auto img = parse_pgm(read_file(path), &maxval);
  return img.to_unit_tensor(maxval);
}

inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  write_file(path, serialize_pgm(img));
}

}  // namespace shiftaudit
