#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "shiftaudit/idx.hpp"
#include "shiftaudit/tensor.hpp"

namespace shiftaudit {

inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;
inline constexpr std::size_t kNumClasses = 10;

/// Labelled samples, one image per row of `images` (row-major pixels, top-left origin).
struct Dataset {
  Tensor images;                 // n × input_dim
  std::vector<int> labels;       // class index per row
  double encoding_offset = 0.0;  // constant added on top of the [0,1] encoding, if uniform

  std::size_t size() const { return labels.size(); }
  std::size_t input_dim() const { return images.cols(); }
  Tensor sample(std::size_t i) const { return images.row_tensor(i); }

  void validate() const {
    if (images.rank() != 2) throw DimensionError("dataset images must be an n×d matrix");
    if (images.rows() != labels.size()) {
      throw DimensionError("dataset has " + std::to_string(images.rows()) + " images but " +
                           std::to_string(labels.size()) + " labels");
    }
  }
};

/// Rows `indices` of `d`, in the given order.
inline Dataset subset(const Dataset& d, const std::vector<std::size_t>& indices) {
  Dataset out{Tensor({indices.size(), d.input_dim()}), {}, d.encoding_offset};
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= d.size()) throw IndexError("sample index " + std::to_string(indices[k]) + " out of range");
    auto src = d.images.row(indices[k]);
    std::copy(src.begin(), src.end(), out.images.row(k).begin());
    out.labels.push_back(d.labels[indices[k]]);
  }
  return out;
}

/// The first `n` samples of `d` (all of them when `n` exceeds the size).
inline Dataset head(const Dataset& d, std::size_t n) {
  std::vector<std::size_t> idx(std::min(n, d.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return subset(d, idx);
}

enum class ShiftKind { constant_scalar, checkerboard, image, attack };

inline std::string_view to_string(ShiftKind k) {
  switch (k) {
    case ShiftKind::constant_scalar: return "constant-scalar";
    case ShiftKind::checkerboard: return "checkerboard";
    case ShiftKind::image: return "image";
    case ShiftKind::attack: return "attack";
  }
  return "unknown";
}

/// The constant vector added to every input sample.
struct ShiftVector {
  Tensor values;
  ShiftKind kind = ShiftKind::constant_scalar;
};

/// Maps raw byte intensities to [0, 1] by dividing by 255.
inline Dataset encode_unit(const Tensor& raw, std::vector<int> labels) {
  for (double v : raw.values()) {
    if (!(v >= 0.0 && v <= 255.0)) throw RangeError("raw pixel value " + std::to_string(v) + " outside [0, 255]");
  }
  const std::size_t n = raw.rank() == 0 ? 0 : raw.shape()[0];
  const std::size_t dim = n == 0 ? 0 : raw.size() / n;
  Dataset d{raw.reshaped({n, dim}), std::move(labels), 0.0};
  for (double& v : d.images.values()) v /= 255.0;
  d.validate();
  return d;
}

/// `x₂ = x₁ + m` for every sample.
inline Dataset apply_shift(const Dataset& d, const ShiftVector& m) {
  if (m.values.size() != d.input_dim()) {
    throw DimensionError("shift of length " + std::to_string(m.values.size()) +
                         " does not match input dimension " + std::to_string(d.input_dim()));
  }
  Dataset out = d;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto r = out.images.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] += m.values[k];
  }
  if (m.kind == ShiftKind::constant_scalar && !m.values.empty()) out.encoding_offset += m.values[0];
  return out;
}

inline ShiftVector make_scalar_shift(double v, std::size_t dim = kImagePixels) {
  return {Tensor({dim}, v), ShiftKind::constant_scalar};
}

/// 28×28 tiling of `cell_px`-sized blocks alternating between 0 and `amplitude`, starting with
/// 0 in the top-left cell: entry (r, c) is `amplitude · ((r / cell + c / cell) mod 2)`.
inline ShiftVector make_checkerboard_shift(int cell_px, double amplitude) {
  if (cell_px < 1) throw ArgumentError("checkerboard cell size must be at least 1 pixel");
  const auto cell = static_cast<std::size_t>(cell_px);
  Tensor v({kImagePixels});
  for (std::size_t r = 0; r < kImageSide; ++r) {
    for (std::size_t c = 0; c < kImageSide; ++c) {
      v[r * kImageSide + c] = ((r / cell + c / cell) % 2 == 1) ? amplitude : 0.0;
    }
  }
  return {std::move(v), ShiftKind::checkerboard};
}

/// Flattens a 28×28 image with values in [0, 1] and multiplies it by `scale`.
inline ShiftVector image_to_shift(const Tensor& img, double scale) {
  if (img.rank() != 2 || img.rows() != kImageSide || img.cols() != kImageSide) {
    throw DimensionError("shift image must be 28x28, got " + Tensor::shape_string(img.shape()));
  }
  for (double v : img.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw RangeError("shift image values must lie in [0, 1]");
  }
  return {shiftaudit::scale(img.reshaped({kImagePixels}), scale), ShiftKind::image};
}

/// Loads one split of MNIST from `dir`, which must contain the uncompressed files
/// `train-images-idx3-ubyte`/`train-labels-idx1-ubyte` (split "train") or
/// `t10k-images-idx3-ubyte`/`t10k-labels-idx1-ubyte` (split "test").
inline Dataset load_mnist(const std::filesystem::path& dir, std::string_view split) {
  std::string prefix;
  if (split == "train") {
    prefix = "train";
  } else if (split == "test") {
    prefix = "t10k";
  } else {
    throw ArgumentError("unknown MNIST split '" + std::string(split) + "'");
  }
  const Tensor images = read_idx(dir / (prefix + "-images-idx3-ubyte"));
  const Tensor labels = read_idx(dir / (prefix + "-labels-idx1-ubyte"));
  if (images.rank() != 3 || labels.rank() != 1 || images.shape()[0] != labels.size()) {
    throw DimensionError("MNIST images " + Tensor::shape_string(images.shape()) +
                         " do not match labels " + Tensor::shape_string(labels.shape()));
  }
  std::vector<int> ys(labels.size());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (labels[i] >= static_cast<double>(kNumClasses)) throw RangeError("MNIST label out of range");
    ys[i] = static_cast<int>(labels[i]);
  }
  return encode_unit(images, std::move(ys));
}

}  // namespace shiftaudit
