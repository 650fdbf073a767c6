#pragma once

#include <cmath>
#include <filesystem>

#include "shiftaudit/dataset.hpp"
#include "shiftaudit/pgm.hpp"
#include "shiftaudit/tensor.hpp"

namespace shiftaudit {

/// 28×28 graymap of a signed map: `v ↦ round(255 · (v / (2 max|v|) + ½))`, so zero is 128,
/// the largest positive value 255 and its negative 0. An all-zero map renders uniformly 128.
inline GrayImage heatmap_image(const Tensor& map) {
  if (map.size() != kImagePixels) {
    throw DimensionError("heatmaps are 28x28; map has " + std::to_string(map.size()) + " values");
  }
  if (!all_finite(map)) throw RangeError("cannot render a map with non-finite values");
  const double peak = max_abs(map);
  GrayImage img{kImageSide, kImageSide, std::vector<std::uint8_t>(kImagePixels, 128)};
  if (peak == 0.0) return img;
  for (std::size_t i = 0; i < kImagePixels; ++i) {
    const double v = std::round(255.0 * (map[i] / (2.0 * peak) + 0.5));
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return img;
}

inline void render_heatmap(const Tensor& map, const std::filesystem::path& path) {
  write_pgm(path, heatmap_image(map));
}

}  // namespace shiftaudit
