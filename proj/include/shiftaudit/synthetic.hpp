#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include "shiftaudit/dataset.hpp"
#include "shiftaudit/rng.hpp"

namespace shiftaudit {

/// Raw (byte-valued) images plus labels, before encoding.
struct RawDigits {
  Tensor images;  // n × 28 × 28, integer values in [0, 255]
  std::vector<int> labels;
};

namespace detail {

// Seven-segment layout: a top, b upper right, c lower right, d bottom, e lower left,
// f upper left, g middle.
inline constexpr std::array<std::uint8_t, 10> kSegments = {
    0b0111111,  // 0: a b c d e f
    0b0000110,  // 1: b c
    0b1011011,  // 2: a b d e g
    0b1001111,  // 3: a b c d g
    0b1100110,  // 4: b c f g
    0b1101101,  // 5: a c d f g
    0b1111101,  // 6: a c d e f g
    0b0000111,  // 7: a b c
    0b1111111,  // 8
    0b1101111,  // 9: a b c d f g
};

inline double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace detail

/// Programmatic digit-like glyphs: seven-segment digits drawn with random offset, slant, stroke
/// width, corner jitter and ink intensity on a black background. Labels are `i mod 10`.
/// Deterministic for a given seed; used where the real MNIST files are not available.
inline RawDigits make_synthetic_raw(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  RawDigits out{Tensor({n, kImageSide, kImageSide}), std::vector<int>(n)};
  for (std::size_t s = 0; s < n; ++s) {
    const int digit = static_cast<int>(s % 10);
    out.labels[s] = digit;

    const double cx = 14.0 + rng.uniform(-3.0, 3.0);
    const double cy = 14.0 + rng.uniform(-2.5, 2.5);
    const double half_w = rng.uniform(4.0, 6.0);
    const double half_h = rng.uniform(8.0, 10.0);
    const double slant = rng.uniform(-0.25, 0.25);
    const double width = rng.uniform(1.4, 2.6);
    const double ink = rng.uniform(0.75, 1.0);

    // Six corner points: top-left, top-right, mid-left, mid-right, bottom-left, bottom-right.
    std::array<double, 12> pt{};
    const double ys[3] = {-half_h, 0.0, half_h};
    for (int row = 0; row < 3; ++row) {
      for (int col = 0; col < 2; ++col) {
        const double y = ys[row] + rng.uniform(-1.0, 1.0);
        const double x = (col == 0 ? -half_w : half_w) + rng.uniform(-1.0, 1.0) - slant * y;
        pt[static_cast<std::size_t>((row * 2 + col) * 2)] = cx + x;
        pt[static_cast<std::size_t>((row * 2 + col) * 2 + 1)] = cy + y;
      }
    }
    // Segment endpoints as corner indices (a, b, c, d, e, f, g).
    constexpr int seg[7][2] = {{0, 1}, {1, 3}, {3, 5}, {4, 5}, {2, 4}, {0, 2}, {2, 3}};

    for (std::size_t r = 0; r < kImageSide; ++r) {
      for (std::size_t c = 0; c < kImageSide; ++c) {
        const double px = static_cast<double>(c) + 0.5, py = static_cast<double>(r) + 0.5;
        double d = 1e9;
        for (int k = 0; k < 7; ++k) {
          if (!((detail::kSegments[static_cast<std::size_t>(digit)] >> k) & 1)) continue;
          const auto a = static_cast<std::size_t>(seg[k][0] * 2), b = static_cast<std::size_t>(seg[k][1] * 2);
          d = std::min(d, detail::segment_distance(px, py, pt[a], pt[a + 1], pt[b], pt[b + 1]));
        }
        const double v = ink * std::clamp(1.0 - std::max(0.0, d - 0.5 * width), 0.0, 1.0);
        out.images[(s * kImageSide + r) * kImageSide + c] = std::round(255.0 * v);
      }
    }
  }
  return out;
}

/// Frozen seeds of the synthetic train and test splits, so every tool regenerates the same corpus.
inline constexpr std::uint64_t kSyntheticTrainSeed = 0x5eed0001;
inline constexpr std::uint64_t kSyntheticTestSeed = 0x5eed0002;

/// Synthetic digits in the [0, 1] encoding.
inline Dataset make_synthetic_digits(std::size_t n, std::uint64_t seed) {
  auto raw = make_synthetic_raw(n, seed);
  return encode_unit(raw.images, std::move(raw.labels));
}

}  // namespace shiftaudit
