#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>

#include "shiftaudit/error.hpp"
#include "shiftaudit/tensor.hpp"

namespace shiftaudit {

/// Seeded random stream.
///
/// The generator is SplitMix64 (state advanced by the golden-ratio increment, output passed
/// through the Stafford variant-13 finalizer). Uniform doubles take the top 53 bits, integers
/// below a bound use rejection sampling and normals use the Box-Muller transform. None of these
/// go through `<random>` distributions, whose output differs between standard libraries.
///
/// An Rng has a single owner: it is move-only.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  Rng(const Rng&) = delete;
  Rng& operator=(const Rng&) = delete;
  Rng(Rng&&) noexcept = default;
  Rng& operator=(Rng&&) noexcept = default;

  /// Independent stream for `(seed, stream)`, e.g. one stream per sample id.
  static Rng derive(std::uint64_t seed, std::uint64_t stream) {
    return Rng(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL)));
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ArgumentError("Rng::below: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  /// Standard normal sample.
  double normal() {
    if (spare_) {
      const double z = *spare_;
      spare_.reset();
      return z;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    return r * std::cos(theta);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  std::optional<double> spare_;
};

/// I.i.d. N(0, sigma²) samples of the given shape.
inline Tensor gaussian(Rng& rng, Tensor::Shape shape, double sigma) {
  if (!(sigma >= 0.0)) throw ArgumentError("gaussian: sigma must be non-negative");
  Tensor t(std::move(shape));
  if (sigma == 0.0) return t;
  for (double& v : t.values()) v = sigma * rng.normal();
  return t;
}

/// In-place Fisher-Yates shuffle.
template <class T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace shiftaudit
