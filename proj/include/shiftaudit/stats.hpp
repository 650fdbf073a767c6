#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "shiftaudit/tensor.hpp"

namespace shiftaudit {

/// Pearson correlation. When either input has zero variance the correlation is undefined; we
/// return 1 for identical inputs and 0 otherwise, so audit statistics stay finite.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("pearson: length mismatch");
  if (a.empty()) throw ArgumentError("pearson: empty input");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    return std::equal(a.begin(), a.end(), b.begin()) ? 1.0 : 0.0;
  }
  return sab / std::sqrt(saa * sbb);
}

inline double pearson(const Tensor& a, const Tensor& b) { return pearson(a.values(), b.values()); }

/// Ranks starting at 1, ties receive their average rank.
inline std::vector<double> fractional_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("spearman: length mismatch");
  const auto ra = fractional_ranks(a);
  const auto rb = fractional_ranks(b);
  return pearson(ra, rb);
}

inline double spearman(const Tensor& a, const Tensor& b) {
  return spearman(a.values(), b.values());
}

}  // namespace shiftaudit
