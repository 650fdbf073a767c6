#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "shiftaudit/dataset.hpp"
#include "shiftaudit/mlp.hpp"
#include "shiftaudit/tensor.hpp"

namespace shiftaudit {

/// Which mean of y enters the ReLU pattern numerator `E₊[x y] − E₊[x] E[y]`.
///
/// `positive_regime` takes the mean of y over the same positive subset as the other two terms,
/// which makes the numerator a conditional covariance and therefore unchanged when a constant is
/// added to x. `global` takes E[y] over all samples, as the formula is written; it leaves a term
/// `E₊[x](E₊[y] − E[y])` that moves with a shift of x.
enum class PatternMeanConvention : std::uint8_t { positive_regime = 0, global = 1 };

inline std::string_view to_string(PatternMeanConvention c) {
  return c == PatternMeanConvention::positive_regime ? "positive-regime" : "global";
}

/// Signal patterns of one layer, same shape as its weights.
struct LayerPatterns {
  Tensor patterns;                     // outputs × inputs, row i is the pattern a of neuron i
  Tensor normalization;                // aᵀw per neuron
  std::vector<std::uint8_t> degenerate;  // 1 where the fallback a = w / ‖w‖² was used

  bool operator==(const LayerPatterns&) const = default;
};

struct PatternSet {
  std::vector<LayerPatterns> layers;
  PatternMeanConvention convention = PatternMeanConvention::positive_regime;
  std::uint64_t source_samples = 0;  // number of samples the statistics were taken over

  std::size_t degenerate_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) {
      for (auto f : l.degenerate) n += f;
    }
    return n;
  }

  bool operator==(const PatternSet&) const = default;
};

inline constexpr double kPatternDenominatorFloor = 1e-12;

namespace detail {

/// Streaming mean and co-moment of (x, y) pairs for one neuron (Welford update). The co-moment
/// is built from deviations, so adding a constant to every x leaves it unchanged up to rounding.
class CovarianceAccumulator {
 public:
  explicit CovarianceAccumulator(std::size_t dim) : mean_x_(dim, 0.0), comoment_(dim, 0.0) {}

  void add(std::span<const double> x, double y) {
    ++count_;
    const double inv_n = 1.0 / static_cast<double>(count_);
    mean_y_ += (y - mean_y_) * inv_n;
    const double dy_new = y - mean_y_;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double dx = x[k] - mean_x_[k];
      mean_x_[k] += dx * inv_n;
      comoment_[k] += dx * dy_new;
    }
  }

  std::size_t count() const noexcept { return count_; }
  double mean_y() const noexcept { return mean_y_; }
  const std::vector<double>& mean_x() const noexcept { return mean_x_; }

  /// E[x y] − E[x] E[y] over the accumulated samples.
  std::vector<double> covariance() const {
    std::vector<double> c(comoment_.size());
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = comoment_[k] / static_cast<double>(count_);
    return c;
  }

 private:
  std::size_t count_ = 0;
  double mean_y_ = 0.0;
  std::vector<double> mean_x_;
  std::vector<double> comoment_;
};

struct PatternEstimate {
  Tensor pattern;
  bool degenerate = false;
};

/// `a = v / (wᵀ v)`, or the fallback `w / ‖w‖²` when the normalizer vanishes.
inline PatternEstimate normalize_pattern(std::vector<double> v, std::span<const double> w, bool usable) {
  const double denom = usable ? dot(v, w) : 0.0;
  if (usable && std::abs(denom) >= kPatternDenominatorFloor && std::isfinite(denom)) {
    for (double& x : v) x /= denom;
    return {Tensor::vector(std::move(v)), false};
  }
  const double ww = dot(w, w);
  std::vector<double> a(w.begin(), w.end());
  if (ww > 0.0) {
    for (double& x : a) x /= ww;
  }
  return {Tensor::vector(std::move(a)), true};
}

inline void check_pattern_inputs(const Tensor& xs, const Tensor& ys, const Tensor& w) {
  if (xs.rank() != 2 || ys.rank() != 1 || w.rank() != 1 || xs.rows() != ys.size() || xs.cols() != w.size()) {
    throw DimensionError("pattern estimation: xs " + Tensor::shape_string(xs.shape()) + ", ys " +
                         Tensor::shape_string(ys.shape()) + " and w " + Tensor::shape_string(w.shape()) +
                         " do not fit together");
  }
}

}  // namespace detail

/// Linear-model signal pattern `a = cov[x, y] / (wᵀ cov[x, y])`.
inline Tensor estimate_linear_pattern(const Tensor& xs, const Tensor& ys, const Tensor& w) {
  detail::check_pattern_inputs(xs, ys, w);
  if (xs.rows() < 2) throw ArgumentError("linear pattern needs at least two samples");
  detail::CovarianceAccumulator acc(w.size());
  for (std::size_t i = 0; i < xs.rows(); ++i) acc.add(xs.row(i), ys[i]);
  auto est = detail::normalize_pattern(acc.covariance(), w.values(), true);
  if (est.degenerate) throw DegeneratePatternError("wᵀcov[x,y] vanishes; the linear pattern is undefined");
  return est.pattern;
}

namespace detail {

inline PatternEstimate relu_pattern_from(const CovarianceAccumulator& positive, double mean_y_all,
                                         std::span<const double> w, PatternMeanConvention convention) {
  if (positive.count() == 0) return normalize_pattern({}, w, false);
  auto v = positive.covariance();
  if (convention == PatternMeanConvention::global) {
    // E₊[xy] − E₊[x]E[y] = cov₊[x,y] + E₊[x](E₊[y] − E[y])
    const double gap = positive.mean_y() - mean_y_all;
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += positive.mean_x()[k] * gap;
  }
  return normalize_pattern(std::move(v), w, true);
}

}  // namespace detail

/// Positive-regime pattern of a ReLU neuron,
/// `a = (E₊[x y] − E₊[x] E[y]) / wᵀ(E₊[x y] − E₊[x] E[y])`, with E₊ the mean over samples where
/// `y > 0`. Throws DegeneratePatternError when no sample is positive or the normalizer vanishes.
inline Tensor estimate_relu_pattern(const Tensor& xs, const Tensor& ys, const Tensor& w,
                                    PatternMeanConvention convention = PatternMeanConvention::positive_regime) {
  detail::check_pattern_inputs(xs, ys, w);
  detail::CovarianceAccumulator positive(w.size());
  double sum_y = 0.0;
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    sum_y += ys[i];
    if (ys[i] > 0.0) positive.add(xs.row(i), ys[i]);
  }
  if (positive.count() == 0) throw DegeneratePatternError("no sample has a positive output");
  const double mean_y = sum_y / static_cast<double>(xs.rows());
  auto est = detail::relu_pattern_from(positive, mean_y, w.values(), convention);
  if (est.degenerate) throw DegeneratePatternError("the ReLU pattern normalizer vanishes");
  return est.pattern;
}

/// Per-neuron patterns for every layer of `model`, from one sweep over `d`.
///
/// Each layer's x is its input activation and y the neuron's output. ReLU layers use the
/// positive-regime estimator (y > 0 is the same as a positive pre-activation); the final linear
/// layer uses the linear estimator over all samples. Neurons without usable statistics fall back
/// to `a = w / ‖w‖²` (which still satisfies aᵀw = 1) and are flagged.
inline PatternSet estimate_patterns(const MlpModel& model, const Dataset& d,
                                    PatternMeanConvention convention = PatternMeanConvention::positive_regime) {
  model.validate();
  d.validate();
  if (d.size() == 0) throw ArgumentError("pattern estimation needs a non-empty dataset");
  if (d.input_dim() != model.input_dim()) throw DimensionError("dataset width does not match model input");

  std::vector<std::vector<detail::CovarianceAccumulator>> acc(model.depth());
  std::vector<std::vector<double>> sum_y(model.depth());
  for (std::size_t l = 0; l < model.depth(); ++l) {
    const auto& layer = model.layers[l];
    acc[l].assign(layer.outputs(), detail::CovarianceAccumulator(layer.inputs()));
    sum_y[l].assign(layer.outputs(), 0.0);
  }

  for (std::size_t s = 0; s < d.size(); ++s) {
    const auto pass = forward(model, d.sample(s));
    for (std::size_t l = 0; l < model.depth(); ++l) {
      const bool relu = model.layers[l].relu;
      const auto x = pass.inputs[l].values();
      for (std::size_t i = 0; i < model.layers[l].outputs(); ++i) {
        const double z = pass.pre[l][i];
        const double y = relu ? (z > 0.0 ? z : 0.0) : z;
        sum_y[l][i] += y;
        if (!relu || y > 0.0) acc[l][i].add(x, y);
      }
    }
  }

  PatternSet set;
  set.convention = convention;
  set.source_samples = d.size();
  const double n = static_cast<double>(d.size());
  for (std::size_t l = 0; l < model.depth(); ++l) {
    const auto& layer = model.layers[l];
    LayerPatterns lp{Tensor(layer.weights.shape()), Tensor({layer.outputs()}),
                     std::vector<std::uint8_t>(layer.outputs(), 0)};
    for (std::size_t i = 0; i < layer.outputs(); ++i) {
      const auto w = layer.weights.row(i);
      detail::PatternEstimate est =
          layer.relu ? detail::relu_pattern_from(acc[l][i], sum_y[l][i] / n, w, convention)
                     : detail::normalize_pattern(acc[l][i].covariance(), w, acc[l][i].count() >= 2);
      std::copy(est.pattern.values().begin(), est.pattern.values().end(), lp.patterns.row(i).begin());
      lp.normalization[i] = dot(est.pattern.values(), w);
      lp.degenerate[i] = est.degenerate ? 1 : 0;
    }
    set.layers.push_back(std::move(lp));
  }
  return set;
}

/// Checks that `patterns` has the layer shapes of `model`.
inline void check_patterns(const MlpModel& model, const PatternSet& patterns) {
  if (patterns.layers.size() != model.depth()) throw DimensionError("pattern set depth does not match model");
  for (std::size_t l = 0; l < model.depth(); ++l) {
    if (patterns.layers[l].patterns.shape() != model.layers[l].weights.shape()) {
      throw DimensionError("pattern shape of layer " + std::to_string(l) + " does not match its weights");
    }
  }
}

/// PatternAttribution root point `x₀ = x − a (wᵀx)` of one neuron.
inline Tensor pattern_root_point(const Tensor& x, const Tensor& a, const Tensor& w) {
  require_same_shape(x, a, "pattern_root_point");
  require_same_shape(x, w, "pattern_root_point");
  const double wx = dot(w.values(), x.values());
  Tensor root = x;
  for (std::size_t k = 0; k < root.size(); ++k) root[k] -= a[k] * wx;
  return root;
}

}  // namespace shiftaudit
