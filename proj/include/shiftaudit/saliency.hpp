#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shiftaudit/dataset.hpp"
#include "shiftaudit/mlp.hpp"
#include "shiftaudit/patterns.hpp"
#include "shiftaudit/rng.hpp"
#include "shiftaudit/tensor.hpp"

namespace shiftaudit {

enum class Method : std::uint8_t { grad, gb, pn, gxi, ig_black, ig_zero, dtd_lrp, dtd_pa };

inline constexpr std::array<Method, 8> kBaseMethods = {Method::grad,     Method::gb,      Method::pn,
                                                       Method::gxi,      Method::ig_black, Method::ig_zero,
                                                       Method::dtd_lrp,  Method::dtd_pa};

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::grad: return "grad";
    case Method::gb: return "gb";
    case Method::pn: return "pn";
    case Method::gxi: return "gxi";
    case Method::ig_black: return "ig-black";
    case Method::ig_zero: return "ig-zero";
    case Method::dtd_lrp: return "dtd-lrp";
    case Method::dtd_pa: return "dtd-pa";
  }
  return "?";
}

/// A base method, optionally wrapped in SmoothGrad. Text form: `grad`, `ig-black`, `sg-dtd-pa`...
struct MethodId {
  Method base = Method::grad;
  bool smoothed = false;

  std::string str() const { return (smoothed ? "sg-" : "") + std::string(method_name(base)); }

  static MethodId parse(std::string_view s) {
    MethodId id;
    if (s.starts_with("sg-")) {
      id.smoothed = true;
      s.remove_prefix(3);
    }
    for (Method m : kBaseMethods) {
      if (method_name(m) == s) {
        id.base = m;
        return id;
      }
    }
    throw ArgumentError("unknown saliency method '" + std::string(s) + "'");
  }

  bool operator==(const MethodId&) const = default;
};

/// The eight base methods followed by their SmoothGrad wrappers.
inline std::vector<MethodId> all_method_ids() {
  std::vector<MethodId> ids;
  for (bool sg : {false, true}) {
    for (Method m : kBaseMethods) ids.push_back({m, sg});
  }
  return ids;
}

/// Per-input-dimension attribution or signal for one sample and output.
struct SaliencyMap {
  Tensor values;
  MethodId method;
  std::size_t output = 0;
  std::size_t sample = 0;
  std::size_t stabilized = 0;       // z-rule denominators replaced by the stabilizer
  std::size_t degenerate_hits = 0;  // backward signal routed through a fallback pattern
};

enum class ReferenceKind : std::uint8_t { zero_vector, black_image, pattern_root };

/// Reference (baseline / root) point of IG and DTD. `values` is empty for pattern_root, whose
/// root is defined per neuron.
struct ReferencePoint {
  ReferenceKind kind = ReferenceKind::zero_vector;
  Tensor values;
};

/// zero_vector gives zeros; black_image gives a uniform image of the smallest pixel in `d`
/// (taken from the data as given, i.e. after any shift).
inline ReferencePoint resolve_baseline(ReferenceKind kind, const Dataset& d) {
  switch (kind) {
    case ReferenceKind::zero_vector:
      return {kind, Tensor({d.input_dim()})};
    case ReferenceKind::black_image:
      if (d.size() == 0) throw ArgumentError("black-image baseline needs a non-empty dataset");
      return {kind, Tensor({d.input_dim()}, min(d.images))};
    case ReferenceKind::pattern_root:
      return {kind, Tensor()};
  }
  throw ArgumentError("unknown reference kind");
}

inline Tensor gradient(const MlpModel& model, const Tensor& x, std::size_t j) {
  return input_gradient(model, x, j);
}

/// Backward pass in which every ReLU both applies the forward mask and zeroes negative signal.
inline Tensor guided_backprop(const MlpModel& model, const Tensor& x, std::size_t j) {
  check_output_index(model, j);
  const auto pass = forward(model, x);
  return backpropagate(model, one_hot(model.num_classes(), j), weight_projection(model),
                       [&pass](std::size_t l, Tensor& s) {
                         for (std::size_t i = 0; i < s.size(); ++i) {
                           if (!pass.active(l, i) || s[i] < 0.0) s[i] = 0.0;
                         }
                       });
}

namespace detail {

/// `Σᵢ s_i · rowᵢ` where `row_i` is `A_i` or `W_i ⊙ A_i`; counts signal sent through fallback
/// patterns.
inline Tensor pattern_projection(const DenseLayer& layer, const LayerPatterns& lp, const Tensor& s,
                                 bool times_weights, std::size_t& degenerate_hits) {
  Tensor out({layer.inputs()});
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == 0.0) continue;
    if (lp.degenerate[i]) ++degenerate_hits;
    const auto a = lp.patterns.row(i);
    if (!times_weights) {
      axpy(s[i], a, out.values());
      continue;
    }
    const auto w = layer.weights.row(i);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w[k] * a[k] * s[i];
  }
  return out;
}

}  // namespace detail

/// PatternNet: the gradient backward pass with every layer's weights replaced by its patterns.
inline Tensor pattern_net(const MlpModel& model, const PatternSet& patterns, const Tensor& x, std::size_t j,
                          std::size_t* degenerate_hits = nullptr) {
  check_output_index(model, j);
  check_patterns(model, patterns);
  const auto pass = forward(model, x);
  std::size_t hits = 0;
  Tensor out = backpropagate(
      model, one_hot(model.num_classes(), j),
      [&](std::size_t l, const Tensor& s) {
        return detail::pattern_projection(model.layers[l], patterns.layers[l], s, false, hits);
      },
      relu_mask_gate(pass));
  if (degenerate_hits) *degenerate_hits = hits;
  return out;
}

inline Tensor gradient_times_input(const MlpModel& model, const Tensor& x, std::size_t j) {
  return mul(input_gradient(model, x, j), x);
}

/// Integrated gradients, `(x − x₀) ⊙ ∫₀¹ ∇f_j(x₀ + α(x − x₀)) dα`, with the integral taken by
/// the midpoint rule at α = (k − ½)/steps, k = 1..steps.
inline Tensor integrated_gradients(const MlpModel& model, const Tensor& x, const ReferencePoint& ref,
                                   int steps, std::size_t j) {
  if (steps < 1) throw ArgumentError("integrated gradients needs at least one step");
  if (ref.kind == ReferenceKind::pattern_root) throw ArgumentError("integrated gradients needs an explicit baseline");
  check_output_index(model, j);
  const Tensor diff = sub(x, ref.values);
  Tensor total({x.size()});
  Tensor point({x.size()});
  for (int k = 1; k <= steps; ++k) {
    const double alpha = (static_cast<double>(k) - 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < x.size(); ++i) point[i] = ref.values[i] + alpha * diff[i];
    const Tensor g = input_gradient(model, point, j);
    for (std::size_t i = 0; i < x.size(); ++i) total[i] += g[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) total[i] = diff[i] * (total[i] / static_cast<double>(steps));
  return total;
}

/// Deep Taylor decomposition settings.
struct DtdOptions {
  /// Add the neuron's bias to the z-rule denominator `wᵀx`. Off by default: without it every
  /// layer conserves relevance exactly.
  bool include_bias = false;
  /// Denominators with |z| below this are replaced by sign(z)·epsilon.
  double epsilon = 1e-9;
};

struct DtdResult {
  Tensor relevance;                     // attribution on the input
  std::vector<Tensor> layer_relevance;  // [l] on the input of layer l; [depth] on the logits
  std::size_t stabilized = 0;
  std::size_t degenerate_hits = 0;
};

/// Deep Taylor decomposition of logit j.
///
/// The logit layer starts with `s_j = y_j` and zeros elsewhere. Each layer redistributes the
/// relevance of its neurons to its inputs:
///   zero_vector root (z-rule / LRP):  s_in += w ⊙ x / (wᵀx) · s_i
///   black_image root:                 s_in += w ⊙ (x − x₀) / (wᵀx) · s_i on the input layer,
///                                     z-rule on hidden layers
///   pattern_root (PatternAttribution): s_in += w ⊙ a · s_i
/// Relevance entering a ReLU layer from above is kept only on active units.
inline DtdResult dtd(const MlpModel& model, const Tensor& x, const ReferencePoint& root, std::size_t j,
                     const PatternSet* patterns = nullptr, const DtdOptions& opt = {}) {
  check_output_index(model, j);
  if (root.kind == ReferenceKind::pattern_root) {
    if (!patterns) throw ArgumentError("DTD with a pattern root needs a pattern set");
    check_patterns(model, *patterns);
  }
  if (root.kind == ReferenceKind::black_image && root.values.size() != model.input_dim()) {
    throw DimensionError("DTD root point does not match the model input");
  }
  const auto pass = forward(model, x);
  DtdResult r;
  r.layer_relevance.resize(model.depth() + 1);

  Tensor s({model.num_classes()});
  s[j] = pass.logits[j];
  r.layer_relevance[model.depth()] = s;

  for (std::size_t l = model.depth(); l-- > 0;) {
    const auto& layer = model.layers[l];
    if (layer.relu) relu_mask_gate(pass)(l, s);
    const Tensor& in = pass.inputs[l];
    Tensor out({layer.inputs()});
    if (root.kind == ReferenceKind::pattern_root) {
      out = detail::pattern_projection(layer, patterns->layers[l], s, true, r.degenerate_hits);
    } else {
      const bool explicit_root = root.kind == ReferenceKind::black_image && l == 0;
      for (std::size_t i = 0; i < layer.outputs(); ++i) {
        if (s[i] == 0.0) continue;
        const auto w = layer.weights.row(i);
        double z = dot(w, in.values());
        if (opt.include_bias) z += layer.biases[i];
        if (std::abs(z) < opt.epsilon) {
          z = z >= 0.0 ? opt.epsilon : -opt.epsilon;
          ++r.stabilized;
        }
        const double f = s[i] / z;
        for (std::size_t k = 0; k < out.size(); ++k) {
          const double v = explicit_root ? in[k] - root.values[k] : in[k];
          out[k] += w[k] * v * f;
        }
      }
    }
    s = std::move(out);
    r.layer_relevance[l] = s;
  }
  r.relevance = std::move(s);
  return r;
}

struct SmoothGradConfig {
  std::size_t n_samples = 50;
  double sigma = 0.15;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_samples < 1) throw ArgumentError("SmoothGrad needs at least one noisy sample");
    if (!(sigma >= 0.0)) throw ArgumentError("SmoothGrad sigma must be non-negative");
  }
};

/// Mean of `base(x + ε)` over N draws ε ~ N(0, σ²). The noise stream is
/// `Rng::derive(cfg.seed, sample_id)`, so twin networks given the same sample id see the same
/// noise. With σ = 0 the result is `base(x)`.
template <class Base>
Tensor smoothgrad(Base&& base, const Tensor& x, const SmoothGradConfig& cfg, std::uint64_t sample_id) {
  cfg.validate();
  if (cfg.sigma == 0.0) return base(x);
  Rng rng = Rng::derive(cfg.seed, sample_id);
  Tensor total(x.shape());
  for (std::size_t n = 0; n < cfg.n_samples; ++n) {
    const Tensor noisy = add(x, gaussian(rng, x.shape(), cfg.sigma));
    const Tensor m = base(noisy);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += m[i];
  }
  return scale(total, 1.0 / static_cast<double>(cfg.n_samples));
}

/// Everything needed to evaluate any method id against one network.
struct Explainer {
  const MlpModel& model;
  const PatternSet* patterns = nullptr;  // required by pn and dtd-pa
  ReferencePoint black;                  // resolved black-image baseline of this network's data
  int ig_steps = 300;
  DtdOptions dtd_options;
  SmoothGradConfig smoothing;

  SaliencyMap explain(MethodId id, const Tensor& x, std::size_t j, std::size_t sample_id) const {
    SaliencyMap map;
    map.method = id;
    map.output = j;
    map.sample = sample_id;
    auto base = [&](const Tensor& input) { return run_base(id.base, input, j, map); };
    map.values = id.smoothed ? smoothgrad(base, x, smoothing, sample_id) : base(x);
    return map;
  }

 private:
  Tensor run_base(Method m, const Tensor& x, std::size_t j, SaliencyMap& map) const {
    switch (m) {
      case Method::grad: return gradient(model, x, j);
      case Method::gb: return guided_backprop(model, x, j);
      case Method::pn: {
        std::size_t hits = 0;
        auto v = pattern_net(model, require_patterns(), x, j, &hits);
        map.degenerate_hits += hits;
        return v;
      }
      case Method::gxi: return gradient_times_input(model, x, j);
      case Method::ig_black:
        if (black.kind != ReferenceKind::black_image) throw ArgumentError("ig-black needs a resolved black baseline");
        return integrated_gradients(model, x, black, ig_steps, j);
      case Method::ig_zero:
        return integrated_gradients(model, x, {ReferenceKind::zero_vector, Tensor({x.size()})}, ig_steps, j);
      case Method::dtd_lrp: {
        auto r = dtd(model, x, {ReferenceKind::zero_vector, Tensor({x.size()})}, j, nullptr, dtd_options);
        map.stabilized += r.stabilized;
        return std::move(r.relevance);
      }
      case Method::dtd_pa: {
        auto r = dtd(model, x, {ReferenceKind::pattern_root, Tensor()}, j, &require_patterns(), dtd_options);
        map.degenerate_hits += r.degenerate_hits;
        return std::move(r.relevance);
      }
    }
    throw ArgumentError("unknown method");
  }

  const PatternSet& require_patterns() const {
    if (!patterns) throw ArgumentError("this method needs estimated patterns");
    return *patterns;
  }
};

}  // namespace shiftaudit
