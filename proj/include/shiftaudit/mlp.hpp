#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "shiftaudit/dataset.hpp"
#include "shiftaudit/rng.hpp"
#include "shiftaudit/tensor.hpp"

namespace shiftaudit {

/// Affine map `z = W x + b`, optionally followed by a ReLU.
struct DenseLayer {
  Tensor weights;  // outputs × inputs
  Tensor biases;   // outputs
  bool relu = true;

  std::size_t inputs() const { return weights.cols(); }
  std::size_t outputs() const { return weights.rows(); }

  bool operator==(const DenseLayer&) const = default;
};

/// Feed-forward ReLU network producing raw logits.
struct MlpModel {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().inputs(); }
  std::size_t num_classes() const { return layers.back().outputs(); }
  std::size_t depth() const { return layers.size(); }

  /// Checks that layer shapes chain and that the last layer is linear.
  void validate() const {
    if (layers.empty()) throw ArgumentError("model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      if (L.weights.rank() != 2 || L.biases.rank() != 1 || L.biases.size() != L.outputs()) {
        throw DimensionError("layer " + std::to_string(l) + ": bias length " +
                             std::to_string(L.biases.size()) + " does not match weight shape " +
                             Tensor::shape_string(L.weights.shape()));
      }
      if (l > 0 && L.inputs() != layers[l - 1].outputs()) {
        throw DimensionError("layer " + std::to_string(l) + " expects " + std::to_string(L.inputs()) +
                             " inputs but layer " + std::to_string(l - 1) + " produces " +
                             std::to_string(layers[l - 1].outputs()));
      }
    }
    if (layers.back().relu) throw ArgumentError("the final layer must be linear (raw logits)");
  }

  bool operator==(const MlpModel&) const = default;
};

/// Builds a model with the given layer widths, ReLU on every layer but the last.
///
/// Weights are drawn from U(-√(6/fan_in), √(6/fan_in)) in row-major order, layer by layer, from
/// `Rng(seed)`; biases start at zero.
inline MlpModel init_model(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  if (sizes.size() < 2) throw ArgumentError("a model needs at least an input and an output size");
  for (auto s : sizes) {
    if (s == 0) throw ArgumentError("layer sizes must be positive");
  }
  Rng rng(seed);
  MlpModel m;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(sizes[l]));
    DenseLayer layer{Tensor({sizes[l + 1], sizes[l]}), Tensor({sizes[l + 1]}), l + 2 < sizes.size()};
    for (double& w : layer.weights.values()) w = rng.uniform(-bound, bound);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

/// Everything a backward pass needs from the forward pass.
struct ForwardPass {
  std::vector<Tensor> inputs;  // inputs[l] is the input of layer l
  std::vector<Tensor> pre;     // pre-activations of layer l
  Tensor logits;

  bool active(std::size_t layer, std::size_t unit) const { return pre[layer][unit] > 0.0; }
};

inline ForwardPass forward(const MlpModel& model, const Tensor& x) {
  if (x.rank() != 1 || x.size() != model.input_dim()) {
    throw DimensionError("input of shape " + Tensor::shape_string(x.shape()) +
                         " does not match model input dimension " + std::to_string(model.input_dim()));
  }
  ForwardPass pass;
  pass.inputs.reserve(model.depth());
  pass.pre.reserve(model.depth());
  Tensor a = x;
  for (const auto& layer : model.layers) {
    Tensor z = matvec(layer.weights, a);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += layer.biases[i];
    pass.inputs.push_back(std::move(a));
    a = layer.relu ? map_values(z, [](double v) { return v > 0.0 ? v : 0.0; }) : z;
    pass.pre.push_back(std::move(z));
  }
  pass.logits = std::move(a);
  return pass;
}

inline Tensor logits(const MlpModel& model, const Tensor& x) { return forward(model, x).logits; }

inline void check_output_index(const MlpModel& model, std::size_t j) {
  if (j >= model.num_classes()) {
    throw IndexError("output index " + std::to_string(j) + " out of range for " +
                     std::to_string(model.num_classes()) + " outputs");
  }
}

/// Generic reverse sweep from the logits to the input.
///
/// `signal` starts on the logits. For each layer from the top, `gate(l, signal)` is applied when
/// the layer has a ReLU (turning an output-side signal into a pre-activation signal, in place),
/// then `project(l, signal)` returns the signal on the layer's input. Gradients, guided
/// backprop, PatternNet and PatternAttribution differ only in these two callbacks.
template <class Project, class Gate>
Tensor backpropagate(const MlpModel& model, Tensor signal, Project&& project, Gate&& gate) {
  for (std::size_t l = model.depth(); l-- > 0;) {
    if (model.layers[l].relu) gate(l, signal);
    signal = project(l, signal);
  }
  return signal;
}

/// ReLU derivative gate; a pre-activation of exactly zero counts as inactive.
inline auto relu_mask_gate(const ForwardPass& pass) {
  return [&pass](std::size_t l, Tensor& s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!pass.active(l, i)) s[i] = 0.0;
    }
  };
}

inline auto weight_projection(const MlpModel& model) {
  return [&model](std::size_t l, const Tensor& s) { return matvec_transposed(model.layers[l].weights, s); };
}

inline Tensor one_hot(std::size_t n, std::size_t j) {
  Tensor t({n});
  t[j] = 1.0;
  return t;
}

/// ∂ logits[j] / ∂ x, given a forward pass at x.
inline Tensor input_gradient(const MlpModel& model, const ForwardPass& pass, std::size_t j) {
  check_output_index(model, j);
  return backpropagate(model, one_hot(model.num_classes(), j), weight_projection(model),
                       relu_mask_gate(pass));
}

inline Tensor input_gradient(const MlpModel& model, const Tensor& x, std::size_t j) {
  check_output_index(model, j);
  return input_gradient(model, forward(model, x), j);
}

struct TrainConfig {
  int epochs = 10;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs < 1) throw ArgumentError("epochs must be at least 1");
    if (batch_size < 1) throw ArgumentError("batch size must be at least 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw ArgumentError("learning rate must be finite and non-negative");
    }
  }
};

/// Softmax cross-entropy of a logit vector against `label`.
inline double cross_entropy(std::span<const double> z, std::size_t label) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - zmax);
  return std::log(s) + zmax - z[label];
}

inline void check_labels(const MlpModel& model, const Dataset& d) {
  for (int y : d.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= model.num_classes()) {
      throw RangeError("label " + std::to_string(y) + " is not a valid class index");
    }
  }
}

inline double mean_loss(const MlpModel& model, const Dataset& d) {
  if (d.size() == 0) throw ArgumentError("mean_loss on an empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    total += cross_entropy(logits(model, d.sample(i)).values(), static_cast<std::size_t>(d.labels[i]));
  }
  return total / static_cast<double>(d.size());
}

inline double accuracy(const MlpModel& model, const Dataset& d) {
  if (d.size() == 0) throw ArgumentError("accuracy on an empty dataset");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (argmax(logits(model, d.sample(i))) == static_cast<std::size_t>(d.labels[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(d.size());
}

/// Called after every epoch with (epoch index, mean mini-batch loss over the epoch).
using EpochCallback = std::function<void(int, double)>;

/// Mini-batch SGD on the mean softmax cross-entropy.
///
/// Sample order is reshuffled every epoch from `Rng(cfg.seed)`; the last batch of an epoch may
/// be short. Single-threaded, so identical inputs give bit-identical models.
inline MlpModel train_sgd(MlpModel model, const Dataset& d, const TrainConfig& cfg,
                          const EpochCallback& on_epoch = {}) {
  cfg.validate();
  model.validate();
  d.validate();
  if (d.size() == 0) throw ArgumentError("cannot train on an empty dataset");
  if (d.input_dim() != model.input_dim()) throw DimensionError("dataset width does not match model input");
  check_labels(model, d);

  const std::size_t L = model.depth();
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<Tensor> acts(L + 1), pre(L);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t B = std::min(cfg.batch_size, order.size() - start);

      acts[0] = Tensor({B, d.input_dim()});
      for (std::size_t b = 0; b < B; ++b) {
        auto src = d.images.row(order[start + b]);
        std::copy(src.begin(), src.end(), acts[0].row(b).begin());
      }
      for (std::size_t l = 0; l < L; ++l) {
        const auto& layer = model.layers[l];
        Tensor z({B, layer.outputs()});
        for (std::size_t i = 0; i < layer.outputs(); ++i) {
          auto w = layer.weights.row(i);
          for (std::size_t b = 0; b < B; ++b) z(b, i) = dot(acts[l].row(b), w) + layer.biases[i];
        }
        acts[l + 1] = layer.relu ? map_values(z, [](double v) { return v > 0.0 ? v : 0.0; }) : z;
        pre[l] = std::move(z);
      }

      // Gradient of the batch-mean loss with respect to the logits.
      Tensor delta({B, model.num_classes()});
      double batch_loss = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        auto z = acts[L].row(b);
        const auto label = static_cast<std::size_t>(d.labels[order[start + b]]);
        batch_loss += cross_entropy(z, label);
        const double zmax = *std::max_element(z.begin(), z.end());
        double s = 0.0;
        for (double v : z) s += std::exp(v - zmax);
        for (std::size_t k = 0; k < z.size(); ++k) {
          delta(b, k) = (std::exp(z[k] - zmax) / s - (k == label ? 1.0 : 0.0)) / static_cast<double>(B);
        }
      }
      epoch_loss += batch_loss / static_cast<double>(B);
      ++batches;

      for (std::size_t l = L; l-- > 0;) {
        auto& layer = model.layers[l];
        if (layer.relu) {
          for (std::size_t k = 0; k < delta.size(); ++k) {
            if (!(pre[l][k] > 0.0)) delta[k] = 0.0;
          }
        }
        Tensor delta_in = l > 0 ? Tensor({B, layer.inputs()}) : Tensor();
        for (std::size_t i = 0; i < layer.outputs(); ++i) {
          auto w = layer.weights.row(i);
          double bias_grad = 0.0;
          if (l > 0) {
            for (std::size_t b = 0; b < B; ++b) {
              if (delta(b, i) != 0.0) axpy(delta(b, i), w, delta_in.row(b));
            }
          }
          for (std::size_t b = 0; b < B; ++b) {
            const double g = delta(b, i);
            if (g == 0.0) continue;
            axpy(-cfg.learning_rate * g, acts[l].row(b), w);
            bias_grad += g;
          }
          layer.biases[i] -= cfg.learning_rate * bias_grad;
        }
        delta = std::move(delta_in);
      }
    }
    if (on_epoch) on_epoch(epoch, epoch_loss / static_cast<double>(batches));
  }
  return model;
}

/// Twin of `model` for inputs shifted by `m`: only the first-layer biases change,
/// `b₂ = b₁ − W₁ m`, so `forward(twin, x + m)` reproduces `forward(model, x)`.
inline MlpModel compensate_bias(const MlpModel& model, const ShiftVector& m) {
  model.validate();
  if (m.values.rank() != 1 || m.values.size() != model.input_dim()) {
    throw DimensionError("shift of shape " + Tensor::shape_string(m.values.shape()) +
                         " does not match model input dimension " + std::to_string(model.input_dim()));
  }
  MlpModel twin = model;
  auto& first = twin.layers.front();
  const Tensor wm = matvec(first.weights, m.values);
  for (std::size_t i = 0; i < first.outputs(); ++i) first.biases[i] -= wm[i];
  return twin;
}

struct EquivalenceReport {
  double max_logit_deviation = 0.0;
  double max_gradient_deviation = 0.0;
  std::size_t mask_mismatches = 0;  // samples whose ReLU activation patterns differ
  bool equivalent = false;          // logit deviation within the requested tolerance
};

/// Compares `f₁(x₁ⁱ)` with `f₂(x₂ⁱ)` over paired samples: L∞ logit difference and L∞
/// difference of the input gradients of network 1's argmax logit.
inline EquivalenceReport check_equivalence(const MlpModel& m1, const MlpModel& m2, const Dataset& d1,
                                           const Dataset& d2, double tol) {
  if (d1.size() != d2.size()) {
    throw ArgumentError("paired datasets differ in size: " + std::to_string(d1.size()) + " vs " +
                        std::to_string(d2.size()));
  }
  EquivalenceReport r;
  for (std::size_t i = 0; i < d1.size(); ++i) {
    const auto p1 = forward(m1, d1.sample(i));
    const auto p2 = forward(m2, d2.sample(i));
    r.max_logit_deviation = std::max(r.max_logit_deviation, max_abs_diff(p1.logits, p2.logits));
    const std::size_t j = argmax(p1.logits);
    r.max_gradient_deviation =
        std::max(r.max_gradient_deviation, max_abs_diff(input_gradient(m1, p1, j), input_gradient(m2, p2, j)));
    bool same_masks = true;
    for (std::size_t l = 0; l < p1.pre.size() && same_masks; ++l) {
      if (!m1.layers[l].relu) continue;
      for (std::size_t k = 0; k < p1.pre[l].size(); ++k) {
        if (p1.active(l, k) != p2.active(l, k)) {
          same_masks = false;
          break;
        }
      }
    }
    if (!same_masks) ++r.mask_mismatches;
  }
  r.equivalent = r.max_logit_deviation <= tol;
  return r;
}

}  // namespace shiftaudit
