#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shiftaudit/dataset.hpp"
#include "shiftaudit/mlp.hpp"
#include "shiftaudit/model_io.hpp"
#include "shiftaudit/patterns.hpp"
#include "shiftaudit/rng.hpp"
#include "shiftaudit/saliency.hpp"
#include "shiftaudit/stats.hpp"

namespace shiftaudit {

/// Twin-map tolerance for methods computed from weights and one forward pass.
inline constexpr double kExactTolerance = 1e-8;
/// Tolerance for methods that add quadrature or data statistics (IG, PatternAttribution).
inline constexpr double kNumericTolerance = 1e-6;
/// A method is only called violated above this difference; between its tolerance and this
/// value the verdict is inconclusive.
inline constexpr double kViolationThreshold = 1e-3;
/// run_audit refuses twins whose logits differ by more than this.
inline constexpr double kEquivalenceLimit = 1e-6;

inline double method_tolerance(MethodId id) {
  switch (id.base) {
    case Method::ig_black:
    case Method::ig_zero:
    case Method::dtd_pa:
      return kNumericTolerance;
    default:
      return kExactTolerance;
  }
}

enum class Verdict : std::uint8_t { invariant, violated, inconclusive };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::invariant: return "invariant";
    case Verdict::violated: return "violated";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

inline Verdict parse_verdict(std::string_view s) {
  for (Verdict v : {Verdict::invariant, Verdict::violated, Verdict::inconclusive}) {
    if (to_string(v) == s) return v;
  }
  throw ArgumentError("unknown verdict '" + std::string(s) + "'");
}

inline Verdict classify(double max_diff, double tolerance, double violation_threshold) {
  if (max_diff <= tolerance) return Verdict::invariant;
  if (max_diff > violation_threshold) return Verdict::violated;
  return Verdict::inconclusive;
}

struct MethodStats {
  std::string id;
  double max_linf_diff = 0.0;
  double mean_pearson = 0.0;
  double mean_spearman = 0.0;
  double tolerance = 0.0;
  Verdict verdict = Verdict::invariant;
  std::uint64_t stabilized = 0;       // z-rule stabilizer activations, both networks
  std::uint64_t degenerate_hits = 0;  // signal routed through fallback patterns, both networks

  bool operator==(const MethodStats&) const = default;
};

struct AuditMetadata {
  std::uint64_t seed = 0;
  std::string shift;        // e.g. "const:-1", "checker:4:0.3"
  std::string shift_kind;   // constant-scalar, checkerboard, image, attack
  std::uint64_t sample_count = 0;
  std::string model_hash;
  std::int64_t ig_steps = 0;
  std::uint64_t sg_samples = 0;
  double sg_sigma = 0.0;
  std::string pattern_convention;
  bool dtd_include_bias = false;
  double violation_threshold = kViolationThreshold;
  double max_logit_deviation = 0.0;
  double max_gradient_deviation = 0.0;
  std::uint64_t degenerate_neurons_net1 = 0;
  std::uint64_t degenerate_neurons_net2 = 0;
  std::string threshold_policy =
      "engineering choice: invariant if diff <= tolerance, violated if diff > violation_threshold";

  bool operator==(const AuditMetadata&) const = default;
};

struct AuditReport {
  AuditMetadata metadata;
  std::vector<MethodStats> methods;

  const MethodStats& method(std::string_view id) const {
    for (const auto& m : methods) {
      if (m.id == id) return m;
    }
    throw IndexError("report has no entry for method '" + std::string(id) + "'");
  }

  bool operator==(const AuditReport&) const = default;
};

struct AuditConfig {
  std::vector<MethodId> methods = all_method_ids();
  std::size_t n_samples = 64;
  std::uint64_t seed = 0;
  int ig_steps = 300;
  std::size_t sg_samples = 50;
  std::optional<double> sg_sigma;  // default: 0.15 · (max − min) of network 1's inputs
  DtdOptions dtd;
  PatternMeanConvention pattern_convention = PatternMeanConvention::positive_regime;
  std::string shift_label;  // recorded verbatim in the report

  /// Receives every twin pair of maps (network 1, network 2), e.g. to render heatmaps.
  std::function<void(const SaliencyMap&, const SaliencyMap&)> on_maps;
};

/// `n` distinct indices below `size`, chosen by `Rng(seed)` and returned in ascending order.
inline std::vector<std::size_t> select_samples(std::size_t size, std::size_t n, std::uint64_t seed) {
  if (n > size) {
    throw ArgumentError("requested " + std::to_string(n) + " samples from a dataset of " + std::to_string(size));
  }
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(idx, rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Everything run_audit builds before comparing maps.
struct TwinSetup {
  MlpModel model2;
  Dataset samples2;
  std::optional<PatternSet> patterns1, patterns2;
  ReferencePoint black1, black2;
};

inline bool needs_patterns(const std::vector<MethodId>& methods) {
  return std::any_of(methods.begin(), methods.end(),
                     [](MethodId m) { return m.base == Method::pn || m.base == Method::dtd_pa; });
}

/// Builds network 2 and its data for `shift`. Patterns of each network are estimated on that
/// network's own copy of `pattern_data` when any requested method needs them; `stored1` is used
/// for network 1 instead when given.
inline TwinSetup build_twins(const MlpModel& model1, const ShiftVector& shift, const Dataset& samples,
                             const Dataset& pattern_data, const AuditConfig& cfg,
                             const PatternSet* stored1 = nullptr) {
  TwinSetup t{compensate_bias(model1, shift), apply_shift(samples, shift), std::nullopt, std::nullopt, {}, {}};
  if (needs_patterns(cfg.methods)) {
    t.patterns1 = stored1 ? *stored1 : estimate_patterns(model1, pattern_data, cfg.pattern_convention);
    t.patterns2 = estimate_patterns(t.model2, apply_shift(pattern_data, shift), cfg.pattern_convention);
  }
  t.black1 = resolve_baseline(ReferenceKind::black_image, samples);
  t.black2 = resolve_baseline(ReferenceKind::black_image, t.samples2);
  return t;
}

/// Input-invariance audit of every requested method on twin networks.
///
/// Network 2 is `compensate_bias(model1, shift)` on `samples + shift`. For each selected sample
/// both networks explain network 1's argmax logit; the report aggregates the L∞ difference and
/// the correlations between the twin maps per method. Throws ConstructionError when the twins
/// are not functionally equivalent on the selected samples.
inline AuditReport run_audit(const MlpModel& model1, const ShiftVector& shift, const Dataset& samples,
                             const AuditConfig& cfg, const Dataset* pattern_data = nullptr,
                             const PatternSet* stored_patterns1 = nullptr) {
  model1.validate();
  samples.validate();
  if (cfg.methods.empty()) throw ArgumentError("no methods to audit");
  if (cfg.ig_steps < 1) throw ArgumentError("ig_steps must be at least 1");
  const auto chosen = select_samples(samples.size(), cfg.n_samples, cfg.seed);

  const TwinSetup twins =
      build_twins(model1, shift, samples, pattern_data ? *pattern_data : samples, cfg, stored_patterns1);

  const Dataset d1 = subset(samples, chosen);
  const Dataset d2 = subset(twins.samples2, chosen);
  const auto eq = check_equivalence(model1, twins.model2, d1, d2, kEquivalenceLimit);
  if (!eq.equivalent) {
    throw ConstructionError("twin networks disagree: max logit deviation " + std::to_string(eq.max_logit_deviation));
  }

  SmoothGradConfig sg{cfg.sg_samples, 0.0, cfg.seed};
  sg.sigma = cfg.sg_sigma ? *cfg.sg_sigma : 0.15 * (max(samples.images) - min(samples.images));

  const PatternSet* p1 = twins.patterns1 ? &*twins.patterns1 : nullptr;
  const PatternSet* p2 = twins.patterns2 ? &*twins.patterns2 : nullptr;
  const Explainer e1{model1, p1, twins.black1, cfg.ig_steps, cfg.dtd, sg};
  const Explainer e2{twins.model2, p2, twins.black2, cfg.ig_steps, cfg.dtd, sg};

  AuditReport report;
  auto& md = report.metadata;
  md.seed = cfg.seed;
  md.shift = cfg.shift_label;
  md.shift_kind = std::string(to_string(shift.kind));
  md.sample_count = chosen.size();
  md.model_hash = model_hash(model1);
  md.ig_steps = cfg.ig_steps;
  md.sg_samples = cfg.sg_samples;
  md.sg_sigma = sg.sigma;
  md.pattern_convention = std::string(to_string(cfg.pattern_convention));
  md.dtd_include_bias = cfg.dtd.include_bias;
  md.max_logit_deviation = eq.max_logit_deviation;
  md.max_gradient_deviation = eq.max_gradient_deviation;
  md.degenerate_neurons_net1 = p1 ? p1->degenerate_count() : 0;
  md.degenerate_neurons_net2 = p2 ? p2->degenerate_count() : 0;

  for (const MethodId id : cfg.methods) {
    MethodStats st;
    st.id = id.str();
    st.tolerance = method_tolerance(id);
    double pearson_sum = 0.0, spearman_sum = 0.0;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      const Tensor x1 = d1.sample(k), x2 = d2.sample(k);
      const std::size_t j = argmax(logits(model1, x1));
      const auto m1 = e1.explain(id, x1, j, chosen[k]);
      const auto m2 = e2.explain(id, x2, j, chosen[k]);
      st.max_linf_diff = std::max(st.max_linf_diff, max_abs_diff(m1.values, m2.values));
      pearson_sum += pearson(m1.values, m2.values);
      spearman_sum += spearman(m1.values, m2.values);
      st.stabilized += m1.stabilized + m2.stabilized;
      st.degenerate_hits += m1.degenerate_hits + m2.degenerate_hits;
      if (cfg.on_maps) cfg.on_maps(m1, m2);
    }
    const double n = static_cast<double>(chosen.size());
    st.mean_pearson = chosen.empty() ? 1.0 : pearson_sum / n;
    st.mean_spearman = chosen.empty() ? 1.0 : spearman_sum / n;
    st.verdict = classify(st.max_linf_diff, st.tolerance, md.violation_threshold);
    report.methods.push_back(std::move(st));
  }
  return report;
}

}  // namespace shiftaudit
