#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "shiftaudit/audit.hpp"
#include "shiftaudit/dataset.hpp"
#include "shiftaudit/mlp.hpp"
#include "shiftaudit/saliency.hpp"
#include "shiftaudit/stats.hpp"

namespace shiftaudit {

/// The desired gradient×input attribution and how it was forced.
struct AttackSpec {
  Tensor target;                    // ŝ
  double clip = 0.3;                // shift entries are clamped to [-clip, clip]
  double eps = 1e-6;                // pixels with |g| <= eps cannot be forced
  std::vector<std::uint8_t> valid;  // 1 where |g| > eps and the shift was not clipped
  std::size_t output = 0;           // network 1's argmax class at x
  Tensor gradient;                  // ∇f₁ at x for that class

  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
  }
};

struct AttackShift {
  ShiftVector shift;
  AttackSpec spec;
};

/// Shift that makes gradient×input of the compensated twin at `x + m` equal `target`:
/// `m = ŝ / g − x` per pixel, clamped to [-clip, clip]. Pixels with |g| <= eps get m = 0.
inline AttackShift construct_attack_shift(const MlpModel& model1, const Tensor& x, const Tensor& target,
                                          double clip, double eps) {
  require_same_shape(x, target, "construct_attack_shift");
  if (!(clip > 0.0)) throw ArgumentError("attack clip bound must be positive");
  if (!(eps >= 0.0)) throw ArgumentError("attack gradient floor must be non-negative");

  const auto pass = forward(model1, x);
  const std::size_t j = argmax(pass.logits);
  AttackShift out{{Tensor(x.shape()), ShiftKind::attack},
                  {target, clip, eps, std::vector<std::uint8_t>(x.size(), 0), j, input_gradient(model1, pass, j)}};
  const Tensor& g = out.spec.gradient;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(std::abs(g[i]) > eps)) continue;
    const double raw = target[i] / g[i] - x[i];
    const double m = std::clamp(raw, -clip, clip);
    out.shift.values[i] = m;
    out.spec.valid[i] = (m == raw) ? 1 : 0;
  }
  if (out.spec.valid_count() == 0) {
    throw AttackInfeasibleError("no pixel can be forced: every gradient entry is below eps or clipped");
  }
  return out;
}

struct AttackVerification {
  double coverage = 0.0;           // fraction of pixels in the valid mask
  double masked_linf_error = 0.0;  // max |GI(network 2, x₂) − ŝ| over the valid mask
};

inline AttackVerification verify_attack(const MlpModel& model2, const Tensor& x2, const AttackSpec& spec) {
  const Tensor gi = gradient_times_input(model2, x2, spec.output);
  AttackVerification v;
  for (std::size_t i = 0; i < gi.size(); ++i) {
    if (!spec.valid[i]) continue;
    v.masked_linf_error = std::max(v.masked_linf_error, std::abs(gi[i] - spec.target[i]));
  }
  v.coverage = static_cast<double>(spec.valid_count()) / static_cast<double>(gi.size());
  return v;
}

/// How one method's twin maps relate to the attack target.
struct AttackMethodResult {
  std::string id;
  double pearson_target = 0.0;    // corr(map₂, ŝ)
  double pearson_original = 0.0;  // corr(map₂, map₁)
  double twin_linf = 0.0;         // ‖map₂ − map₁‖∞

  bool shows_target() const { return pearson_target > pearson_original; }
};

struct AttackReport {
  std::size_t sample_index = 0;
  std::size_t output = 0;
  double clip = 0.0;
  double eps = 0.0;
  double target_scale = 0.0;
  AttackVerification verification;
  std::vector<AttackMethodResult> methods;
};

/// Default attack methods: the four that are expected to show the target and PatternAttribution.
inline std::vector<MethodId> attack_methods() {
  return {{Method::gxi}, {Method::ig_black}, {Method::ig_zero}, {Method::dtd_lrp}, {Method::dtd_pa}};
}

/// End-to-end attack on sample `index` of `samples`.
///
/// `target_image` (values in [0, 1], 784 entries) is scaled by `target_scale`, or, when that is
/// not positive, by the peak magnitude of the sample's own gradient×input map so the forced
/// attribution lives on the same scale. The twin is built from the attack shift exactly as in
/// run_audit, patterns of each network coming from its own copy of `pattern_data`.
inline AttackReport run_attack(const MlpModel& model1, const Dataset& samples, std::size_t index,
                               const Tensor& target_image, double clip, double eps, double target_scale,
                               const Dataset& pattern_data, const std::vector<MethodId>& methods,
                               int ig_steps = 300, ShiftVector* shift_out = nullptr) {
  if (index >= samples.size()) throw IndexError("input index " + std::to_string(index) + " out of range");
  const Tensor x = samples.sample(index);
  const Tensor flat_target = target_image.reshaped({target_image.size()});
  require_same_shape(x, flat_target, "run_attack");

  AttackReport rep;
  rep.sample_index = index;
  rep.clip = clip;
  rep.eps = eps;
  if (!(target_scale > 0.0)) {
    const std::size_t j = argmax(logits(model1, x));
    target_scale = max_abs(gradient_times_input(model1, x, j));
  }
  rep.target_scale = target_scale;
  const Tensor target = scale(flat_target, target_scale);

  const auto attack = construct_attack_shift(model1, x, target, clip, eps);
  rep.output = attack.spec.output;
  if (shift_out) *shift_out = attack.shift;

  AuditConfig cfg;
  cfg.methods = methods;
  cfg.ig_steps = ig_steps;
  const TwinSetup twins = build_twins(model1, attack.shift, samples, pattern_data, cfg);
  const Tensor x2 = twins.samples2.sample(index);
  rep.verification = verify_attack(twins.model2, x2, attack.spec);

  const PatternSet* p1 = twins.patterns1 ? &*twins.patterns1 : nullptr;
  const PatternSet* p2 = twins.patterns2 ? &*twins.patterns2 : nullptr;
  const Explainer e1{model1, p1, twins.black1, ig_steps, cfg.dtd, {}};
  const Explainer e2{twins.model2, p2, twins.black2, ig_steps, cfg.dtd, {}};
  for (const MethodId id : methods) {
    const auto m1 = e1.explain(id, x, attack.spec.output, index);
    const auto m2 = e2.explain(id, x2, attack.spec.output, index);
    rep.methods.push_back({id.str(), pearson(m2.values, target), pearson(m2.values, m1.values),
                           max_abs_diff(m1.values, m2.values)});
  }
  return rep;
}

}  // namespace shiftaudit
