#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "shiftaudit/saliency.hpp"
#include "shiftaudit/synthetic.hpp"

using namespace shiftaudit;

namespace {

MlpModel linear_model(std::vector<double> w, double b = 0.0) {
  const std::size_t n = w.size();
  return MlpModel{{DenseLayer{Tensor({1, n}, std::move(w)), Tensor::vector({b}), false}}};
}

MlpModel random_model(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  auto m = init_model(sizes, seed);
  Rng rng(seed + 99);
  for (auto& L : m.layers)
    for (double& b : L.biases.values()) b = rng.uniform(-0.1, 0.3);
  return m;
}

Tensor random_input(Rng& rng, std::size_t n) {
  Tensor x({n});
  for (double& v : x.values()) v = rng.uniform(-1, 1);
  return x;
}

PatternSet weights_as_patterns(const MlpModel& m) {
  PatternSet ps;
  for (const auto& L : m.layers) {
    LayerPatterns lp{L.weights, Tensor({L.outputs()}, 1.0), std::vector<std::uint8_t>(L.outputs(), 0)};
    ps.layers.push_back(lp);
  }
  return ps;
}

struct Twins {
  MlpModel m1, m2;
  Dataset d1, d2;
  ShiftVector shift;
};

Twins make_twins(const ShiftVector& shift) {
  auto m1 = init_model({784, 24, 16, 10}, 5);
  const auto d1 = make_synthetic_digits(60, 5);
  m1 = train_sgd(m1, d1, TrainConfig{2, 0.05, 10, 5});
  return {m1, compensate_bias(m1, shift), d1, apply_shift(d1, shift), shift};
}

}  // namespace

TEST(MethodIds, ParseAndPrint) {
  for (const auto& id : all_method_ids()) EXPECT_EQ(MethodId::parse(id.str()), id);
  EXPECT_EQ(all_method_ids().size(), 16u);
  EXPECT_EQ(MethodId::parse("sg-ig-black").str(), "sg-ig-black");
  EXPECT_TRUE(MethodId::parse("sg-grad").smoothed);
  EXPECT_THROW(MethodId::parse("deconvnet"), ArgumentError);
  EXPECT_THROW(MethodId::parse("sg-"), ArgumentError);
}

TEST(Gradient, LinearModelGivesWeights) {
  const auto m = linear_model({1, -2, 3});
  EXPECT_EQ(gradient(m, Tensor::vector({4, 5, 6}), 0), Tensor::vector({1, -2, 3}));
}

TEST(Gradient, FiniteDifferenceAgreement) {
  const auto m = random_model({10, 8, 6, 3}, 1);
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    const auto x = random_input(rng, 10);
    if (oracle::min_relu_margin(m, oracle::to_vec(x)) <= 1e-3) continue;
    EXPECT_LE(oracle::max_abs_diff(oracle::to_vec(gradient(m, x, 1)), oracle::fd_gradient(m, oracle::to_vec(x), 1)),
              1e-6);
  }
}

TEST(GuidedBackprop, WithoutReluEqualsGradient) {
  const auto m = linear_model({0.5, -1.5});
  EXPECT_EQ(guided_backprop(m, Tensor::vector({1, 1}), 0), Tensor::vector({0.5, -1.5}));
}

TEST(GuidedBackprop, NegativeSignalIsZeroed) {
  // relu(x) then logit = −relu(x): upstream gradient −1 at an active unit.
  MlpModel m{{DenseLayer{Tensor({1, 1}, std::vector<double>{1.0}), Tensor::vector({0.0}), true},
              DenseLayer{Tensor({1, 1}, std::vector<double>{-1.0}), Tensor::vector({0.0}), false}}};
  const auto x = Tensor::vector({2.0});
  EXPECT_EQ(gradient(m, x, 0)[0], -1.0);
  EXPECT_EQ(guided_backprop(m, x, 0)[0], 0.0);
}

TEST(GuidedBackprop, MatchesManualRecursion) {
  const auto m = random_model({8, 6, 5, 3}, 4);
  Rng rng(5);
  const auto x = random_input(rng, 8);
  const auto t = oracle::trace(m, oracle::to_vec(x));
  oracle::Vec s(3, 0.0);
  s[2] = 1.0;
  for (std::size_t l = m.depth(); l-- > 0;) {
    const auto& L = m.layers[l];
    if (L.relu)
      for (std::size_t i = 0; i < s.size(); ++i)
        if (!(t.pre[l][i] > 0) || s[i] < 0) s[i] = 0;
    oracle::Vec in(L.inputs(), 0.0);
    for (std::size_t i = 0; i < L.outputs(); ++i)
      for (std::size_t k = 0; k < L.inputs(); ++k) in[k] += L.weights(i, k) * s[i];
    s = in;
  }
  EXPECT_LE(oracle::max_abs_diff(oracle::to_vec(guided_backprop(m, x, 2)), s), 1e-14);
}

TEST(PatternNet, WeightPatternsReproduceGradient) {
  const auto m = random_model({8, 6, 5, 3}, 6);
  Rng rng(7);
  const auto x = random_input(rng, 8);
  EXPECT_LE(max_abs_diff(pattern_net(m, weights_as_patterns(m), x, 1), gradient(m, x, 1)), 1e-15);
}

TEST(PatternNet, PlantedDirectionInLinearModel) {
  Rng rng(8);
  const auto dir = Tensor::vector({0.2, 0.4, -0.4});
  const auto w = Tensor::vector({1.0, 2.0, -1.0});  // wᵀd = 1.4
  Dataset d{Tensor({100, 3}), std::vector<int>(100, 0), 0.0};
  for (std::size_t i = 0; i < 100; ++i) {
    const double y = rng.normal();
    for (std::size_t k = 0; k < 3; ++k) d.images(i, k) = dir[k] * y;
  }
  const MlpModel m{{DenseLayer{w.reshaped({1, 3}), Tensor({1}), false}}};
  const auto ps = estimate_patterns(m, d);
  const auto map = pattern_net(m, ps, d.sample(0), 0);
  EXPECT_LE(max_abs_diff(map, scale(dir, 1.0 / 1.4)), 1e-12);
}

TEST(PatternNet, CountsFallbackHits) {
  const auto m = random_model({8, 6, 3}, 9);
  auto ps = weights_as_patterns(m);
  ps.layers[0].degenerate.assign(6, 1);
  std::size_t hits = 0;
  Rng rng(1);
  pattern_net(m, ps, random_input(rng, 8), 0, &hits);
  EXPECT_GT(hits, 0u);
}

TEST(GradientTimesInput, ZeroInputGivesZeroMap) {
  const auto m = random_model({8, 6, 3}, 10);
  EXPECT_EQ(max_abs(gradient_times_input(m, Tensor({8}), 0)), 0.0);
}

TEST(GradientTimesInput, LinearModel) {
  const auto m = linear_model({1, -2, 3});
  EXPECT_EQ(gradient_times_input(m, Tensor::vector({2, 2, -1}), 0), Tensor::vector({2, -4, -3}));
}

TEST(Baselines, BlackImageAndZero) {
  const auto d = make_synthetic_digits(20, 1);
  EXPECT_EQ(resolve_baseline(ReferenceKind::black_image, d).values, Tensor({784}));
  const auto shifted = apply_shift(d, make_scalar_shift(-1.0));
  EXPECT_EQ(resolve_baseline(ReferenceKind::black_image, shifted).values, Tensor({784}, -1.0));
  EXPECT_EQ(resolve_baseline(ReferenceKind::zero_vector, shifted).values, Tensor({784}));
  EXPECT_THROW(resolve_baseline(ReferenceKind::black_image, Dataset{Tensor({0, 784}), {}, 0.0}), ArgumentError);
}

TEST(IntegratedGradients, ZeroPathGivesZeroMap) {
  const auto m = random_model({8, 6, 3}, 11);
  Rng rng(2);
  const auto x = random_input(rng, 8);
  EXPECT_EQ(max_abs(integrated_gradients(m, x, {ReferenceKind::black_image, x}, 17, 0)), 0.0);
}

TEST(IntegratedGradients, LinearModelIsExactForAnySteps) {
  const auto m = linear_model({0.5, -1, 2}, 0.7);
  const auto x = Tensor::vector({1, 2, 3});
  const ReferencePoint zero{ReferenceKind::zero_vector, Tensor({3})};
  for (int steps : {1, 2, 7, 300}) {
    const auto map = integrated_gradients(m, x, zero, steps, 0);
    EXPECT_LE(max_abs_diff(map, Tensor::vector({0.5, -2, 6})), 1e-14);
    EXPECT_NEAR(sum(map), logits(m, x)[0] - logits(m, Tensor({3}))[0], 1e-14);
  }
  EXPECT_THROW(integrated_gradients(m, x, zero, 0, 0), ArgumentError);
}

TEST(IntegratedGradients, MatchesMidpointOracle) {
  const auto m = random_model({6, 5, 4, 3}, 12);
  Rng rng(3);
  const auto x = random_input(rng, 6);
  const auto x0 = random_input(rng, 6);
  const auto map = integrated_gradients(m, x, {ReferenceKind::black_image, x0}, 40, 1);
  const auto ref = oracle::integrated_gradients(m, oracle::to_vec(x), oracle::to_vec(x0), 40, 1);
  EXPECT_LE(oracle::max_abs_diff(oracle::to_vec(map), ref), 1e-12);
}

TEST(IntegratedGradients, QuadratureConverges) {
  const auto m = random_model({6, 8, 8, 3}, 13);
  Rng rng(4);
  const auto x = random_input(rng, 6);
  const ReferencePoint zero{ReferenceKind::zero_vector, Tensor({6})};
  const auto fine = integrated_gradients(m, x, zero, 20000, 0);
  double prev = INFINITY;
  for (int steps : {10, 40, 160, 640}) {
    const double err = max_abs_diff(integrated_gradients(m, x, zero, steps, 0), fine);
    EXPECT_LE(err, prev + 1e-15);
    prev = err;
  }
  const double target = logits(m, x)[0] - logits(m, Tensor({6}))[0];
  EXPECT_NEAR(sum(fine), target, 1e-3 * std::max(1.0, std::abs(target)));
}

TEST(Dtd, WorkedLinearExample) {
  const auto m = linear_model({1, 3});
  const auto r = dtd(m, Tensor::vector({2, 1}), {ReferenceKind::zero_vector, Tensor({2})}, 0);
  EXPECT_EQ(r.relevance, Tensor::vector({2, 3}));
  EXPECT_EQ(sum(r.relevance), 5.0);
  EXPECT_EQ(r.stabilized, 0u);
}

TEST(Dtd, PatternRuleOnOneLayer) {
  const auto m = linear_model({1, 3}, 0.5);
  PatternSet ps;
  ps.layers.push_back({Tensor({1, 2}, std::vector<double>{0.25, 0.25}), Tensor::vector({1.0}), {0}});
  const auto x = Tensor::vector({2, 1});
  const auto r = dtd(m, x, {ReferenceKind::pattern_root, Tensor()}, 0, &ps);
  const double y = 5.5;
  EXPECT_EQ(r.relevance, Tensor::vector({1 * 0.25 * y, 3 * 0.25 * y}));
  EXPECT_NEAR(sum(r.relevance), y, 1e-15);  // aᵀw = 1
  EXPECT_THROW(dtd(m, x, {ReferenceKind::pattern_root, Tensor()}, 0, nullptr), ArgumentError);
}

TEST(Dtd, ZRuleConservesAtEveryLayer) {
  const auto m = random_model({10, 8, 7, 4}, 14);
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const auto x = random_input(rng, 10);
    const auto r = dtd(m, x, {ReferenceKind::zero_vector, Tensor({10})}, 2);
    if (r.stabilized) continue;
    ASSERT_EQ(r.layer_relevance.size(), 4u);
    EXPECT_EQ(sum(r.layer_relevance[3]), logits(m, x)[2]);
    for (std::size_t l = 0; l < 3; ++l) {
      EXPECT_NEAR(sum(r.layer_relevance[l]), sum(r.layer_relevance[l + 1]), 1e-9);
    }
  }
}

TEST(Dtd, ZRuleMatchesManualRecursion) {
  const auto m = random_model({6, 5, 3}, 15);
  Rng rng(6);
  const auto x = random_input(rng, 6);
  const auto t = oracle::trace(m, oracle::to_vec(x));
  oracle::Vec s(3, 0.0);
  s[0] = t.pre[1][0];
  for (std::size_t l = 2; l-- > 0;) {
    const auto& L = m.layers[l];
    oracle::Vec in(L.inputs(), 0.0);
    for (std::size_t i = 0; i < L.outputs(); ++i) {
      if (L.relu && !(t.pre[l][i] > 0)) continue;
      double z = 0;
      for (std::size_t k = 0; k < L.inputs(); ++k) z += L.weights(i, k) * t.inputs[l][k];
      for (std::size_t k = 0; k < L.inputs(); ++k) in[k] += L.weights(i, k) * t.inputs[l][k] / z * s[i];
    }
    s = in;
  }
  const auto r = dtd(m, x, {ReferenceKind::zero_vector, Tensor({6})}, 0);
  EXPECT_LE(oracle::max_abs_diff(oracle::to_vec(r.relevance), s), 1e-12);
}

TEST(Dtd, BiasInDenominatorOption) {
  const auto m = linear_model({1, 3}, 5.0);
  DtdOptions opt;
  opt.include_bias = true;
  const auto r = dtd(m, Tensor::vector({2, 1}), {ReferenceKind::zero_vector, Tensor({2})}, 0, nullptr, opt);
  // y = 10, z = 10: the bias share is absorbed, map = w⊙x.
  EXPECT_EQ(r.relevance, Tensor::vector({2, 3}));
  const auto plain = dtd(m, Tensor::vector({2, 1}), {ReferenceKind::zero_vector, Tensor({2})}, 0);
  EXPECT_EQ(plain.relevance, Tensor::vector({4, 6}));
}

TEST(Dtd, StabilizerCountsTinyDenominators) {
  const auto m = linear_model({1, -1}, 2.0);
  const auto r = dtd(m, Tensor::vector({1, 1}), {ReferenceKind::zero_vector, Tensor({2})}, 0);
  EXPECT_EQ(r.stabilized, 1u);
  EXPECT_TRUE(all_finite(r.relevance));
}

TEST(Dtd, BlackRootUsesDifferenceAtInputLayer) {
  const auto m = linear_model({1, 3});
  const auto x = Tensor::vector({2, 1});
  const auto r = dtd(m, x, {ReferenceKind::black_image, Tensor({2}, -1.0)}, 0);
  // y = 5: s = w⊙(x − x₀)/(wᵀx)·y = [3, 6]/5·5
  EXPECT_LE(max_abs_diff(r.relevance, Tensor::vector({3, 6})), 1e-15);
}

TEST(SmoothGrad, ZeroSigmaIsBaseMethod) {
  const auto m = random_model({8, 6, 3}, 16);
  Rng rng(7);
  const auto x = random_input(rng, 8);
  const auto base = [&](const Tensor& in) { return gradient_times_input(m, in, 0); };
  EXPECT_EQ(smoothgrad(base, x, SmoothGradConfig{10, 0.0, 1}, 3), base(x));
}

TEST(SmoothGrad, SingleSampleIsBaseAtNoisyPoint) {
  const auto m = random_model({8, 6, 3}, 17);
  Rng rng(8);
  const auto x = random_input(rng, 8);
  const auto base = [&](const Tensor& in) { return gradient_times_input(m, in, 1); };
  const SmoothGradConfig cfg{1, 0.3, 42};
  Rng noise = Rng::derive(42, 5);
  const auto noisy = add(x, gaussian(noise, {8}, 0.3));
  EXPECT_EQ(smoothgrad(base, x, cfg, 5), base(noisy));
}

TEST(SmoothGrad, Validation) {
  const auto base = [](const Tensor& in) { return in; };
  EXPECT_THROW(smoothgrad(base, Tensor({2}), SmoothGradConfig{0, 0.1, 1}, 0), ArgumentError);
  EXPECT_THROW(smoothgrad(base, Tensor({2}), SmoothGradConfig{1, -0.1, 1}, 0), ArgumentError);
}

TEST(TwinNetworks, InvariantMethodsUnderScalarShift) {
  const auto t = make_twins(make_scalar_shift(-1.0));
  const auto p1 = estimate_patterns(t.m1, t.d1);
  const auto p2 = estimate_patterns(t.m2, t.d2);
  const Explainer e1{t.m1, &p1, resolve_baseline(ReferenceKind::black_image, t.d1), 64, {}, {8, 0.15, 3}};
  const Explainer e2{t.m2, &p2, resolve_baseline(ReferenceKind::black_image, t.d2), 64, {}, {8, 0.15, 3}};
  for (std::size_t i = 0; i < 10; ++i) {
    const auto x1 = t.d1.sample(i), x2 = t.d2.sample(i);
    const std::size_t j = argmax(logits(t.m1, x1));
    EXPECT_LE(max_abs_diff(gradient(t.m1, x1, j), gradient(t.m2, x2, j)), 1e-12);
    EXPECT_LE(max_abs_diff(guided_backprop(t.m1, x1, j), guided_backprop(t.m2, x2, j)), 1e-12);
    EXPECT_LE(max_abs_diff(pattern_net(t.m1, p1, x1, j), pattern_net(t.m2, p2, x2, j)), 1e-8);
    for (const char* id : {"ig-black", "dtd-pa", "sg-grad"}) {
      const auto mid = MethodId::parse(id);
      EXPECT_LE(max_abs_diff(e1.explain(mid, x1, j, i).values, e2.explain(mid, x2, j, i).values), 1e-6) << id;
    }
  }
}

TEST(TwinNetworks, GradientTimesInputDifferenceLaw) {
  const auto t = make_twins(make_scalar_shift(-1.0));
  for (std::size_t i = 0; i < 10; ++i) {
    const auto x1 = t.d1.sample(i), x2 = t.d2.sample(i);
    const std::size_t j = argmax(logits(t.m1, x1));
    const auto diff = sub(gradient_times_input(t.m2, x2, j), gradient_times_input(t.m1, x1, j));
    EXPECT_LE(max_abs_diff(diff, mul(gradient(t.m1, x1, j), t.shift.values)), 1e-12);
  }
}

TEST(TwinNetworks, ViolatingMethodsDiffer) {
  const auto t = make_twins(make_scalar_shift(-1.0));
  const Explainer e1{t.m1, nullptr, resolve_baseline(ReferenceKind::black_image, t.d1), 64, {}, {8, 0.15, 3}};
  const Explainer e2{t.m2, nullptr, resolve_baseline(ReferenceKind::black_image, t.d2), 64, {}, {8, 0.15, 3}};
  for (const char* id : {"gxi", "ig-zero", "dtd-lrp", "sg-gxi"}) {
    double worst = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      const auto x1 = t.d1.sample(i), x2 = t.d2.sample(i);
      const std::size_t j = argmax(logits(t.m1, x1));
      const auto mid = MethodId::parse(id);
      worst = std::max(worst, max_abs_diff(e1.explain(mid, x1, j, i).values, e2.explain(mid, x2, j, i).values));
    }
    EXPECT_GT(worst, 1e-3) << id;
  }
}

TEST(TwinNetworks, CheckerboardBreaksBlackBaseline) {
  const auto t = make_twins(make_checkerboard_shift(4, 0.3));
  const Explainer e1{t.m1, nullptr, resolve_baseline(ReferenceKind::black_image, t.d1), 64, {}, {}};
  const Explainer e2{t.m2, nullptr, resolve_baseline(ReferenceKind::black_image, t.d2), 64, {}, {}};
  double worst = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    const auto x1 = t.d1.sample(i), x2 = t.d2.sample(i);
    const std::size_t j = argmax(logits(t.m1, x1));
    worst = std::max(worst, max_abs_diff(e1.explain({Method::ig_black}, x1, j, i).values,
                                         e2.explain({Method::ig_black}, x2, j, i).values));
  }
  EXPECT_GT(worst, 1e-3);
}

TEST(Explainer, PatternMethodsNeedPatterns) {
  const auto m = random_model({784, 6, 10}, 18);
  const Explainer e{m, nullptr, {}, 8, {}, {}};
  EXPECT_THROW(e.explain({Method::pn}, Tensor({784}), 0, 0), ArgumentError);
  EXPECT_THROW(e.explain({Method::ig_black}, Tensor({784}), 0, 0), ArgumentError);
  EXPECT_EQ(e.explain({Method::grad}, Tensor({784}), 3, 7).output, 3u);
}
