#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "shiftaudit/mlp.hpp"
#include "shiftaudit/model_io.hpp"
#include "shiftaudit/synthetic.hpp"

using namespace shiftaudit;

namespace {

MlpModel single_layer(std::vector<double> w, double b, bool relu = false) {
  const std::size_t n = w.size();
  return MlpModel{{DenseLayer{Tensor({1, n}, std::move(w)), Tensor::vector({b}), relu}}};
}

Tensor random_input(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  Tensor x({n});
  for (double& v : x.values()) v = rng.uniform(lo, hi);
  return x;
}

MlpModel random_model(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  auto m = init_model(sizes, seed);
  Rng rng(seed + 1000);
  for (auto& L : m.layers)
    for (double& b : L.biases.values()) b = rng.uniform(-0.2, 0.2);
  return m;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("shiftaudit_mlp_test_" + name);
}

}  // namespace

TEST(InitModel, PaperArchitecture) {
  const auto m = init_model({784, 1024, 1024, 1024, 10}, 1);
  ASSERT_EQ(m.depth(), 4u);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_TRUE(m.layers[l].relu);
  EXPECT_FALSE(m.layers[3].relu);
  EXPECT_EQ(m.input_dim(), 784u);
  EXPECT_EQ(m.num_classes(), 10u);
  EXPECT_NO_THROW(m.validate());
}

TEST(InitModel, DeterministicAndBounded) {
  EXPECT_EQ(init_model({5, 4, 3}, 7), init_model({5, 4, 3}, 7));
  EXPECT_NE(init_model({5, 4, 3}, 7), init_model({5, 4, 3}, 8));
  const auto m = init_model({2, 1}, 123);
  const double bound = std::sqrt(6.0 / 2.0);
  for (double w : m.layers[0].weights.values()) EXPECT_LE(std::abs(w), bound);
  EXPECT_EQ(m.layers[0].biases[0], 0.0);
}

TEST(InitModel, Errors) {
  EXPECT_THROW(init_model({784}, 1), ArgumentError);
  EXPECT_THROW(init_model({784, 0, 10}, 1), ArgumentError);
}

TEST(Validate, CatchesBrokenModels) {
  auto m = init_model({4, 3, 2}, 1);
  m.layers[1].relu = true;
  EXPECT_THROW(m.validate(), ArgumentError);
  auto n = init_model({4, 3, 2}, 1);
  n.layers[0].biases = Tensor({2});
  EXPECT_THROW(n.validate(), DimensionError);
  MlpModel chain{{init_model({4, 3}, 1).layers[0], init_model({2, 2}, 1).layers[0]}};
  chain.layers[0].relu = true;
  EXPECT_THROW(chain.validate(), DimensionError);
}

TEST(Forward, SingleLinearLayer) {
  const auto m = single_layer({1, 3}, 0.0);
  EXPECT_EQ(logits(m, Tensor::vector({2, 1}))[0], 5.0);
}

TEST(Forward, ReluClampsNegativePreActivation) {
  MlpModel m{{DenseLayer{Tensor({1, 1}, std::vector<double>{1.0}), Tensor::vector({-3.0}), true},
              DenseLayer{Tensor({1, 1}, std::vector<double>{1.0}), Tensor::vector({0.0}), false}}};
  const auto pass = forward(m, Tensor::vector({1.0}));
  EXPECT_EQ(pass.pre[0][0], -2.0);
  EXPECT_EQ(pass.inputs[1][0], 0.0);
  EXPECT_EQ(pass.logits[0], 0.0);
}

TEST(Forward, MatchesNaiveOracle) {
  const auto m = random_model({20, 16, 12, 8, 5}, 3);
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const auto x = random_input(rng, 20);
    const auto ref = oracle::forward(m, oracle::to_vec(x));
    const auto got = logits(m, x);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(got[k], ref[k], 1e-12);
  }
}

TEST(Forward, DimensionMismatch) {
  const auto m = init_model({4, 3, 2}, 1);
  EXPECT_THROW(forward(m, Tensor({5})), DimensionError);
}

TEST(InputGradient, LinearModelGivesWeights) {
  const auto m = single_layer({0.5, -2.0, 3.0}, 1.0);
  EXPECT_EQ(input_gradient(m, Tensor::vector({1, 2, 3}), 0), Tensor::vector({0.5, -2.0, 3.0}));
}

TEST(InputGradient, DeadReluNetworkHasZeroGradient) {
  auto m = init_model({6, 5, 4, 3}, 2);
  for (auto& b : m.layers[0].biases.values()) b = -100.0;
  Rng rng(1);
  EXPECT_EQ(max_abs(input_gradient(m, random_input(rng, 6), 1)), 0.0);
}

TEST(InputGradient, IndexOutOfRange) {
  const auto m = init_model({4, 3, 2}, 1);
  EXPECT_THROW(input_gradient(m, Tensor({4}), 2), IndexError);
}

TEST(InputGradient, MatchesFiniteDifferencesAwayFromKinks) {
  const auto m = random_model({12, 10, 9, 8, 4}, 5);
  Rng rng(6);
  int checked = 0;
  while (checked < 20) {
    const auto x = random_input(rng, 12);
    const auto xv = oracle::to_vec(x);
    if (oracle::min_relu_margin(m, xv) <= 1e-3) continue;
    const std::size_t j = rng.below(4);
    const auto g = input_gradient(m, x, j);
    EXPECT_LE(oracle::max_abs_diff(oracle::to_vec(g), oracle::fd_gradient(m, xv, j)), 1e-6);
    EXPECT_LE(oracle::max_abs_diff(oracle::to_vec(g), oracle::forward_mode_gradient(m, xv, j)), 1e-12);
    ++checked;
  }
}

TEST(Train, LossDecreasesOnSeparableToySet) {
  Dataset d{Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0}), {0, 1}, 0.0};
  const auto m0 = init_model({2, 4, 2}, 3);
  std::vector<double> trace;
  const auto m1 = train_sgd(m0, d, TrainConfig{1, 0.1, 1, 5}, [&](int, double loss) { trace.push_back(loss); });
  ASSERT_EQ(trace.size(), 1u);
  EXPECT_LT(mean_loss(m1, d), mean_loss(m0, d));
  auto m = m1;
  double prev = mean_loss(m, d);
  for (int e = 0; e < 5; ++e) {
    m = train_sgd(m, d, TrainConfig{1, 0.1, 2, 5});
    const double cur = mean_loss(m, d);
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(Train, ZeroLearningRateLeavesModelUnchanged) {
  const auto d = make_synthetic_digits(40, 1);
  const auto m0 = init_model({784, 16, 10}, 2);
  EXPECT_EQ(train_sgd(m0, d, TrainConfig{2, 0.0, 8, 3}), m0);
}

TEST(Train, DeterministicForSeed) {
  const auto d = make_synthetic_digits(60, 2);
  const auto m0 = init_model({784, 16, 10}, 2);
  const TrainConfig cfg{2, 0.05, 7, 11};
  EXPECT_EQ(train_sgd(m0, d, cfg), train_sgd(m0, d, cfg));
  EXPECT_NE(train_sgd(m0, d, cfg), train_sgd(m0, d, TrainConfig{2, 0.05, 7, 12}));
}

TEST(Train, BatchGradientMatchesFiniteDifferenceOfLoss) {
  // One full-batch step moves each parameter by −lr·∂L/∂θ; compare with a numeric derivative.
  Dataset d{Tensor::matrix(3, 3, {0.2, 0.5, 0.1, 0.9, 0.3, 0.4, 0.6, 0.8, 0.7}), {0, 1, 2}, 0.0};
  auto m0 = random_model({3, 4, 3}, 21);
  const double lr = 1e-3;
  const auto m1 = train_sgd(m0, d, TrainConfig{1, lr, 3, 1});
  const double h = 1e-6;
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t k = 0; k < m0.layers[l].weights.size(); ++k) {
      auto mp = m0, mm = m0;
      mp.layers[l].weights[k] += h;
      mm.layers[l].weights[k] -= h;
      const double g = (mean_loss(mp, d) - mean_loss(mm, d)) / (2 * h);
      EXPECT_NEAR((m0.layers[l].weights[k] - m1.layers[l].weights[k]) / lr, g, 1e-6);
    }
    for (std::size_t k = 0; k < m0.layers[l].biases.size(); ++k) {
      auto mp = m0, mm = m0;
      mp.layers[l].biases[k] += h;
      mm.layers[l].biases[k] -= h;
      const double g = (mean_loss(mp, d) - mean_loss(mm, d)) / (2 * h);
      EXPECT_NEAR((m0.layers[l].biases[k] - m1.layers[l].biases[k]) / lr, g, 1e-6);
    }
  }
}

TEST(Train, Errors) {
  const auto m0 = init_model({2, 2}, 1);
  Dataset empty{Tensor({0, 2}), {}, 0.0};
  EXPECT_THROW(train_sgd(m0, empty, TrainConfig{}), ArgumentError);
  Dataset bad{Tensor({1, 2}), {5}, 0.0};
  EXPECT_THROW(train_sgd(m0, bad, TrainConfig{}), RangeError);
  Dataset ok{Tensor({1, 2}), {1}, 0.0};
  EXPECT_THROW(train_sgd(m0, ok, TrainConfig{0, 0.1, 1, 1}), ArgumentError);
  EXPECT_THROW(train_sgd(m0, ok, TrainConfig{1, -0.1, 1, 1}), ArgumentError);
  EXPECT_THROW(train_sgd(m0, ok, TrainConfig{1, 0.1, 0, 1}), ArgumentError);
}

TEST(CompensateBias, ZeroShiftIsIdentity) {
  const auto m = random_model({784, 8, 10}, 1);
  EXPECT_EQ(compensate_bias(m, make_scalar_shift(0.0)), m);
}

TEST(CompensateBias, WorkedArithmetic) {
  const auto m = single_layer({1, 2}, 0.5);
  const auto twin = compensate_bias(m, ShiftVector{Tensor::vector({-1, -1}), ShiftKind::constant_scalar});
  EXPECT_EQ(twin.layers[0].biases[0], 3.5);
  EXPECT_EQ(twin.layers[0].weights, m.layers[0].weights);
}

TEST(CompensateBias, OnlyFirstLayerBiasesChange) {
  const auto m = random_model({784, 8, 6, 10}, 2);
  const auto twin = compensate_bias(m, make_checkerboard_shift(4, 0.3));
  for (std::size_t l = 0; l < m.depth(); ++l) {
    EXPECT_EQ(twin.layers[l].weights, m.layers[l].weights);
    if (l > 0) {
      EXPECT_EQ(twin.layers[l].biases, m.layers[l].biases);
    }
  }
  EXPECT_NE(twin.layers[0].biases, m.layers[0].biases);
}

TEST(CompensateBias, TwinReproducesLogits) {
  const auto m = random_model({784, 32, 16, 10}, 3);
  const auto d = make_synthetic_digits(30, 3);
  for (const auto& shift : {make_scalar_shift(-1.0), make_checkerboard_shift(4, 0.3)}) {
    const auto twin = compensate_bias(m, shift);
    const auto d2 = apply_shift(d, shift);
    for (std::size_t i = 0; i < d.size(); ++i) {
      EXPECT_LE(max_abs_diff(logits(m, d.sample(i)), logits(twin, d2.sample(i))), 1e-9);
    }
  }
}

TEST(CompensateBias, DimensionMismatch) {
  const auto m = init_model({4, 2}, 1);
  EXPECT_THROW(compensate_bias(m, make_scalar_shift(1.0)), DimensionError);
}

TEST(CheckEquivalence, CompensatedTwinIsEquivalent) {
  const auto m = random_model({784, 32, 16, 10}, 4);
  const auto d = make_synthetic_digits(40, 4);
  const auto shift = make_scalar_shift(-1.0);
  const auto r = check_equivalence(m, compensate_bias(m, shift), d, apply_shift(d, shift), 1e-9);
  EXPECT_TRUE(r.equivalent);
  EXPECT_LT(r.max_logit_deviation, 1e-9);
  EXPECT_LT(r.max_gradient_deviation, 1e-9);
  if (r.mask_mismatches == 0) {
    EXPECT_EQ(r.max_gradient_deviation, 0.0);
  }
}

TEST(CheckEquivalence, UncompensatedShiftDiffers) {
  const auto m = random_model({784, 32, 10}, 5);
  const auto d = make_synthetic_digits(10, 5);
  const auto r = check_equivalence(m, m, d, apply_shift(d, make_scalar_shift(-1.0)), 1e-9);
  EXPECT_GT(r.max_logit_deviation, 0.0);
  EXPECT_FALSE(r.equivalent);
}

TEST(CheckEquivalence, CardinalityMismatch) {
  const auto m = init_model({784, 10}, 1);
  EXPECT_THROW(check_equivalence(m, m, make_synthetic_digits(3, 1), make_synthetic_digits(4, 1), 1e-9),
               ArgumentError);
}

TEST(ModelIo, RoundTripIsBitExact) {
  const auto m = random_model({784, 12, 7, 10}, 9);
  const auto p = temp_path("m.bin");
  save_model(p, m);
  const auto back = load_model(p);
  EXPECT_EQ(back.model, m);
  EXPECT_FALSE(back.patterns.has_value());
  std::filesystem::remove(p);
}

TEST(ModelIo, RoundTripWithPatterns) {
  const auto m = random_model({784, 12, 10}, 9);
  const auto ps = estimate_patterns(m, make_synthetic_digits(40, 2));
  const auto back = decode_model(encode_model(m, &ps));
  ASSERT_TRUE(back.patterns.has_value());
  EXPECT_EQ(back.patterns->layers.size(), ps.layers.size());
  for (std::size_t l = 0; l < ps.layers.size(); ++l) {
    EXPECT_EQ(back.patterns->layers[l].patterns, ps.layers[l].patterns);
    EXPECT_EQ(back.patterns->layers[l].degenerate, ps.layers[l].degenerate);
    EXPECT_EQ(back.patterns->layers[l].normalization, ps.layers[l].normalization);
  }
}

TEST(ModelIo, TruncatedFile) {
  auto b = encode_model(init_model({4, 3, 2}, 1));
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, std::size_t{20}, b.size() - 1}) {
    EXPECT_THROW(decode_model(std::span(b.data(), cut)), FormatError) << cut;
  }
}

TEST(ModelIo, BadMagicNamesExpectedMagic) {
  auto b = encode_model(init_model({4, 2}, 1));
  b[0] = 'X';
  try {
    decode_model(b);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("SHMLP"), std::string::npos);
  }
}

TEST(ModelIo, VersionMismatchAndCorruptLengths) {
  auto b = encode_model(init_model({4, 2}, 1));
  auto v = b;
  v[8] = 2;
  EXPECT_THROW(decode_model(v), FormatError);
  auto l = b;
  l[16] = 0xFF;  // rows field of layer 0
  l[23] = 0x7F;
  EXPECT_THROW(decode_model(l), FormatError);
  auto t = b;
  t.push_back(1);
  EXPECT_THROW(decode_model(t), FormatError);
}

TEST(ModelIo, HashIsStable) {
  const auto m = init_model({4, 3, 2}, 1);
  EXPECT_EQ(model_hash(m), model_hash(init_model({4, 3, 2}, 1)));
  EXPECT_NE(model_hash(m), model_hash(init_model({4, 3, 2}, 2)));
  EXPECT_EQ(model_hash(m).size(), 16u);
}
