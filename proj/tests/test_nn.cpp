#include <gtest/gtest.h>

#include <cmath>

#include "occage/numcore/gradcheck.hpp"
#include "occage/numcore/layers.hpp"
#include "occage/numcore/nn.hpp"
#include "support/oracles.hpp"

using namespace occage;
using namespace occage::nc;
using occage::testing::random_tensor;

namespace {

Tensor project(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, random_tensor(y.shape(), rng, false)));
}

void expect_gradcheck(const std::function<Tensor()>& f, const std::vector<Tensor>& in, double tol = 1e-4) {
  GradcheckOptions o;
  o.rel_tol = tol;
  auto rep = gradcheck(f, in, o);
  EXPECT_TRUE(rep.passed()) << "max rel " << rep.max_rel_error << " max abs " << rep.max_abs_error;
}

}  // namespace

// ---- conv2d ----------------------------------------------------------------

TEST(Conv2d, OnesKernelSumsWindow) {
  auto y = conv2d(Tensor::full({1, 1, 3, 3}, 1.0), Tensor::full({1, 1, 3, 3}, 1.0));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y.item(), 9.0);
}

TEST(Conv2d, UnitKernelIsIdentity) {
  Rng rng(1);
  auto x = random_tensor({2, 1, 5, 4}, rng, false);
  auto y = conv2d(x, Tensor::full({1, 1, 1, 1}, 1.0));
  EXPECT_EQ(y.values(), x.values());
}

TEST(Conv2d, StridedPaddedMatchesLoopOracle) {
  Rng rng(2);
  auto x = random_tensor({2, 3, 8, 8}, rng, false);
  auto w = random_tensor({4, 3, 3, 3}, rng, false);
  auto y = conv2d(x, w, Tensor(), 2, 1);
  ASSERT_EQ(y.shape(), (Shape{2, 4, 4, 4}));
  std::size_t Ho, Wo;
  auto ref = occage::testing::conv2d_oracle(x.values(), 2, 3, 8, 8, w.values(), 4, 3, 3, nullptr, 2, 1, Ho, Wo);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], 1e-10);
}

// Shapes up to 2x4x9x9 across 100 seeds.
TEST(Conv2d, OracleSweep) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t B = 1 + rng.below(2), Cin = 1 + rng.below(4), H = 1 + rng.below(9), W = 1 + rng.below(9);
    const std::size_t Cout = 1 + rng.below(4), k = 1 + rng.below(3), stride = 1 + rng.below(2), pad = rng.below(2);
    if (k > H + 2 * pad || k > W + 2 * pad) continue;
    auto x = random_tensor({B, Cin, H, W}, rng, false);
    auto w = random_tensor({Cout, Cin, k, k}, rng, false);
    auto b = random_tensor({Cout}, rng, false);
    auto y = conv2d(x, w, b, stride, pad);
    std::size_t Ho, Wo;
    auto ref = occage::testing::conv2d_oracle(x.values(), B, Cin, H, W, w.values(), Cout, k, k, &b.values(), stride,
                                              pad, Ho, Wo);
    ASSERT_EQ(y.shape(), (Shape{B, Cout, Ho, Wo})) << "seed " << seed;
    for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(y.data()[i], ref[i], 1e-10) << "seed " << seed;
  }
}

TEST(Conv2d, ChannelMismatchIsDescriptive) {
  try {
    conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channels"), std::string::npos);
  }
}

TEST(Conv2d, Gradients) {
  Rng rng(3);
  auto x = random_tensor({2, 2, 5, 5}, rng);
  auto w = random_tensor({3, 2, 3, 3}, rng);
  auto b = random_tensor({3}, rng);
  expect_gradcheck([&] { return project(conv2d(x, w, b, 2, 1), 1); }, {x, w, b});
  expect_gradcheck([&] { return project(conv2d(x, w, b, 1, 0), 2); }, {x, w, b});
}

// ---- activations -----------------------------------------------------------

TEST(Activations, ReferenceValues) {
  EXPECT_DOUBLE_EQ(relu(Tensor::scalar(-1.5)).item(), 0.0);
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_NEAR(silu(Tensor::scalar(1.0)).item(), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(silu(Tensor::scalar(1.0)).item(), 0.731058, 1e-6);
}

// ---- normalization ---------------------------------------------------------

TEST(LayerNorm, ConstantRowIsZero) {
  auto y = layer_norm(Tensor::full({1, 4}, 3.0), Tensor::full({4}, 1.0), Tensor::zeros({4}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, ClosedForm) {
  auto y = layer_norm(Tensor({3}, {1, 2, 3}), Tensor::full({3}, 1.0), Tensor::zeros({3}));
  const double s = std::sqrt(2.0 / 3.0 + 1e-5);
  EXPECT_NEAR(y.data()[0], -1.0 / s, 1e-12);
  EXPECT_NEAR(y.data()[0], -1.22474, 1e-4);
  EXPECT_NEAR(y.data()[1], 0.0, 1e-12);
  EXPECT_NEAR(y.data()[2], 1.22474, 1e-4);
}

TEST(LayerNorm, AffineMismatchThrows) {
  EXPECT_THROW(layer_norm(Tensor::zeros({2, 3}), Tensor::zeros({4}), Tensor::zeros({4})), ShapeError);
}

TEST(BatchNorm, TrainingOutputIsStandardized) {
  Rng rng(4);
  auto x = random_tensor({4, 3, 5, 5}, rng, false, 3.0);
  BatchNorm bn(3);
  auto y = bn(x, true);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    const double n = 4 * 25;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 25; ++i) m += y.data()[(b * 3 + c) * 25 + i];
    m /= n;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 25; ++i) v += std::pow(y.data()[(b * 3 + c) * 25 + i] - m, 2);
    v /= n;
    EXPECT_NEAR(m, 0.0, 1e-6);
    // eps = 1e-5 shrinks the variance by var/(var+eps).
    EXPECT_NEAR(v, 1.0, 1e-5);
  }
}

TEST(BatchNorm, UpdatesRunningStatsOnlyInTraining) {
  Rng rng(5);
  auto x = random_tensor({3, 2, 2, 2}, rng, false);
  BatchNorm bn(2);
  bn(x, false);
  EXPECT_EQ(bn.running_mean.values(), std::vector<double>(2, 0.0));
  bn(x, true);
  EXPECT_NE(bn.running_mean.values(), std::vector<double>(2, 0.0));
}

TEST(BatchNorm, ChannelMismatchThrows) {
  BatchNorm bn(3);
  EXPECT_THROW(bn(Tensor::zeros({2, 4, 2, 2}), true), ShapeError);
}

TEST(Normalization, Gradients) {
  Rng rng(6);
  auto x = random_tensor({3, 5}, rng);
  auto g = random_tensor({5}, rng);
  auto b = random_tensor({5}, rng);
  expect_gradcheck([&] { return project(layer_norm(x, g, b), 1); }, {x, g, b});
  auto xb = random_tensor({3, 2, 2, 2}, rng);
  auto gb = random_tensor({2}, rng);
  auto bb = random_tensor({2}, rng);
  auto rm = Tensor::zeros({2}), rv = Tensor::full({2}, 1.0);
  expect_gradcheck([&] { return project(batch_norm(xb, gb, bb, rm, rv, true), 2); }, {xb, gb, bb});
  auto rm2 = Tensor({2}, {0.1, -0.2}), rv2 = Tensor({2}, {0.5, 2.0});
  expect_gradcheck([&] { return project(batch_norm(xb, gb, bb, rm2, rv2, false), 3); }, {xb, gb, bb});
  expect_gradcheck([&] { return project(normalize_rows(x), 4); }, {x});
}

// ---- softmax ---------------------------------------------------------------

TEST(Softmax, ReferenceValues) {
  auto u = softmax(Tensor({3}, {0, 0, 0}), 0);
  for (double v : u.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  auto big = softmax(Tensor({2}, {1000, 1000}), 0);
  EXPECT_DOUBLE_EQ(big.data()[0], 0.5);
  EXPECT_DOUBLE_EQ(big.data()[1], 0.5);
  auto s = softmax(Tensor({3}, {1, 2, 3}), 0);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(s.data()[0], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(s.data()[0], 0.09003, 1e-5);
  EXPECT_NEAR(s.data()[1], 0.24473, 1e-5);
  EXPECT_NEAR(s.data()[2], 0.66524, 1e-5);
}

TEST(Softmax, RowsAreProbabilityVectorsAlongAnyAxis) {
  Rng rng(7);
  auto x = random_tensor({3, 4, 5}, rng, false, 10.0);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    auto y = softmax(x, axis);
    auto ly = log_softmax(x, axis);
    for (std::size_t i = 0; i < y.numel(); ++i) {
      EXPECT_GE(y.data()[i], 0.0);
      EXPECT_NEAR(std::exp(ly.data()[i]), y.data()[i], 1e-12);
    }
  }
  auto y = softmax(x, 2);
  for (std::size_t r = 0; r < 12; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 5; ++j) s += y.data()[r * 5 + j];
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Softmax, Gradients) {
  Rng rng(8);
  auto x = random_tensor({3, 4}, rng);
  expect_gradcheck([&] { return project(softmax(x, 1), 1); }, {x});
  expect_gradcheck([&] { return project(softmax(x, 0), 2); }, {x});
  expect_gradcheck([&] { return project(log_softmax(x, 1), 3); }, {x});
}

// ---- resampling / pooling --------------------------------------------------

TEST(Upsample, ConstantStaysConstant) {
  auto y = bilinear_upsample(Tensor::full({1, 2, 3, 3}, 4.5), 7, 9);
  for (double v : y.data()) EXPECT_NEAR(v, 4.5, 1e-12);
  auto z = bilinear_upsample(Tensor::full({1, 1, 1, 1}, -2.0), 4, 4);
  for (double v : z.data()) EXPECT_EQ(v, -2.0);
}

TEST(Upsample, TwoByTwoMatchesOracle) {
  auto x = Tensor({1, 1, 2, 2}, {0, 1, 2, 3});
  auto y = bilinear_upsample(x, 4, 4);
  const std::vector<double> expected{0.0, 0.25, 0.75, 1.0, 0.5, 0.75, 1.25, 1.5,
                                     1.5, 1.75, 2.25, 2.5, 2.0, 2.25, 2.75, 3.0};
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_NEAR(y.data()[i], expected[i], 1e-10);
    EXPECT_NEAR(y.data()[i], occage::testing::bilinear_oracle(x.values(), 2, 2, 4, 4, i / 4, i % 4), 1e-10);
  }
}

TEST(Upsample, RandomMatchesOracle) {
  Rng rng(9);
  auto x = random_tensor({1, 1, 3, 5}, rng, false);
  auto y = bilinear_upsample(x, 7, 11);
  for (std::size_t i = 0; i < 77; ++i)
    EXPECT_NEAR(y.data()[i], occage::testing::bilinear_oracle(x.values(), 3, 5, 7, 11, i / 11, i % 11), 1e-10);
}

TEST(Upsample, RejectsZeroAndShrinking) {
  EXPECT_THROW(bilinear_upsample(Tensor::zeros({1, 1, 2, 2}), 0, 4), ShapeError);
  EXPECT_THROW(bilinear_upsample(Tensor::zeros({1, 1, 4, 4}), 2, 4), ShapeError);
}

TEST(Pooling, MeansAndGradient) {
  EXPECT_DOUBLE_EQ(global_avg_pool(Tensor::full({1, 1, 3, 3}, 7.0)).item(), 7.0);
  EXPECT_DOUBLE_EQ(global_avg_pool(Tensor({1, 1, 2, 2}, {1, 2, 3, 4})).item(), 2.5);
  auto x = Tensor::full({2, 3, 4, 5}, 1.0, true);
  sum(global_avg_pool(x)).backward();
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0 / 20.0);
}

TEST(ResamplingGradients, UpsampleAndPool) {
  Rng rng(10);
  auto x = random_tensor({2, 2, 3, 2}, rng);
  expect_gradcheck([&] { return project(bilinear_upsample(x, 5, 7), 1); }, {x});
  expect_gradcheck([&] { return project(global_avg_pool(x), 2); }, {x});
}

// ---- dropout ---------------------------------------------------------------

TEST(Dropout, IdentityCases) {
  Rng rng(11);
  auto x = random_tensor({10}, rng, false);
  EXPECT_EQ(dropout(x, 0.0, true, rng).values(), x.values());
  EXPECT_EQ(dropout(x, 0.5, false, rng).values(), x.values());
  EXPECT_THROW(dropout(x, 1.0, true, rng), ValidationError);
}

TEST(Dropout, BinomialStatistics) {
  Rng rng(12);
  const std::size_t n = 100000;
  auto y = dropout(Tensor::full({n}, 1.0), 0.5, true, rng);
  double m = 0;
  std::size_t zeros = 0;
  for (double v : y.data()) {
    m += v;
    zeros += v == 0.0;
  }
  m /= static_cast<double>(n);
  // Survivors are 2.0 with probability 1/2: per-element sd is 1.
  const double sd_mean = 1.0 / std::sqrt(static_cast<double>(n));
  const double sd_frac = 0.5 / std::sqrt(static_cast<double>(n));
  EXPECT_NEAR(m, 1.0, 3 * sd_mean);
  EXPECT_NEAR(static_cast<double>(zeros) / static_cast<double>(n), 0.5, 3 * sd_frac);
}

// ---- spectral normalization -------------------------------------------------

TEST(Spectral, DiagonalConvergesToUnitNorm) {
  Rng rng(13);
  auto w = Tensor({2, 2}, {3, 0, 0, 1});
  PowerIterationState st(2, 2, rng);
  auto wn = spectral_normalize(w, st, 50);
  EXPECT_NEAR(estimate_sigma_max(wn.data(), 2), 1.0, 1e-6);
  EXPECT_NEAR(wn.data()[0], 1.0, 1e-6);
  EXPECT_NEAR(wn.data()[3], 1.0 / 3.0, 1e-6);
}

TEST(Spectral, IdentityUnchanged) {
  Rng rng(14);
  auto w = Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  PowerIterationState st(3, 3, rng);
  auto wn = spectral_normalize(w, st, 50);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(wn.data()[i], w.data()[i], 1e-6);
}

TEST(Spectral, RandomMatricesNormalizeAndAreScaleEquivariant) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto w = random_tensor({4, 2, 3, 3}, rng, false);
    std::vector<double> scaled(w.values());
    for (auto& v : scaled) v *= 7.5;
    auto w2 = Tensor(w.shape(), scaled);
    PowerIterationState s1(4, 18, rng), s2 = PowerIterationState(4, 18, rng);
    auto a = spectral_normalize(w, s1, 100);
    auto b = spectral_normalize(w2, s2, 100);
    const double sigma = estimate_sigma_max(a.data(), 4);
    EXPECT_GE(sigma, 0.99);
    EXPECT_LE(sigma, 1.01);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-6);
  }
}

TEST(Spectral, ZeroWeightUsesSigmaFloor) {
  Rng rng(15);
  PowerIterationState st(2, 3, rng);
  auto wn = spectral_normalize(Tensor::zeros({2, 3}), st, 3);
  for (double v : wn.data()) EXPECT_EQ(v, 0.0);
}

TEST(Spectral, Gradient) {
  Rng rng(16);
  auto w = random_tensor({3, 4}, rng);
  PowerIterationState st(3, 4, rng);
  {
    NoGradGuard g;
    spectral_normalize(w, st, 30);
  }
  // iters = 0 keeps u, v fixed between evaluations.
  expect_gradcheck([&] { return project(spectral_normalize(w, st, 0), 1); }, {w});
}

// ---- Huber -----------------------------------------------------------------

TEST(Huber, ClosedFormAndGradient) {
  EXPECT_DOUBLE_EQ(huber_loss(Tensor::scalar(3.0), {3.0}, 1.0).item(), 0.0);
  EXPECT_DOUBLE_EQ(huber_loss(Tensor::scalar(0.5), {0.0}, 1.0).item(), 0.125);
  EXPECT_DOUBLE_EQ(huber_loss(Tensor::scalar(2.0), {0.0}, 1.0).item(), 1.5);
  auto p = Tensor({4}, {0.3, -2.5, 1.7, 0.05}, true);
  expect_gradcheck([&] { return huber_loss(p, {0.0, 0.0, 0.0, 0.5}, 1.0); }, {p});
}
