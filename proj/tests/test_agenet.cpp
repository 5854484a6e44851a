#include <gtest/gtest.h>

#include <cstring>

#include "occage/agenet/agenet.hpp"
#include "occage/numcore/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/swin_oracle.hpp"

using namespace occage;
using namespace occage::nc;
using occage::testing::random_tensor;

namespace {

Tensor project(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(y.numel());
  for (auto& v : w) v = rng.uniform(-1, 1);
  return sum(mul(y, Tensor(y.shape(), w)));
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

occage::testing::WindowAttentionWeights weights_of(const an::WindowAttention& a) {
  auto v = [](const Tensor& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
  return {v(a.qkv.weight), v(a.qkv.bias), v(a.proj.weight), v(a.proj.bias), v(a.bias_table)};
}

// Attention weights tiny at init would hide indexing bugs; spread them out.
void scramble(an::WindowAttention& a, Rng& rng) {
  for (Tensor t : {a.qkv.weight, a.qkv.bias, a.proj.bias, a.bias_table})
    for (auto& v : t.mutable_data()) v = rng.normal() * 0.5;
}

void expect_gradcheck(const std::function<Tensor()>& f, const std::vector<Tensor>& in, double tol = 1e-4,
                      std::size_t per_input = 0) {
  GradcheckOptions o;
  o.rel_tol = tol;
  o.max_per_input = per_input;
  const auto rep = gradcheck(f, in, o);
  EXPECT_TRUE(rep.passed()) << "max rel " << rep.max_rel_error << " failures " << rep.failures;
}

}  // namespace

TEST(PatchEmbed, ToyShapeAndConstantImage) {
  Rng rng(1);
  an::PatchEmbed e(4, 32, rng);
  const Tensor y = e(random_tensor({2, 3, 64, 64}, rng, false));
  EXPECT_EQ(y.shape(), (Shape{2, 16, 16, 32}));

  const Tensor c = e(Tensor::full({1, 3, 32, 32}, 0.3));
  for (std::size_t t = 1; t < 64; ++t)
    for (std::size_t k = 0; k < 32; ++k) EXPECT_DOUBLE_EQ(c.data()[t * 32 + k], c.data()[k]);
  EXPECT_THROW(e(Tensor::zeros({1, 3, 30, 30})), ShapeError);
}

TEST(WindowAttention, WholeMapWindowMatchesDenseOracle) {
  Rng rng(2);
  const std::size_t B = 2, S = 4, C = 8, heads = 2;
  an::WindowAttention a(C, heads, S, rng);
  scramble(a, rng);
  const Tensor x = random_tensor({B, S, S, C}, rng, false);
  const auto ref = occage::testing::window_attention_oracle(x.values(), B, S, S, C, heads, S, 0, weights_of(a));
  EXPECT_LT(max_abs_diff(a(x, 0).values(), ref), 1e-6);
}

TEST(WindowAttention, PartitionedAndShiftedMatchOracle) {
  Rng rng(3);
  const std::size_t B = 2, S = 8, C = 12, heads = 3, win = 4;
  an::WindowAttention a(C, heads, win, rng);
  scramble(a, rng);
  const Tensor x = random_tensor({B, S, S, C}, rng, false);
  for (std::size_t shift : {0, 1, 2, 3}) {
    const auto ref = occage::testing::window_attention_oracle(x.values(), B, S, S, C, heads, win, shift, weights_of(a));
    EXPECT_LT(max_abs_diff(a(x, shift).values(), ref), 1e-6) << "shift " << shift;
  }
}

TEST(WindowAttention, RowsAreProbabilities) {
  Rng rng(4);
  an::WindowAttention a(8, 2, 4, rng);
  scramble(a, rng);
  Tensor w;
  const Tensor x = random_tensor({1, 8, 8, 8}, rng, false);
  EXPECT_EQ(a(x, 2, &w).shape(), x.shape());
  const std::size_t N = 16;
  ASSERT_EQ(w.shape(), (Shape{4, 2, N, N}));
  for (std::size_t r = 0; r < w.numel() / N; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < N; ++j) s += w.data()[r * N + j];
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  EXPECT_THROW(a(random_tensor({1, 6, 6, 8}, rng, false), 0), ShapeError);
  EXPECT_THROW(a(x, 4), ShapeError);
}

TEST(SwinBlock, ShapeAndGradcheck) {
  Rng rng(5);
  an::SwinBlock blk(8, 2, 2, 1, 2, rng);
  scramble(blk.attn, rng);
  const Tensor x = random_tensor({1, 4, 4, 8}, rng);
  EXPECT_EQ(blk(x).shape(), x.shape());
  StateList s;
  blk.collect(s, "");
  std::vector<Tensor> in{x};
  for (auto& e : s) in.push_back(e.tensor);
  expect_gradcheck([&] { return project(blk(x), 7); }, in, 1e-4, 12);
}

TEST(PatchMerge, ShapesConstantsAndErrors) {
  Rng rng(6);
  an::PatchMerge toy(32, rng);
  EXPECT_EQ(toy(random_tensor({2, 16, 16, 32}, rng, false)).shape(), (Shape{2, 8, 8, 64}));

  an::PatchMerge paper(128, rng);
  EXPECT_EQ(paper(random_tensor({1, 56, 56, 128}, rng, false)).shape(), (Shape{1, 28, 28, 256}));

  const Tensor c = toy(Tensor::full({1, 4, 4, 32}, -1.5));
  for (std::size_t t = 1; t < 4; ++t)
    for (std::size_t k = 0; k < 64; ++k) EXPECT_DOUBLE_EQ(c.data()[t * 64 + k], c.data()[k]);
  EXPECT_THROW(toy(Tensor::zeros({1, 5, 4, 32})), ShapeError);
  EXPECT_THROW(toy(Tensor::zeros({1, 4, 4, 16})), ShapeError);
}

TEST(PatchMerge, NeighbourhoodOrderAndGradcheck) {
  Rng rng(7);
  an::PatchMerge m(2, rng);
  for (auto& v : m.norm.gamma.mutable_data()) v = 1.0;
  const Tensor x = random_tensor({1, 2, 2, 2}, rng);
  // One merged token: LN over the 8 concatenated channels, then the linear map.
  const auto xv = x.values();
  const std::size_t order[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  std::vector<double> cat;
  for (auto [dy, dx] : order)
    for (std::size_t c = 0; c < 2; ++c) cat.push_back(xv[(dy * 2 + dx) * 2 + c]);
  double mu = 0, var = 0;
  for (double v : cat) mu += v / 8;
  for (double v : cat) var += (v - mu) * (v - mu) / 8;
  const auto W = m.reduce.weight.values();
  const Tensor y = m(x);
  for (std::size_t o = 0; o < 4; ++o) {
    double acc = 0;
    for (std::size_t i = 0; i < 8; ++i) acc += W[o * 8 + i] * (cat[i] - mu) / std::sqrt(var + kNormEps);
    EXPECT_NEAR(y.data()[o], acc, 1e-12);
  }
  const Tensor x2 = random_tensor({1, 4, 4, 2}, rng);
  expect_gradcheck([&] { return project(m(x2), 3); }, {x2, m.norm.gamma, m.norm.beta, m.reduce.weight});
}

TEST(Arcm, ZeroedConvsGiveBitwiseResidualIdentity) {
  Rng rng(8);
  an::ArcmBlock a(16, rng);
  for (auto* c : {&a.conv1, &a.conv2})
    for (auto& v : c->weight.mutable_data()) v = 0.0;
  for (auto& v : a.bn1.gamma.mutable_data()) v = rng.uniform(0.5, 2.0);
  for (auto& v : a.bn2.gamma.mutable_data()) v = rng.uniform(0.5, 2.0);
  const Tensor x = random_tensor({2, 16, 5, 5}, rng, false);
  const Tensor y = a(x, false);
  ASSERT_EQ(y.shape(), x.shape());
  EXPECT_EQ(std::memcmp(y.data().data(), x.data().data(), x.numel() * sizeof(double)), 0);
}

TEST(Arcm, AttentionRangeShapesAndGradcheck) {
  Rng rng(9);
  an::ArcmBlock a(8, rng);
  const Tensor x = random_tensor({2, 8, 4, 4}, rng);
  const auto p = a.parts(x, true);
  EXPECT_EQ(p.output.shape(), x.shape());
  for (double v : p.attention.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_THROW(a(random_tensor({1, 4, 4, 4}, rng, false), true), ShapeError);

  an::ArcmBlock wide(512, rng);
  EXPECT_EQ(wide.attn_reduce.out_channels(), 64u);

  StateList s;
  a.collect(s, "");
  std::vector<Tensor> in{x};
  for (auto& e : s)
    if (e.trainable) in.push_back(e.tensor);
  expect_gradcheck([&] { return project(a(x, true), 4); }, in, 1e-4, 10);
}

TEST(Fusion, PoolingIsExactMean) {
  Rng rng(10);
  const Tensor m = random_tensor({1, 2, 56, 56}, rng, false);
  const Tensor p = global_avg_pool(m);
  for (std::size_t c = 0; c < 2; ++c) {
    long double s = 0;
    for (std::size_t i = 0; i < 56 * 56; ++i) s += m.data()[c * 56 * 56 + i];
    EXPECT_NEAR(p.data()[c], static_cast<double>(s / (56 * 56)), 1e-15);
  }
}

TEST(Fusion, ConstantMapsPoolIndependentOfSize) {
  Rng rng(11);
  an::BackboneConfig c;
  an::Fusion f(c, rng);
  auto maps = [&](std::size_t s0) {
    std::array<Tensor, an::kStages> y;
    for (std::size_t s = 0; s < an::kStages; ++s) y[s] = Tensor::full({1, c.channels(s), s0 >> s, s0 >> s}, 0.7);
    return y;
  };
  const auto big = f(maps(16), false).values(), small = f(maps(8), false).values();
  EXPECT_LT(max_abs_diff(big, small), 1e-12);
}

TEST(Fusion, BatchPermutationCovariance) {
  Rng rng(12);
  an::BackboneConfig c;
  an::Fusion f(c, rng);
  std::array<Tensor, an::kStages> y, yr;
  for (std::size_t s = 0; s < an::kStages; ++s) {
    y[s] = random_tensor({3, c.channels(s), 16u >> s, 16u >> s}, rng, false);
    const std::size_t per = y[s].numel() / 3;
    std::vector<double> r(y[s].numel());
    for (std::size_t b = 0; b < 3; ++b) std::copy_n(y[s].data().begin() + (2 - b) * per, per, r.begin() + b * per);
    yr[s] = Tensor(y[s].shape(), r);
  }
  for (bool training : {false, true}) {
    const Tensor a = f(y, training), b = f(yr, training);
    ASSERT_EQ(a.shape(), (Shape{3, c.fusion_dim}));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < c.fusion_dim; ++k)
        EXPECT_NEAR(a.data()[i * c.fusion_dim + k], b.data()[(2 - i) * c.fusion_dim + k], 1e-12);
  }
}

TEST(Backbone, ToyShapeAlgebra) {
  Rng rng(13);
  const auto cfg = an::BackboneConfig::toy();
  an::Backbone net(cfg, rng);
  const auto f = net(random_tensor({2, 3, 64, 64}, rng, false));
  for (std::size_t s = 0; s < an::kStages; ++s) {
    EXPECT_EQ(f.maps[s].shape(), (Shape{2, 32u << s, 16u >> s, 16u >> s}));
    EXPECT_EQ(an::as_tokens(f.maps[s]).shape(), (Shape{2, 256u >> (2 * s), 32u << s}));
  }
}

TEST(Backbone, EveryParameterReceivesGradient) {
  Rng rng(14);
  an::FeatureNet net(an::BackboneConfig::toy(), rng);
  const Tensor img = random_tensor({2, 3, 64, 64}, rng, false);
  const Tensor F = net(img, true);
  EXPECT_EQ(F.shape(), (Shape{2, 64}));
  project(F, 2).backward();
  StateList s;
  net.collect(s, "");
  check_unique_names(s);
  for (const auto& e : s) {
    if (!e.trainable) continue;
    double g = 0.0;
    for (double v : e.tensor.grad()) g = std::max(g, std::abs(v));
    EXPECT_GT(g, 0.0) << e.name;
  }
}

TEST(Backbone, ConfigValidationAndJson) {
  an::BackboneConfig c;
  c.image_size = 60;
  EXPECT_THROW(c.validate(), ValidationError);
  c = an::BackboneConfig::toy();
  c.heads[1] = 5;
  EXPECT_THROW(c.validate(), ValidationError);
  c = an::BackboneConfig::paper();
  EXPECT_NO_THROW(c.validate());
  const nlohmann::json j = c;
  EXPECT_EQ(j.get<an::BackboneConfig>().depths, c.depths);
  EXPECT_THROW((nlohmann::json{{"bogus", 1}}.get<an::BackboneConfig>()), ValidationError);
  EXPECT_THROW((nlohmann::json{{"window", "x"}}.get<an::BackboneConfig>()), ValidationError);
}
