#include <gtest/gtest.h>

#include "occage/numcore/gradcheck.hpp"
#include "occage/numcore/ops.hpp"
#include "support/oracles.hpp"

using namespace occage;
using namespace occage::nc;
using occage::testing::random_tensor;

TEST(Tensor, RejectsLengthMismatch) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor({2, 0}, {}), ShapeError);
}

TEST(Tensor, ProductRule) {
  auto x = Tensor::scalar(2.0, true);
  auto y = Tensor::scalar(3.0, true);
  mul(x, y).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(y.grad()[0], 2.0);
}

TEST(Tensor, ReluSumGradient) {
  auto x = Tensor({2}, {-1.0, 2.0}, true);
  sum(relu(x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 1.0);
}

TEST(Tensor, NonScalarRootThrows) {
  auto x = Tensor({2}, {1.0, 2.0}, true);
  EXPECT_THROW(relu(x).backward(), ShapeError);
}

// Leaf gradients accumulate across backward calls; intermediates do not
// double-count.
TEST(Tensor, RepeatedBackwardAccumulatesLeaves) {
  auto x = Tensor::scalar(2.0, true);
  auto y = Tensor::scalar(3.0, true);
  auto root = mul(add_scalar(x, 1.0), y);
  root.backward();
  root.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  EXPECT_DOUBLE_EQ(y.grad()[0], 6.0);
}

TEST(Tensor, SharedSubexpressionGradient) {
  auto x = Tensor::scalar(3.0, true);
  auto h = square(x);
  add(h, h).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Tensor, NoGradGuardSkipsGraph) {
  auto x = Tensor::scalar(1.0, true);
  NoGradGuard g;
  auto y = mul_scalar(x, 2.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Tensor, NonParticipatingParameterGradStaysZero) {
  auto used = Tensor::scalar(1.0, true);
  auto unused = Tensor::scalar(5.0, true);
  used.zero_grad();
  unused.zero_grad();
  square(used).backward();
  EXPECT_DOUBLE_EQ(unused.grad()[0], 0.0);
}

TEST(Shape, PermuteMatchesIndexing) {
  Rng rng(1);
  auto x = random_tensor({2, 3, 4}, rng, false);
  auto y = permute(x, {2, 0, 1});
  ASSERT_EQ(y.shape(), (Shape{4, 2, 3}));
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(y.data()[(c * 2 + a) * 3 + b], x.data()[(a * 3 + b) * 4 + c]);
}

TEST(Shape, ConcatThenSliceRecoversParts) {
  Rng rng(2);
  auto a = random_tensor({2, 3, 2}, rng, false);
  auto b = random_tensor({2, 1, 2}, rng, false);
  auto c = concat({a, b}, 1);
  ASSERT_EQ(c.shape(), (Shape{2, 4, 2}));
  auto a2 = slice(c, 1, 0, 3);
  auto b2 = slice(c, 1, 3, 1);
  EXPECT_EQ(a2.values(), a.values());
  EXPECT_EQ(b2.values(), b.values());
}

// <gather(x, idx), y> == <x, scatter_add(y, idx)>
TEST(Shape, GatherScatterAreAdjoint) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 7, m = 11;
    std::vector<std::ptrdiff_t> idx(m);
    for (auto& i : idx) i = static_cast<std::ptrdiff_t>(rng.below(n + 1)) - 1;
    auto x = random_tensor({n}, rng, false);
    auto y = random_tensor({m}, rng, false);
    auto gx = gather(x, idx, {m});
    auto sy = scatter_add(y, idx, {n});
    double l = 0, r = 0;
    for (std::size_t i = 0; i < m; ++i) l += gx.data()[i] * y.data()[i];
    for (std::size_t i = 0; i < n; ++i) r += x.data()[i] * sy.data()[i];
    EXPECT_NEAR(l, r, 1e-12);
  }
}

TEST(LinearAlgebra, MatmulMatchesLoops) {
  Rng rng(4);
  auto a = random_tensor({2, 3, 4}, rng, false);
  auto b = random_tensor({2, 4, 5}, rng, false);
  auto bt = random_tensor({2, 5, 4}, rng, false);
  auto c = matmul(a, b);
  auto ct = matmul(a, bt, true);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double s = 0, st = 0;
        for (std::size_t k = 0; k < 4; ++k) {
          s += a.data()[(t * 3 + i) * 4 + k] * b.data()[(t * 4 + k) * 5 + j];
          st += a.data()[(t * 3 + i) * 4 + k] * bt.data()[(t * 5 + j) * 4 + k];
        }
        EXPECT_NEAR(c.data()[(t * 3 + i) * 5 + j], s, 1e-12);
        EXPECT_NEAR(ct.data()[(t * 3 + i) * 5 + j], st, 1e-12);
      }
}

TEST(LinearAlgebra, MatmulRejectsInnerMismatch) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), ShapeError);
}

// ---- finite-difference checks ---------------------------------------------

namespace {

void expect_gradcheck(const std::function<Tensor()>& f, const std::vector<Tensor>& in, double tol = 1e-4) {
  GradcheckOptions o;
  o.rel_tol = tol;
  auto rep = gradcheck(f, in, o);
  EXPECT_TRUE(rep.passed()) << "max rel " << rep.max_rel_error << " max abs " << rep.max_abs_error;
}

// Random projection so the scalar root depends on every output element.
Tensor project(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, random_tensor(y.shape(), rng, false)));
}

}  // namespace

TEST(Gradcheck, Elementwise) {
  Rng rng(10);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({3, 4}, rng);
  auto pos = Tensor({5}, {0.5, 1.0, 1.5, 2.0, 3.0}, true);
  expect_gradcheck([&] { return project(add(a, b), 1); }, {a, b});
  expect_gradcheck([&] { return project(sub(a, b), 2); }, {a, b});
  expect_gradcheck([&] { return project(mul(a, b), 3); }, {a, b});
  expect_gradcheck([&] { return project(sigmoid(a), 4); }, {a});
  expect_gradcheck([&] { return project(silu(a), 5); }, {a});
  expect_gradcheck([&] { return project(nc::tanh(a), 6); }, {a});
  expect_gradcheck([&] { return project(gelu(a), 7); }, {a});
  expect_gradcheck([&] { return project(nc::exp(a), 8); }, {a});
  expect_gradcheck([&] { return project(nc::log(pos), 9); }, {pos});
  expect_gradcheck([&] { return project(square(a), 10); }, {a});
  expect_gradcheck([&] { return project(mul_scalar(add_scalar(a, 0.3), -2.0), 11); }, {a});
}

// Kinks are avoided by keeping inputs away from zero.
TEST(Gradcheck, PiecewiseLinear) {
  auto x = Tensor({6}, {-1.3, -0.4, 0.2, 0.9, 1.7, -2.2}, true);
  expect_gradcheck([&] { return project(relu(x), 1); }, {x});
  expect_gradcheck([&] { return project(leaky_relu(x, 0.2), 2); }, {x});
  expect_gradcheck([&] { return project(nc::abs(x), 3); }, {x});
}

TEST(Gradcheck, ShapeOps) {
  Rng rng(11);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({2, 2, 4}, rng);
  auto t = random_tensor({3, 4}, rng);
  expect_gradcheck([&] { return project(permute(a, {1, 2, 0}), 1); }, {a});
  expect_gradcheck([&] { return project(concat({a, b}, 1), 2); }, {a, b});
  expect_gradcheck([&] { return project(slice(a, 2, 1, 2), 3); }, {a});
  expect_gradcheck([&] { return project(reshape(a, {6, 4}), 4); }, {a});
  expect_gradcheck([&] { return project(add_trailing(a, t), 5); }, {a, t});
  expect_gradcheck([&] { return mean(square(a)); }, {a});
  std::vector<std::ptrdiff_t> idx{0, 5, -1, 5, 23, 7};
  expect_gradcheck([&] { return project(gather(a, idx, {6}), 6); }, {a});
  expect_gradcheck([&] { return project(scatter_add(slice(a, 0, 0, 1), std::vector<std::ptrdiff_t>(12, 2), {4}), 7); },
                   {a});
}

TEST(Gradcheck, MatmulAndLinear) {
  Rng rng(12);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({2, 4, 5}, rng);
  auto bt = random_tensor({2, 5, 4}, rng);
  auto w = random_tensor({6, 4}, rng);
  auto bias = random_tensor({6}, rng);
  expect_gradcheck([&] { return project(matmul(a, b), 1); }, {a, b});
  expect_gradcheck([&] { return project(matmul(a, bt, true), 2); }, {a, bt});
  expect_gradcheck([&] { return project(linear(a, w, bias), 3); }, {a, w, bias});
  expect_gradcheck([&] { return project(matmul(a, w, true), 4); }, {a, w});
}
