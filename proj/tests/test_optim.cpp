#include <gtest/gtest.h>

#include <cmath>

#include "occage/numcore/checkpoint.hpp"
#include "occage/numcore/optim.hpp"
#include "support/oracles.hpp"

using namespace occage;
using namespace occage::nc;

TEST(Adam, ConvergesOnQuadraticBowl) {
  auto w = Tensor::scalar(1.0, true);
  auto opt = make_adam({w}, 0.1);
  for (int i = 0; i < 200; ++i) {
    opt.zero_grad();
    square(w).backward();
    opt.step();
  }
  EXPECT_LT(std::abs(w.item()), 1e-2);
  EXPECT_EQ(opt.steps(), 200u);
}

TEST(AdamW, ZeroGradientOnlyDecays) {
  auto w = Tensor::scalar(2.0, true);
  auto opt = make_adamw({w}, 0.1, 0.05);
  w.zero_grad();
  opt.step();
  EXPECT_DOUBLE_EQ(w.item(), 2.0 - 0.1 * 0.05 * 2.0);
}

TEST(Adam, MissingGradientThrows) {
  auto w = Tensor::scalar(1.0, true);
  auto opt = make_adam({w}, 0.1);
  EXPECT_THROW(opt.step(), ValidationError);
}

TEST(Adam, StepCounterAndMomentShapes) {
  auto w = Tensor::zeros({3, 2}, true);
  auto opt = make_adamw({w}, 1e-3, 1e-2);
  for (int i = 1; i <= 3; ++i) {
    opt.zero_grad();
    sum(square(add_scalar(w, 1.0))).backward();
    opt.step();
    EXPECT_EQ(opt.steps(), static_cast<std::size_t>(i));
  }
  EXPECT_EQ(opt.first_moment(0).size(), w.numel());
  EXPECT_EQ(opt.second_moment(0).size(), w.numel());
}

TEST(Plateau, FlatMetricHalvesOnceAtEpochSix) {
  ReduceLrOnPlateau sched(0.5, 5);
  double lr = 1.0;
  std::vector<int> fired_at;
  for (int epoch = 1; epoch <= 7; ++epoch)
    if (sched.step(5.0, lr)) fired_at.push_back(epoch);
  ASSERT_EQ(fired_at.size(), 1u);
  EXPECT_EQ(fired_at[0], 6);
  EXPECT_DOUBLE_EQ(lr, 0.5);
}

TEST(Plateau, ImprovementsBelowThresholdDoNotCount) {
  ReduceLrOnPlateau sched(0.5, 2);
  double lr = 1.0;
  sched.step(10.0, lr);
  sched.step(10.0 * (1 - 5e-5), lr);  // < 1e-4 relative: still a bad epoch
  EXPECT_EQ(sched.bad_epochs(), 1u);
  sched.step(5.0, lr);
  EXPECT_EQ(sched.bad_epochs(), 0u);
  EXPECT_DOUBLE_EQ(lr, 1.0);
}

TEST(Plateau, RejectsBadFactor) { EXPECT_THROW(ReduceLrOnPlateau(1.0, 3), ValidationError); }

namespace {

struct TinyNet {
  Linear l1, l2;
  BatchNorm bn;
  explicit TinyNet(Rng& rng) : l1(3, 4, rng, InitScheme::kKaiming), l2(4, 1, rng), bn(4) {}
  Tensor forward(const Tensor& x) const {
    auto h = l1(x);
    h = reshape(bn(reshape(h, {x.size(0), 4}), true), {x.size(0), 4});
    return l2(relu(h));
  }
  void collect(StateList& s, const std::string& p) const {
    l1.collect(s, join_name(p, "l1"));
    bn.collect(s, join_name(p, "bn"));
    l2.collect(s, join_name(p, "l2"));
  }
};

std::vector<double> run_trajectory(std::uint64_t seed) {
  Rng rng(seed);
  TinyNet net(rng);
  auto opt = make_adamw(trainable(state_of(net)), 1e-2, 1e-3);
  std::vector<double> losses;
  for (int step = 0; step < 10; ++step) {
    auto x = occage::testing::random_tensor({8, 3}, rng, false);
    opt.zero_grad();
    auto loss = mean(square(net.forward(x)));
    loss.backward();
    opt.step();
    losses.push_back(loss.item());
  }
  for (const auto& e : state_of(net))
    for (double v : e.tensor.data()) losses.push_back(v);
  return losses;
}

}  // namespace

TEST(Determinism, SameSeedSameTrajectory) {
  const auto a = run_trajectory(42);
  const auto b = run_trajectory(42);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(std::bit_cast<std::uint64_t>(a[i]), std::bit_cast<std::uint64_t>(b[i]));
  EXPECT_NE(run_trajectory(43), a);
}

TEST(Checkpoint, RoundTripRestoresValuesAndConfig) {
  Rng rng(1);
  TinyNet a(rng), b(rng);
  const nlohmann::json cfg{{"width", 4}, {"name", "tiny"}};
  const auto bytes = serialize_state(state_of(a), cfg);
  auto ar = parse_archive(bytes);
  EXPECT_EQ(ar.config, cfg);
  load_state(state_of(b), ar);
  const auto sa = state_of(a), sb = state_of(b);
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_EQ(sa[i].tensor.values(), sb[i].tensor.values()) << sa[i].name;
  EXPECT_EQ(serialize_state(state_of(b), cfg), bytes);
}

TEST(Checkpoint, RejectsShapeMismatchAndGarbage) {
  Rng rng(2);
  Linear small(2, 3, rng), big(4, 3, rng);
  StateList s1, s2;
  small.collect(s1, "x");
  big.collect(s2, "x");
  auto ar = parse_archive(serialize_state(s1, {}));
  EXPECT_THROW(load_state(s2, ar), ShapeError);
  EXPECT_THROW(parse_archive("not a checkpoint at all"), IoError);
}

TEST(Checkpoint, DuplicateNamesRejected) {
  StateList s{{"a", Tensor::zeros({1}), true}, {"a", Tensor::zeros({1}), true}};
  EXPECT_THROW(check_unique_names(s), ValidationError);
}
