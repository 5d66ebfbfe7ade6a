#include <gtest/gtest.h>

#include <random>

#include "gradcheck.hpp"
#include "pagenet/nn/fcn.hpp"

using namespace pagenet;
using namespace pagenet::nn;

namespace {

Tensor4 random_input(std::mt19937_64& rng, int n, int h, int w) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Tensor4 x(n, 3, h, w);
  for (auto& v : x.values()) v = u(rng);
  return x;
}

}  // namespace

TEST(FcnModel, ArchitectureShape) {
  const auto m = FcnModel::zeros(4);
  for (int s = 0; s < kNumScales; ++s) EXPECT_EQ(static_cast<int>(m.branches[s].size()), kBranchLengths[s]);
  EXPECT_EQ(m.branches[0][0].in_channels, 3);
  EXPECT_EQ(m.branches[2][0].in_channels, 4);
  EXPECT_EQ(m.head[0].in_channels, 16);
  EXPECT_EQ(m.head[1].out_channels, 2);
  // 22 branch layers of 4x4x9 (+bias), except the first (4x3x9), then heads.
  const std::size_t expect = (4 * 3 * 9 + 4) + 21 * (4 * 4 * 9 + 4) + (4 * 16 * 9 + 4) + (2 * 4 * 9 + 2);
  EXPECT_EQ(m.parameter_count(), expect);
}

TEST(FcnModel, InitializationSeededAndScaled) {
  const auto a = FcnModel::initialized(6, 3, 42);
  EXPECT_EQ(a, FcnModel::initialized(6, 3, 42));
  EXPECT_FALSE(a == FcnModel::initialized(6, 3, 43));
  const auto& layer = a.head[0];
  double sq = 0;
  for (double w : layer.weights) sq += w * w;
  const double var = sq / static_cast<double>(layer.weights.size());
  EXPECT_NEAR(var, 2.0 / (24 * 9), 0.3 * 2.0 / (24 * 9));
  for (double b : layer.bias) EXPECT_EQ(b, 0.0);
}

TEST(Forward, ProbabilitiesSumToOne) {
  std::mt19937_64 rng(1);
  const auto m = FcnModel::initialized(4, 3, 7);
  const auto p = forward(m, random_input(rng, 2, 24, 16));
  EXPECT_EQ(p.shape(), (Shape4{2, 2, 24, 16}));
  for (int b = 0; b < 2; ++b)
    for (std::size_t k = 0; k < p.shape().plane(); ++k) EXPECT_NEAR(p.plane(b, 0)[k] + p.plane(b, 1)[k], 1.0, 1e-6);
}

TEST(Forward, ZeroModelGivesHalfEverywhere) {
  std::mt19937_64 rng(2);
  const auto maps = predict(FcnModel::zeros(3), random_input(rng, 1, 16, 16));
  for (double v : maps[0].values) EXPECT_EQ(v, 0.5);
}

TEST(Forward, BitIdenticalAcrossRuns) {
  std::mt19937_64 rng(3);
  const auto x = random_input(rng, 1, 32, 32);
  EXPECT_EQ(forward(FcnModel::initialized(4, 3, 9), x), forward(FcnModel::initialized(4, 3, 9), x));
}

TEST(Forward, RejectsBadInputs) {
  const auto m = FcnModel::zeros(2);
  EXPECT_THROW(forward(m, Tensor4(1, 1, 16, 16)), ShapeMismatch);
  EXPECT_THROW(forward(m, Tensor4(1, 3, 12, 16)), ShapeMismatch);
}

TEST(Forward, TranslationCovariantInInterior) {
  // Content on a constant background, shifted by 8 px; pixels whose receptive
  // field stays inside the frame in both inputs must shift with it.
  std::mt19937_64 rng(4);
  const int H = 160;
  const int shift = 8;
  Tensor4 a(1, 3, H, H, 0.1), b(1, 3, H, H, 0.1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 60; y < 100; ++y)
      for (int x = 56; x < 96; ++x) {
        const double v = u(rng);
        a(0, ch, y, x) = v;
        b(0, ch, y, x + shift) = v;
      }
  const auto m = FcnModel::initialized(3, 3, 11);
  const auto pa = forward(m, a);
  const auto pb = forward(m, b);
  double worst = 0.0;
  for (int y = 64; y < 96; ++y)
    for (int x = 64; x < 96; ++x) worst = std::max(worst, std::abs(pa(0, 0, y, x) - pb(0, 0, y, x + shift)));
  EXPECT_LT(worst, 1e-4);
}

TEST(Loss, UniformPredictionIsLn2) {
  std::mt19937_64 rng(5);
  BinaryMask t(16, 16);
  for (int i = 0; i < 100; ++i) t.bits[i] = 1;
  EXPECT_NEAR(loss_only(FcnModel::zeros(2), random_input(rng, 1, 16, 16), {t}), std::log(2.0), 1e-4);
}

TEST(Loss, ConfidentCorrectPredictionNearZero) {
  std::mt19937_64 rng(6);
  auto m = FcnModel::zeros(2);
  m.head[1].bias = {40.0, -40.0};
  const BinaryMask all_page(16, 16, true);
  const auto x = random_input(rng, 1, 16, 16);
  EXPECT_LT(loss_only(m, x, {all_page}), 1e-12);
  EXPECT_NEAR(loss_and_gradients(m, x, {all_page}).loss, loss_only(m, x, {all_page}), 1e-15);
}

TEST(Loss, TargetShapeChecked) {
  EXPECT_THROW(loss_only(FcnModel::zeros(2), Tensor4(1, 3, 16, 16), {BinaryMask(8, 8)}), ShapeMismatch);
  EXPECT_THROW(loss_only(FcnModel::zeros(2), Tensor4(2, 3, 16, 16), {BinaryMask(16, 16)}), ShapeMismatch);
}

TEST(Gradients, MatchFiniteDifferencesForEveryLayer) {
  const auto entries = testing_support::run_gradcheck(4, 16, 2024, 1e-3, 0);
  ASSERT_EQ(entries.size(), 2u * (7 + 6 + 5 + 4 + 2));
  int probes = 0, kinked = 0;
  for (const auto& e : entries) {
    EXPECT_LT(e.rel_error, 1e-3) << e.name;
    EXPECT_GT(e.backprop_norm, 0.0) << e.name;
    probes += e.probes;
    kinked += e.kinked;
  }
  EXPECT_EQ(probes, static_cast<int>(FcnModel::zeros(4).parameter_count()));
  EXPECT_LE(kinked * 10, probes);
}

TEST(Gradients, BatchLossIsMeanOfPerSampleLosses) {
  std::mt19937_64 rng(8);
  const auto m = FcnModel::initialized(3, 3, 1);
  const auto x = random_input(rng, 2, 16, 16);
  BinaryMask t0(16, 16), t1(16, 16, true);
  Tensor4 x0(1, 3, 16, 16), x1(1, 3, 16, 16);
  std::copy_n(x.values().begin(), x0.size(), x0.values().begin());
  std::copy_n(x.values().begin() + static_cast<std::ptrdiff_t>(x0.size()), x1.size(), x1.values().begin());
  EXPECT_NEAR(loss_only(m, x, {t0, t1}), 0.5 * (loss_only(m, x0, {t0}) + loss_only(m, x1, {t1})), 1e-12);
}
