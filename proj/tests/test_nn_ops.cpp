#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "pagenet/nn/ops.hpp"

using namespace pagenet;
using namespace pagenet::nn;

namespace {

Tensor4 random_tensor(std::mt19937_64& rng, int n, int c, int h, int w) {
  std::normal_distribution<double> g(0, 1);
  Tensor4 t(n, c, h, w);
  for (auto& v : t.values()) v = g(rng);
  return t;
}

ConvLayerParams random_layer(std::mt19937_64& rng, int out, int in, int k) {
  std::normal_distribution<double> g(0, 0.5);
  ConvLayerParams p(out, in, k);
  for (auto& v : p.weights) v = g(rng);
  for (auto& v : p.bias) v = g(rng);
  return p;
}

// Direct six-loop same-padded convolution.
Tensor4 naive_conv(const Tensor4& x, const ConvLayerParams& p, bool relu) {
  const int pad = p.kernel / 2;
  Tensor4 out(x.n(), p.out_channels, x.h(), x.w());
  for (int b = 0; b < x.n(); ++b)
    for (int o = 0; o < p.out_channels; ++o)
      for (int y = 0; y < x.h(); ++y)
        for (int xx = 0; xx < x.w(); ++xx) {
          double s = p.bias[o];
          for (int i = 0; i < p.in_channels; ++i)
            for (int ky = 0; ky < p.kernel; ++ky)
              for (int kx = 0; kx < p.kernel; ++kx) {
                const int sy = y + ky - pad, sx = xx + kx - pad;
                if (sy < 0 || sx < 0 || sy >= x.h() || sx >= x.w()) continue;
                s += p.w(o, i, ky, kx) * x(b, i, sy, sx);
              }
          out(b, o, y, xx) = relu ? std::max(0.0, s) : s;
        }
  return out;
}

double inner(const Tensor4& a, const Tensor4& b) {
  return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

double mean(const Tensor4& t) {
  return std::accumulate(t.values().begin(), t.values().end(), 0.0) / static_cast<double>(t.size());
}

}  // namespace

TEST(ConvLayer, OneByOneIdentity) {
  std::mt19937_64 rng(1);
  const auto x = random_tensor(rng, 2, 3, 5, 4);
  ConvLayerParams p(3, 3, 1);
  for (int c = 0; c < 3; ++c) p.w(c, c, 0, 0) = 1.0;
  EXPECT_EQ(conv_layer(x, p, Activation::none), x);
}

TEST(ConvLayer, ZeroWeightsBiasThroughRelu) {
  std::mt19937_64 rng(2);
  const auto x = random_tensor(rng, 1, 2, 6, 6);
  ConvLayerParams p(2, 2, 3);
  p.bias = {0.7, -0.4};
  const auto out = conv_layer(x, p, Activation::relu);
  for (int y = 0; y < 6; ++y)
    for (int xx = 0; xx < 6; ++xx) {
      EXPECT_EQ(out(0, 0, y, xx), 0.7);
      EXPECT_EQ(out(0, 1, y, xx), 0.0);
    }
}

TEST(ConvLayer, MatchesNaiveLoops) {
  std::mt19937_64 rng(3);
  for (int k : {1, 3, 5}) {
    const auto x = random_tensor(rng, 2, 3, 7, 9);
    const auto p = random_layer(rng, 4, 3, k);
    for (bool relu : {false, true}) {
      const auto got = conv_layer(x, p, relu ? Activation::relu : Activation::none);
      const auto want = naive_conv(x, p, relu);
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.values()[i], want.values()[i], 1e-6);
    }
  }
}

TEST(ConvLayer, ChannelMismatchAndEvenKernel) {
  EXPECT_THROW(conv_layer(Tensor4(1, 2, 4, 4), ConvLayerParams(1, 3, 3), Activation::none), ShapeMismatch);
  EXPECT_THROW(ConvLayerParams(1, 1, 2), ShapeMismatch);
}

TEST(ConvBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const auto x = random_tensor(rng, 2, 2, 5, 6);
  const auto p = random_layer(rng, 3, 2, 3);
  const auto probe = random_tensor(rng, 2, 3, 5, 6);
  // Objective: <probe, conv(x)>, so dout = probe.
  ConvLayerParams grad(3, 2, 3);
  const auto dx = conv_backward(x, p, probe, grad, true);
  const double eps = 1e-5;
  auto objective = [&](const Tensor4& xx, const ConvLayerParams& pp) {
    return inner(probe, conv_layer(xx, pp, Activation::none));
  };
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    auto pp = p, pm = p;
    pp.weights[i] += eps;
    pm.weights[i] -= eps;
    EXPECT_NEAR(grad.weights[i], (objective(x, pp) - objective(x, pm)) / (2 * eps), 1e-6);
  }
  for (std::size_t i = 0; i < p.bias.size(); ++i) {
    auto pp = p, pm = p;
    pp.bias[i] += eps;
    pm.bias[i] -= eps;
    EXPECT_NEAR(grad.bias[i], (objective(x, pp) - objective(x, pm)) / (2 * eps), 1e-6);
  }
  for (std::size_t i = 0; i < x.size(); i += 7) {
    auto xp = x, xm = x;
    xp.values()[i] += eps;
    xm.values()[i] -= eps;
    EXPECT_NEAR(dx.values()[i], (objective(xp, p) - objective(xm, p)) / (2 * eps), 1e-6);
  }
}

TEST(ConvBackward, AccumulatesIntoGradient) {
  std::mt19937_64 rng(5);
  const auto x = random_tensor(rng, 1, 1, 4, 4);
  const auto p = random_layer(rng, 1, 1, 3);
  const auto d = random_tensor(rng, 1, 1, 4, 4);
  ConvLayerParams once(1, 1, 3), twice(1, 1, 3);
  conv_backward(x, p, d, once, false);
  conv_backward(x, p, d, twice, false);
  conv_backward(x, p, d, twice, false);
  for (std::size_t i = 0; i < once.weights.size(); ++i) EXPECT_DOUBLE_EQ(twice.weights[i], 2 * once.weights[i]);
}

TEST(AvgPool, ConstantAndBlock) {
  Tensor4 c(1, 2, 4, 6, 3.25);
  const auto pc = avg_pool_2x2(c);
  EXPECT_EQ(pc.shape(), (Shape4{1, 2, 2, 3}));
  for (double v : pc.values()) EXPECT_EQ(v, 3.25);
  Tensor4 block(1, 1, 2, 2);
  block.values() = {0, 0, 2, 2};
  EXPECT_EQ(avg_pool_2x2(block)(0, 0, 0, 0), 1.0);
  EXPECT_THROW(avg_pool_2x2(Tensor4(1, 1, 3, 4)), ShapeMismatch);
}

TEST(AvgPool, PoolThenUpsamplePreservesMean) {
  std::mt19937_64 rng(6);
  for (int factor : {2, 4, 8}) {
    const auto x = random_tensor(rng, 2, 3, 16, 24);
    const auto pooled = avg_pool_2x2(x);
    EXPECT_NEAR(mean(pooled), mean(x), 1e-12);
    EXPECT_NEAR(mean(upsample_bilinear(pooled, 2)), mean(x), 1e-6);
    const auto small = random_tensor(rng, 1, 2, 4, 5);
    EXPECT_NEAR(mean(upsample_bilinear(small, factor)), mean(small), 1e-6);
  }
}

TEST(Upsample, ConstantShapeAndRamp) {
  Tensor4 c(2, 3, 3, 5, -1.5);
  const auto u = upsample_bilinear(c, 4);
  EXPECT_EQ(u.shape(), (Shape4{2, 3, 12, 20}));
  for (double v : u.values()) EXPECT_DOUBLE_EQ(v, -1.5);

  Tensor4 ramp(1, 1, 2, 2);
  ramp.values() = {0, 1, 2, 3};
  // Row taps: output row centers map to source rows -0.25, 0.25, 0.75, 1.25
  // (clamped to [0, 1]); columns identically.
  const std::vector<double> want{0.0, 0.25, 0.75, 1.0,  //
                                 0.5, 0.75, 1.25, 1.5,  //
                                 1.5, 1.75, 2.25, 2.5,  //
                                 2.0, 2.25, 2.75, 3.0};
  const auto got = upsample_bilinear(ramp, 2);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_DOUBLE_EQ(got.values()[i], want[i]);
  EXPECT_THROW(upsample_bilinear(ramp, 3), ShapeMismatch);
}

TEST(Adjoints, PoolAndUpsampleBackwardAreTransposes) {
  std::mt19937_64 rng(7);
  const auto x = random_tensor(rng, 2, 2, 8, 6);
  const auto y = random_tensor(rng, 2, 2, 4, 3);
  EXPECT_NEAR(inner(avg_pool_2x2(x), y), inner(x, avg_pool_2x2_backward(y)), 1e-10);
  for (int f : {2, 4, 8}) {
    const auto a = random_tensor(rng, 1, 2, 3, 4);
    const auto b = random_tensor(rng, 1, 2, 3 * f, 4 * f);
    EXPECT_NEAR(inner(upsample_bilinear(a, f), b), inner(a, upsample_bilinear_backward(b, f)), 1e-9);
  }
}

TEST(Channels, ConcatSliceRoundTrip) {
  std::mt19937_64 rng(8);
  const auto a = random_tensor(rng, 2, 2, 3, 3);
  const auto b = random_tensor(rng, 2, 3, 3, 3);
  const auto cat = concat_channels({a, b});
  EXPECT_EQ(cat.c(), 5);
  EXPECT_EQ(slice_channels(cat, 0, 2), a);
  EXPECT_EQ(slice_channels(cat, 2, 3), b);
  EXPECT_THROW(concat_channels({a, Tensor4(1, 1, 3, 3)}), ShapeMismatch);
}

TEST(Softmax, SumsToOneAndStable) {
  std::mt19937_64 rng(9);
  auto logits = random_tensor(rng, 2, 2, 5, 5);
  logits(0, 0, 0, 0) = 800.0;
  logits(0, 1, 0, 0) = -800.0;
  const auto p = softmax_channels(logits);
  for (int b = 0; b < 2; ++b)
    for (std::size_t k = 0; k < 25; ++k) EXPECT_NEAR(p.plane(b, 0)[k] + p.plane(b, 1)[k], 1.0, 1e-12);
  EXPECT_TRUE(p.all_finite());
  EXPECT_EQ(p(0, 0, 0, 0), 1.0);
}
