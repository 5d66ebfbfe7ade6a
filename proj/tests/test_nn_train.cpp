#include <gtest/gtest.h>

#include <numeric>

#include "pagenet/nn/train.hpp"
#include "pagenet/synthetic.hpp"

using namespace pagenet;
using namespace pagenet::nn;

namespace {

FcnModel filled(int base, double v) {
  auto m = FcnModel::zeros(base);
  m.for_each_param([&](std::span<double> p) {
    for (auto& x : p) x = v;
  });
  return m;
}

TrainConfig plain(double lr) {
  TrainConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.lr_initial = lr;
  cfg.lr_after = lr / 10;
  cfg.grad_clip_norm = 1e9;
  return cfg;
}

std::vector<Sample> synthetic_samples(std::uint64_t seed, std::size_t n, const std::string& prefix) {
  SyntheticSpec spec;
  spec.image_size = 64;
  spec.book_edge_prob = 0.5;
  spec.partial_page_prob = 0.5;
  spec.seed = seed;
  std::vector<Sample> out;
  for (auto& s : generate_synthetic(spec, n)) {
    s.record.image_path = prefix + s.record.image_path;
    out.push_back(preprocess(s.image, s.record, 64));
  }
  return out;
}

}  // namespace

TEST(TrainConfig, DefaultsAndValidation) {
  const TrainConfig cfg;
  EXPECT_EQ(cfg.total_updates, 15000);
  EXPECT_EQ(cfg.batch_size, 2);
  EXPECT_EQ(cfg.lr_initial, 0.001);
  EXPECT_EQ(cfg.lr_after, 0.0001);
  EXPECT_EQ(cfg.lr_drop_at, 10000);
  EXPECT_EQ(cfg.momentum, 0.9);
  EXPECT_EQ(cfg.weight_decay, 0.0005);
  EXPECT_EQ(cfg.grad_clip_norm, 10.0);
  EXPECT_EQ(cfg.num_restarts, 10);
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.learning_rate(9999), 0.001);
  EXPECT_EQ(cfg.learning_rate(10000), 0.0001);

  TrainConfig bad = cfg;
  bad.lr_drop_at = 20000;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.lr_after = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(SgdStep, PlainGradientDescent) {
  auto model = filled(2, 1.0);
  auto state = SgdState::for_model(model);
  const auto g = filled(2, 0.25);
  sgd_step(model, g, state, plain(0.1), 0);
  model.for_each_param([](std::span<const double> p) {
    for (double v : p) EXPECT_DOUBLE_EQ(v, 1.0 - 0.1 * 0.25);
  });
}

TEST(SgdStep, ClipHalvesNormTwenty) {
  auto model = FcnModel::zeros(2);
  auto state = SgdState::for_model(model);
  auto g = FcnModel::zeros(2);
  g.head[1].weights[0] = 12.0;
  g.head[1].bias[1] = 16.0;  // norm 20
  auto cfg = plain(1.0);
  cfg.grad_clip_norm = 10.0;
  const auto info = sgd_step(model, g, state, cfg, 0);
  EXPECT_DOUBLE_EQ(info.grad_norm, 20.0);
  EXPECT_DOUBLE_EQ(info.clip_scale, 0.5);
  EXPECT_DOUBLE_EQ(model.head[1].weights[0], -6.0);
  EXPECT_DOUBLE_EQ(model.head[1].bias[1], -8.0);
}

TEST(SgdStep, ClippedNormNeverExceedsLimit) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 5);
  for (int t = 0; t < 20; ++t) {
    auto model = FcnModel::initialized(2, 3, t);
    auto state = SgdState::for_model(model);
    auto g = FcnModel::zeros(2);
    g.for_each_param([&](std::span<double> p) {
      for (auto& v : p) v = n(rng);
    });
    TrainConfig cfg;
    const auto info = sgd_step(model, g, state, cfg, 0);
    EXPECT_LE(info.grad_norm * info.clip_scale, cfg.grad_clip_norm + 1e-9);
  }
}

TEST(SgdStep, TwoMomentumStepsMatchUnrolledRecurrence) {
  auto model = filled(2, 0.5);
  auto state = SgdState::for_model(model);
  auto cfg = plain(0.01);
  cfg.momentum = 0.9;
  const double g = 0.3;
  sgd_step(model, filled(2, g), state, cfg, 0);
  sgd_step(model, filled(2, g), state, cfg, 1);
  // v1 = -lr g; v2 = mu v1 - lr g; w2 = w0 + v1 + v2 = w0 - (2 + mu) lr g.
  model.for_each_param([&](std::span<const double> p) {
    for (double v : p) EXPECT_NEAR(v, 0.5 - (2 + 0.9) * 0.01 * g, 1e-15);
  });
}

TEST(SgdStep, WeightDecayAppliedBeforeClipping) {
  auto model = filled(2, 2.0);
  auto state = SgdState::for_model(model);
  auto cfg = plain(1.0);
  cfg.weight_decay = 0.5;  // decay term alone is 1.0 per entry
  cfg.grad_clip_norm = 1.0;
  const auto n = static_cast<double>(model.parameter_count());
  const auto info = sgd_step(model, FcnModel::zeros(2), state, cfg, 0);
  EXPECT_NEAR(info.grad_norm, std::sqrt(n), 1e-9);
  EXPECT_NEAR(info.clip_scale, 1.0 / std::sqrt(n), 1e-15);
}

TEST(SgdStep, LearningRateDropsAtBoundary) {
  auto cfg = plain(0.1);
  cfg.lr_drop_at = 5;
  auto model = FcnModel::zeros(1);
  auto state = SgdState::for_model(model);
  EXPECT_EQ(sgd_step(model, FcnModel::zeros(1), state, cfg, 4).learning_rate, 0.1);
  EXPECT_EQ(sgd_step(model, FcnModel::zeros(1), state, cfg, 5).learning_rate, cfg.lr_after);
}

TEST(SgdStep, DecayOnlyShrinksEveryWeightMonotonically) {
  auto model = FcnModel::initialized(2, 3, 5);
  model.for_each_layer([](ConvLayerParams& l) {
    for (auto& b : l.bias) b = 0.1;
  });
  auto state = SgdState::for_model(model);
  const TrainConfig cfg;
  std::vector<double> prev;
  model.for_each_param([&](std::span<const double> p) {
    for (double v : p) prev.push_back(std::abs(v));
  });
  for (int step = 0; step < 50; ++step) {
    sgd_step(model, FcnModel::zeros(2), state, cfg, step);
    std::size_t k = 0;
    model.for_each_param([&](std::span<const double> p) {
      for (double v : p) {
        EXPECT_LT(std::abs(v), prev[k]);
        prev[k++] = std::abs(v);
      }
    });
  }
}

TEST(SgdStep, ShapeMismatchRejected) {
  auto model = FcnModel::zeros(2);
  auto state = SgdState::for_model(model);
  EXPECT_THROW(sgd_step(model, FcnModel::zeros(3), state, TrainConfig{}, 0), ShapeMismatch);
}

TEST(Train, ZeroUpdatesReturnsInitializedModel) {
  const auto data = synthetic_samples(1, 2, "t");
  TrainConfig cfg;
  cfg.total_updates = 0;
  cfg.num_restarts = 1;
  cfg.base_channels = 2;
  cfg.seed = 77;
  const auto res = train(cfg, data, data);
  EXPECT_EQ(res.model, FcnModel::initialized(2, 3, restart_seed(77, 0)));
  EXPECT_TRUE(res.restarts[0].losses.empty());
}

TEST(Train, EmptyDatasetRejected) {
  const auto data = synthetic_samples(1, 1, "t");
  TrainConfig cfg;
  cfg.total_updates = 0;
  cfg.num_restarts = 1;
  EXPECT_THROW(train(cfg, {}, data), EmptyDataset);
  EXPECT_THROW(train(cfg, data, {}), EmptyDataset);
}

TEST(Train, LossDecreasesOnSyntheticPages) {
  const auto data = synthetic_samples(3, 40, "t");
  TrainConfig cfg;
  cfg.total_updates = 300;
  cfg.lr_drop_at = 300;
  cfg.num_restarts = 1;
  cfg.base_channels = 4;
  cfg.seed = 5;
  const auto res = train(cfg, data, std::vector<Sample>(data.begin(), data.begin() + 4));
  const auto& losses = res.restarts[0].losses;
  ASSERT_EQ(losses.size(), 300u);
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) {
    first += losses[i].second / 10;
    last += losses[losses.size() - 1 - i].second / 10;
  }
  EXPECT_LT(last, first);
}

TEST(Train, SeededRunsAreIdenticalAndRestartsSelectBest) {
  const auto data = synthetic_samples(4, 6, "t");
  TrainConfig cfg;
  cfg.total_updates = 12;
  cfg.lr_drop_at = 6;
  cfg.num_restarts = 3;
  cfg.base_channels = 2;
  cfg.seed = 9;
  const auto a = train(cfg, data, data);
  cfg.workers = 3;
  const auto b = train(cfg, data, data);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.best_restart, b.best_restart);
  EXPECT_EQ(format_train_log(a), format_train_log(b));
  for (const auto& r : a.restarts) EXPECT_LE(r.val_miou, a.best_val_miou);
  for (std::size_t r = 0; r < a.best_restart; ++r) EXPECT_LT(a.restarts[r].val_miou, a.best_val_miou);
  EXPECT_NE(a.restarts[0].seed, a.restarts[1].seed);
}

TEST(Train, LogFormat) {
  TrainResult res;
  res.restarts.resize(1);
  res.restarts[0].seed = 12;
  res.restarts[0].losses = {{0, 0.5}, {1, 0.25}};
  res.restarts[0].val_miou = 0.75;
  res.best_val_miou = 0.75;
  EXPECT_EQ(format_train_log(res),
            "# restart 0 seed 12\n0\t0.5\n1\t0.25\n# restart 0 val_miou 0.75 val_pixel_miou 0\n"
            "# selected restart 0 val_miou 0.75\n");
}

TEST(PredictSample, EmptyPredictionFallsBackToFrame) {
  auto m = FcnModel::zeros(2);
  m.head[1].bias = {-5.0, 5.0};  // background everywhere
  const auto pred = predict_sample(m, Tensor4(1, 3, 16, 16), 300, 200);
  EXPECT_TRUE(pred.empty);
  EXPECT_EQ(pred.quad, frame_quad(200, 300));
}

TEST(PredictSample, QuadScaledToOriginalSize) {
  auto m = FcnModel::zeros(2);
  m.head[1].bias = {5.0, -5.0};  // page everywhere
  const auto pred = predict_sample(m, Tensor4(1, 3, 16, 16), 64, 32);
  EXPECT_FALSE(pred.empty);
  // Centers-to-centers rectangle (0.5..15.5) scaled by (2, 4).
  EXPECT_EQ(pred.quad, (Quad{{Point{1, 2}, Point{31, 2}, Point{31, 62}, Point{1, 62}}}));
}
