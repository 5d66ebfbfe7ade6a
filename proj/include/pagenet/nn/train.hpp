#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pagenet/dataset.hpp"
#include "pagenet/errors.hpp"
#include "pagenet/evaluation.hpp"
#include "pagenet/nn/fcn.hpp"
#include "pagenet/parallel.hpp"
#include "pagenet/quadfit.hpp"

namespace pagenet::nn {

struct TrainConfig {
  int total_updates = 15000;
  int batch_size = 2;
  double lr_initial = 0.001;
  double lr_after = 0.0001;
  int lr_drop_at = 10000;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double grad_clip_norm = 10.0;
  std::uint64_t seed = 0;
  int num_restarts = 10;
  int base_channels = 12;
  int kernel_size = 3;
  int workers = 1;  // restarts trained concurrently

  void validate() const {
    if (total_updates < 0 || batch_size <= 0 || num_restarts <= 0) {
      throw std::invalid_argument("updates must be >= 0, batch size and restarts > 0");
    }
    if (lr_drop_at > total_updates && total_updates > 0) {
      throw std::invalid_argument("lr_drop_at must not exceed total_updates");
    }
    if (!(lr_initial > 0) || !(lr_after > 0) || !(grad_clip_norm > 0) || momentum < 0 || weight_decay < 0) {
      throw std::invalid_argument("learning rates and clip norm must be positive");
    }
  }

  double learning_rate(int update_index) const {
    return update_index < lr_drop_at ? lr_initial : lr_after;
  }
};

// Momentum buffers, shaped like the model.
struct SgdState {
  FcnModel velocity;

  static SgdState for_model(const FcnModel& m) { return {FcnModel::zeros(m.base_channels, m.kernel_size)}; }
};

struct SgdStepInfo {
  double grad_norm = 0.0;     // after weight decay, before clipping
  double clip_scale = 1.0;
  double learning_rate = 0.0;
};

inline double global_norm(const FcnModel& params) {
  double sq = 0.0;
  params.for_each_param([&](std::span<const double> p) {
    for (double v : p) sq += v * v;
  });
  return std::sqrt(sq);
}

/// One SGD update: adds the weight-decay term to the gradient, rescales the
/// whole gradient vector to L2 norm <= grad_clip_norm, then applies classical
/// momentum (v <- mu v - lr g, w <- w + v). `grads` is consumed.
inline SgdStepInfo sgd_step(FcnModel& model, FcnModel grads, SgdState& state, const TrainConfig& cfg,
                            int update_index) {
  std::vector<std::span<double>> w;
  std::vector<std::span<double>> g;
  std::vector<std::span<double>> v;
  model.for_each_param([&](std::span<double> p) { w.push_back(p); });
  grads.for_each_param([&](std::span<double> p) { g.push_back(p); });
  state.velocity.for_each_param([&](std::span<double> p) { v.push_back(p); });
  if (w.size() != g.size() || w.size() != v.size()) throw ShapeMismatch("gradient/state shape differs from model");

  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k].size() != g[k].size() || w[k].size() != v[k].size()) {
      throw ShapeMismatch("gradient/state shape differs from model");
    }
    for (std::size_t i = 0; i < w[k].size(); ++i) g[k][i] += cfg.weight_decay * w[k][i];
  }

  SgdStepInfo info;
  info.grad_norm = global_norm(grads);
  if (info.grad_norm > cfg.grad_clip_norm) info.clip_scale = cfg.grad_clip_norm / info.grad_norm;
  info.learning_rate = cfg.learning_rate(update_index);

  for (std::size_t k = 0; k < w.size(); ++k) {
    for (std::size_t i = 0; i < w[k].size(); ++i) {
      const double gi = g[k][i] * info.clip_scale;
      v[k][i] = cfg.momentum * v[k][i] - info.learning_rate * gi;
      w[k][i] += v[k][i];
    }
  }
  return info;
}

inline Tensor4 stack_inputs(const std::vector<const Sample*>& batch) {
  const auto& s0 = batch.front()->input;
  Tensor4 x(static_cast<int>(batch.size()), s0.c(), s0.h(), s0.w());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (!(batch[b]->input.shape() == s0.shape())) throw ShapeMismatch("samples differ in input size");
    std::copy(batch[b]->input.values().begin(), batch[b]->input.values().end(),
              x.values().begin() + static_cast<std::ptrdiff_t>(b * s0.size()));
  }
  return x;
}

struct Prediction {
  Quad quad;            // original-image coordinates
  BinaryMask cleaned;   // network resolution, after step 2 of post-processing
  bool empty = false;   // post-processing found no foreground
};

/// Runs the network and post-processing on one sample. An empty thresholded
/// mask falls back to the full image frame.
inline Prediction predict_sample(const FcnModel& model, const Tensor4& input, int orig_height, int orig_width) {
  const auto maps = predict(model, input);
  const auto& p = maps.front();
  Prediction out;
  try {
    auto pp = postprocess(p);
    out.quad = upscale_quad(pp.refined, p.height, p.width, orig_height, orig_width);
    out.cleaned = std::move(pp.cleaned);
  } catch (const EmptyMask&) {
    out.empty = true;
    out.quad = frame_quad(orig_width, orig_height);
    out.cleaned = BinaryMask(p.height, p.width);
  }
  return out;
}

struct ValidationScores {
  EvalReport quads;
  EvalReport pixels;
};

inline ValidationScores evaluate_model(const FcnModel& model, const std::vector<Sample>& samples) {
  std::map<std::string, Quad> pred_quads;
  std::map<std::string, BinaryMask> pred_masks;
  std::map<std::string, Quad> gt_quads;
  std::map<std::string, AnnotationRecord> gt_records;
  for (const auto& s : samples) {
    auto pred = predict_sample(model, s.input, s.meta.height, s.meta.width);
    pred_quads[s.meta.image_path] = pred.quad;
    pred_masks[s.meta.image_path] = std::move(pred.cleaned);
    gt_quads[s.meta.image_path] = s.meta.quad;
    gt_records[s.meta.image_path] = s.meta;
  }
  return {evaluate_quads(pred_quads, gt_quads, "pagenet-quads"),
          evaluate_pixels(pred_masks, gt_records, "pagenet-pixels")};
}

struct RestartLog {
  std::uint64_t seed = 0;
  std::vector<std::pair<int, double>> losses;  // (update index, minibatch loss)
  double val_miou = 0.0;
  double val_pixel_miou = 0.0;
};

struct TrainResult {
  FcnModel model;
  std::vector<RestartLog> restarts;
  std::size_t best_restart = 0;
  double best_val_miou = 0.0;
};

inline std::uint64_t restart_seed(std::uint64_t seed, int restart) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(restart)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

// One seeded training run from a fresh initialization.
inline FcnModel train_once(const TrainConfig& cfg, const std::vector<Sample>& train_set, std::uint64_t seed,
                           RestartLog& log) {
  FcnModel model = FcnModel::initialized(cfg.base_channels, cfg.kernel_size, seed);
  SgdState state = SgdState::for_model(model);
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::vector<const Sample*> batch;
  for (int update = 0; update < cfg.total_updates; ++update) {
    batch.clear();
    std::vector<BinaryMask> targets;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(&train_set[order[cursor++]]);
      targets.push_back(batch.back()->target);
    }
    auto lg = loss_and_gradients(model, stack_inputs(batch), targets);
    log.losses.emplace_back(update, lg.loss);
    sgd_step(model, std::move(lg.grads), state, cfg, update);
  }
  return model;
}

/// Trains cfg.num_restarts independently seeded networks and keeps the one
/// with the highest validation quad mIoU (earliest restart on ties).
inline TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& train_set,
                         const std::vector<Sample>& val_set) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw EmptyDataset();
  std::vector<FcnModel> models(cfg.num_restarts);
  TrainResult result;
  result.restarts.resize(cfg.num_restarts);
  parallel_for(static_cast<std::size_t>(cfg.num_restarts), cfg.workers, [&](std::size_t r) {
    auto& log = result.restarts[r];
    log.seed = restart_seed(cfg.seed, static_cast<int>(r));
    models[r] = train_once(cfg, train_set, log.seed, log);
    const auto scores = evaluate_model(models[r], val_set);
    log.val_miou = scores.quads.miou;
    log.val_pixel_miou = scores.pixels.miou;
  });
  for (std::size_t r = 0; r < models.size(); ++r) {
    if (r == 0 || result.restarts[r].val_miou > result.best_val_miou) {
      result.best_restart = r;
      result.best_val_miou = result.restarts[r].val_miou;
    }
  }
  result.model = std::move(models[result.best_restart]);
  return result;
}

// Plain-text training log: `update<TAB>loss` lines; restart boundaries and
// validation scores are '#' comment lines.
inline std::string format_train_log(const TrainResult& res) {
  std::string out;
  for (std::size_t r = 0; r < res.restarts.size(); ++r) {
    const auto& log = res.restarts[r];
    out += "# restart " + std::to_string(r) + " seed " + std::to_string(log.seed) + "\n";
    for (const auto& [update, loss] : log.losses) out += std::to_string(update) + '\t' + format_number(loss) + '\n';
    out += "# restart " + std::to_string(r) + " val_miou " + format_number(log.val_miou) + " val_pixel_miou " +
           format_number(log.val_pixel_miou) + "\n";
  }
  out += "# selected restart " + std::to_string(res.best_restart) + " val_miou " +
         format_number(res.best_val_miou) + "\n";
  return out;
}

}  // namespace pagenet::nn
