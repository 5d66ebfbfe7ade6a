#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "pagenet/errors.hpp"
#include "pagenet/image.hpp"
#include "pagenet/nn/ops.hpp"
#include "pagenet/nn/tensor.hpp"

namespace pagenet::nn {

inline constexpr int kNumScales = 4;
inline constexpr std::array<int, kNumScales> kBranchLengths{7, 6, 5, 4};
inline constexpr int kInputChannels = 3;
inline constexpr int kOutputChannels = 2;  // 0 = page, 1 = background

/// Multi-scale FCN: four convolution branches at scales 1, 1/2, 1/4, 1/8. The
/// input of branch s > 0 is the 2x2 average pool of the first-layer output of
/// branch s - 1. Branch outputs are upsampled to full size, concatenated and
/// passed through two head convolutions and a two-way softmax.
struct FcnModel {
  static constexpr int kVersion = 1;

  int base_channels = 0;
  int kernel_size = 0;
  std::array<std::vector<ConvLayerParams>, kNumScales> branches;
  std::array<ConvLayerParams, 2> head;

  // Architecture with all parameters zero.
  static FcnModel zeros(int base_channels, int kernel_size = 3) {
    if (base_channels <= 0) throw ShapeMismatch("base_channels must be positive");
    FcnModel m;
    m.base_channels = base_channels;
    m.kernel_size = kernel_size;
    for (int s = 0; s < kNumScales; ++s) {
      for (int l = 0; l < kBranchLengths[s]; ++l) {
        const int in = (s == 0 && l == 0) ? kInputChannels : base_channels;
        m.branches[s].emplace_back(base_channels, in, kernel_size);
      }
    }
    m.head[0] = ConvLayerParams(base_channels, kNumScales * base_channels, kernel_size);
    m.head[1] = ConvLayerParams(kOutputChannels, base_channels, kernel_size);
    return m;
  }

  // He initialization: weights ~ N(0, 2 / fan_in), zero biases.
  static FcnModel initialized(int base_channels, int kernel_size, std::uint64_t seed) {
    FcnModel m = zeros(base_channels, kernel_size);
    std::mt19937_64 rng(seed);
    m.for_each_layer([&](ConvLayerParams& layer) {
      const double fan_in = static_cast<double>(layer.in_channels) * layer.kernel * layer.kernel;
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (auto& w : layer.weights) w = dist(rng);
    });
    return m;
  }

  template <typename F>
  void for_each_layer(F&& f) {
    for (auto& branch : branches) {
      for (auto& layer : branch) f(layer);
    }
    for (auto& layer : head) f(layer);
  }
  template <typename F>
  void for_each_layer(F&& f) const {
    for (const auto& branch : branches) {
      for (const auto& layer : branch) f(layer);
    }
    for (const auto& layer : head) f(layer);
  }

  // Parameter arrays in declaration order: per layer, weights then bias.
  template <typename F>
  void for_each_param(F&& f) {
    for_each_layer([&](ConvLayerParams& l) {
      f(std::span<double>(l.weights));
      f(std::span<double>(l.bias));
    });
  }
  template <typename F>
  void for_each_param(F&& f) const {
    for_each_layer([&](const ConvLayerParams& l) {
      f(std::span<const double>(l.weights));
      f(std::span<const double>(l.bias));
    });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_param([&](std::span<const double> p) { n += p.size(); });
    return n;
  }

  bool operator==(const FcnModel&) const = default;
};

struct ForwardCache {
  std::array<Tensor4, kNumScales> inputs;
  std::array<std::vector<Tensor4>, kNumScales> activations;
  Tensor4 concat;
  Tensor4 hidden;
  Tensor4 logits;
  Tensor4 probs;
};

inline void check_input(const FcnModel& model, const Tensor4& x) {
  if (x.c() != kInputChannels) throw ShapeMismatch("FCN input must have 3 channels");
  if (x.h() <= 0 || x.w() <= 0 || x.h() % 8 != 0 || x.w() % 8 != 0) {
    throw ShapeMismatch("FCN input height and width must be positive multiples of 8");
  }
  if (model.branches[0].empty()) throw ShapeMismatch("model has no layers");
}

inline ForwardCache forward_cached(const FcnModel& model, const Tensor4& x) {
  check_input(model, x);
  ForwardCache cache;
  std::vector<Tensor4> upsampled;
  for (int s = 0; s < kNumScales; ++s) {
    cache.inputs[s] = s == 0 ? x : avg_pool_2x2(cache.activations[s - 1][0]);
    const Tensor4* in = &cache.inputs[s];
    for (const auto& layer : model.branches[s]) {
      cache.activations[s].push_back(conv_layer(*in, layer, Activation::relu));
      in = &cache.activations[s].back();
    }
    upsampled.push_back(upsample_bilinear(cache.activations[s].back(), 1 << s));
  }
  cache.concat = concat_channels(upsampled);
  cache.hidden = conv_layer(cache.concat, model.head[0], Activation::relu);
  cache.logits = conv_layer(cache.hidden, model.head[1], Activation::none);
  cache.probs = softmax_channels(cache.logits);
  return cache;
}

/// Per-pixel class probabilities, shape (n, 2, H, W); channel 0 is the page.
inline Tensor4 forward(const FcnModel& model, const Tensor4& x) {
  return forward_cached(model, x).probs;
}

inline std::vector<ProbabilityMap> page_probabilities(const Tensor4& probs) {
  std::vector<ProbabilityMap> maps;
  for (int b = 0; b < probs.n(); ++b) {
    ProbabilityMap m(probs.h(), probs.w());
    std::copy_n(probs.plane(b, 0), probs.shape().plane(), m.values.begin());
    for (auto& v : m.values) v = std::clamp(v, 0.0, 1.0);
    maps.push_back(std::move(m));
  }
  return maps;
}

inline std::vector<ProbabilityMap> predict(const FcnModel& model, const Tensor4& x) {
  return page_probabilities(forward(model, x));
}

struct LossAndGrads {
  double loss = 0.0;
  FcnModel grads;
};

namespace detail {

inline void check_targets(const Tensor4& x, const std::vector<BinaryMask>& targets) {
  if (static_cast<int>(targets.size()) != x.n()) throw ShapeMismatch("one target mask per input");
  for (const auto& t : targets) {
    if (t.height != x.h() || t.width != x.w()) throw ShapeMismatch("target mask size differs from input");
  }
}

}  // namespace detail

/// Mean per-pixel softmax cross-entropy; target bit 1 marks the page class.
inline double loss_only(const FcnModel& model, const Tensor4& x, const std::vector<BinaryMask>& targets) {
  detail::check_targets(x, targets);
  const auto cache = forward_cached(model, x);
  const std::size_t plane = x.shape().plane();
  double total = 0.0;
  for (int b = 0; b < x.n(); ++b) {
    const double* page = cache.logits.plane(b, 0);
    const double* back = cache.logits.plane(b, 1);
    for (std::size_t k = 0; k < plane; ++k) {
      const double mx = std::max(page[k], back[k]);
      const double lse = mx + std::log(std::exp(page[k] - mx) + std::exp(back[k] - mx));
      total += lse - (targets[b].bits[k] ? page[k] : back[k]);
    }
  }
  return total / static_cast<double>(plane * x.n());
}

// Loss as above plus its gradient with respect to every parameter.
inline LossAndGrads loss_and_gradients(const FcnModel& model, const Tensor4& x,
                                       const std::vector<BinaryMask>& targets) {
  detail::check_targets(x, targets);
  const auto cache = forward_cached(model, x);
  const std::size_t plane = x.shape().plane();
  const double norm = 1.0 / static_cast<double>(plane * x.n());

  LossAndGrads out;
  out.grads = FcnModel::zeros(model.base_channels, model.kernel_size);

  Tensor4 dlogits(cache.logits.shape());
  double total = 0.0;
  for (int b = 0; b < x.n(); ++b) {
    const double* page = cache.logits.plane(b, 0);
    const double* back = cache.logits.plane(b, 1);
    const double* p_page = cache.probs.plane(b, 0);
    const double* p_back = cache.probs.plane(b, 1);
    double* d_page = dlogits.plane(b, 0);
    double* d_back = dlogits.plane(b, 1);
    for (std::size_t k = 0; k < plane; ++k) {
      const bool is_page = targets[b].bits[k] != 0;
      const double mx = std::max(page[k], back[k]);
      const double lse = mx + std::log(std::exp(page[k] - mx) + std::exp(back[k] - mx));
      total += lse - (is_page ? page[k] : back[k]);
      d_page[k] = norm * (p_page[k] - (is_page ? 1.0 : 0.0));
      d_back[k] = norm * (p_back[k] - (is_page ? 0.0 : 1.0));
    }
  }
  out.loss = total * norm;

  Tensor4 dhidden = conv_backward(cache.hidden, model.head[1], dlogits, out.grads.head[1]);
  relu_backward(cache.hidden, dhidden);
  const Tensor4 dconcat = conv_backward(cache.concat, model.head[0], dhidden, out.grads.head[0]);

  // Coarsest branch first so that pooled-input gradients reach the finer
  // branch's first layer before that layer is processed.
  Tensor4 carry;  // gradient w.r.t. the first-layer output of branch s, from branch s + 1
  for (int s = kNumScales - 1; s >= 0; --s) {
    const auto& acts = cache.activations[s];
    const auto& layers = model.branches[s];
    Tensor4 g = upsample_bilinear_backward(
        slice_channels(dconcat, s * model.base_channels, model.base_channels), 1 << s);
    for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
      if (l == 0 && carry.size() != 0) {
        auto& gv = g.values();
        const auto& cv = carry.values();
        for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += cv[i];
      }
      relu_backward(acts[l], g);
      const Tensor4& in = l == 0 ? cache.inputs[s] : acts[l - 1];
      const bool need_input = l > 0 || s > 0;
      g = conv_backward(in, layers[l], g, out.grads.branches[s][l], need_input);
    }
    carry = s > 0 ? avg_pool_2x2_backward(g) : Tensor4();
  }
  return out;
}

}  // namespace pagenet::nn
