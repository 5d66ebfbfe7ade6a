#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pagenet/geometry.hpp"
#include "pagenet/image.hpp"

namespace pagenet {

/// Foreground iff value >= t. A uniform 0.5 map therefore thresholds to all
/// foreground at t = 0.5.
inline BinaryMask threshold(const ProbabilityMap& p, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("threshold must lie in [0,1]");
  BinaryMask m(p.height, p.width);
  for (std::size_t i = 0; i < p.values.size(); ++i) m.bits[i] = p.values[i] >= t ? 1 : 0;
  return m;
}

struct ComponentLabels {
  std::vector<int> labels;          // -1 for background, else component index
  std::vector<std::size_t> sizes;   // indexed by component, in row-major discovery order
};

// Labels foreground components with 8-connectivity. Components are numbered in
// the row-major order of their first pixel.
inline ComponentLabels label_components(const BinaryMask& m) {
  ComponentLabels out;
  out.labels.assign(m.size(), -1);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < m.size(); ++start) {
    if (!m.bits[start] || out.labels[start] >= 0) continue;
    const int id = static_cast<int>(out.sizes.size());
    std::size_t size = 0;
    out.labels[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t idx = stack.back();
      stack.pop_back();
      ++size;
      const int r = static_cast<int>(idx / m.width);
      const int c = static_cast<int>(idx % m.width);
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || rr >= m.height || cc < 0 || cc >= m.width) continue;
          const std::size_t n = static_cast<std::size_t>(rr) * m.width + cc;
          if (m.bits[n] && out.labels[n] < 0) {
            out.labels[n] = id;
            stack.push_back(n);
          }
        }
      }
    }
    out.sizes.push_back(size);
  }
  return out;
}

/// Keeps only the largest 8-connected foreground component. Ties go to the
/// component whose first pixel comes first in row-major order.
inline BinaryMask largest_component(const BinaryMask& m) {
  const auto comp = label_components(m);
  BinaryMask out(m.height, m.width);
  if (comp.sizes.empty()) return out;
  int best = 0;
  for (int i = 1; i < static_cast<int>(comp.sizes.size()); ++i) {
    if (comp.sizes[i] > comp.sizes[best]) best = i;
  }
  for (std::size_t i = 0; i < m.size(); ++i) out.bits[i] = comp.labels[i] == best ? 1 : 0;
  return out;
}

// Background pixels 4-connected to the frame border.
inline std::vector<std::uint8_t> border_background(const BinaryMask& m) {
  std::vector<std::uint8_t> reached(m.size(), 0);
  std::vector<std::size_t> stack;
  auto seed = [&](int r, int c) {
    const std::size_t i = static_cast<std::size_t>(r) * m.width + c;
    if (!m.bits[i] && !reached[i]) {
      reached[i] = 1;
      stack.push_back(i);
    }
  };
  for (int c = 0; c < m.width; ++c) {
    seed(0, c);
    seed(m.height - 1, c);
  }
  for (int r = 0; r < m.height; ++r) {
    seed(r, 0);
    seed(r, m.width - 1);
  }
  constexpr std::array<std::array<int, 2>, 4> kSteps{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
  while (!stack.empty()) {
    const std::size_t idx = stack.back();
    stack.pop_back();
    const int r = static_cast<int>(idx / m.width);
    const int c = static_cast<int>(idx % m.width);
    for (const auto& s : kSteps) {
      const int rr = r + s[0];
      const int cc = c + s[1];
      if (rr < 0 || rr >= m.height || cc < 0 || cc >= m.width) continue;
      seed(rr, cc);
    }
  }
  return reached;
}

/// Turns every background pixel that is not 4-connected to the border into
/// foreground.
inline BinaryMask fill_holes(const BinaryMask& m) {
  const auto outside = border_background(m);
  BinaryMask out = m;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!outside[i]) out.bits[i] = 1;
  }
  return out;
}

inline BinaryMask rasterize_quad(const Quad& q, int height, int width) {
  BinaryMask m(height, width);
  const QuadCoverage cov(q);
  if (cov.empty()) return m;
  const int r1 = cov.row_hi(height);
  const int c1 = cov.col_hi(width);
  for (int r = cov.row_lo(); r <= r1; ++r) {
    for (int c = cov.col_lo(); c <= c1; ++c) {
      if (cov.contains_pixel(r, c)) m.at(r, c) = 1;
    }
  }
  return m;
}

inline double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeMismatch("mask dimensions differ");
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a.bits[i] & b.bits[i];
    uni += a.bits[i] | b.bits[i];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace detail {

struct LinearTap {
  int lo;
  int hi;
  double w_hi;
};

// Half-pixel-center mapping: destination center i + 0.5 maps to source
// coordinate (i + 0.5) * src / dst, clamped to the edge pixel centers.
inline std::vector<LinearTap> linear_taps(int src, int dst) {
  std::vector<LinearTap> taps(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, src - 1);
    taps[i] = {lo, hi, s - lo};
  }
  return taps;
}

// Interleaved HWC bilinear resampling into doubles.
template <typename T>
std::vector<double> resize_planes(const std::vector<T>& src, int h, int w, int ch, int nh, int nw) {
  const auto ty = linear_taps(h, nh);
  const auto tx = linear_taps(w, nw);
  std::vector<double> out(static_cast<std::size_t>(nh) * nw * ch);
  auto at = [&](int r, int c, int k) {
    return static_cast<double>(src[(static_cast<std::size_t>(r) * w + c) * ch + k]);
  };
  for (int r = 0; r < nh; ++r) {
    const auto& y = ty[r];
    for (int c = 0; c < nw; ++c) {
      const auto& x = tx[c];
      for (int k = 0; k < ch; ++k) {
        const double top = at(y.lo, x.lo, k) + x.w_hi * (at(y.lo, x.hi, k) - at(y.lo, x.lo, k));
        const double bot = at(y.hi, x.lo, k) + x.w_hi * (at(y.hi, x.hi, k) - at(y.hi, x.lo, k));
        out[(static_cast<std::size_t>(r) * nw + c) * ch + k] = top + y.w_hi * (bot - top);
      }
    }
  }
  return out;
}

}  // namespace detail

/// Bilinear resize with half-pixel-center alignment (no corner alignment).
/// Returns a bit-identical copy when the size is unchanged.
inline Image resize_bilinear(const Image& img, int new_height, int new_width) {
  if (new_height <= 0 || new_width <= 0) throw ShapeMismatch("resize target must be positive");
  if (new_height == img.height && new_width == img.width) return img;
  const auto vals = detail::resize_planes(img.data, img.height, img.width, img.channels,
                                          new_height, new_width);
  Image out(new_height, new_width, img.channels);
  for (std::size_t i = 0; i < vals.size(); ++i) {
    out.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(vals[i]), 0L, 255L));
  }
  return out;
}

inline ProbabilityMap resize_bilinear(const ProbabilityMap& p, int new_height, int new_width) {
  if (new_height <= 0 || new_width <= 0) throw ShapeMismatch("resize target must be positive");
  if (new_height == p.height && new_width == p.width) return p;
  ProbabilityMap out(new_height, new_width);
  out.values = detail::resize_planes(p.values, p.height, p.width, 1, new_height, new_width);
  return out;
}

}  // namespace pagenet
