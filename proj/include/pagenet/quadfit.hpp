#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "pagenet/errors.hpp"
#include "pagenet/geometry.hpp"
#include "pagenet/image.hpp"
#include "pagenet/raster.hpp"

namespace pagenet {

/// Minimum-area enclosing rectangle of a point set by rotating calipers: one
/// candidate per convex hull edge, the first minimum wins.
inline OrientedRect min_area_rect(const std::vector<Point>& points) {
  const auto hull = convex_hull(points);
  if (hull.size() == 1) return OrientedRect{hull[0], 0.0, 0.0, 0.0};

  double best_area = INFINITY;
  Point best_u{1, 0};
  double best_lo_u = 0, best_hi_u = 0, best_lo_v = 0, best_hi_v = 0;
  const std::size_t n = hull.size();
  const std::size_t edges = n == 2 ? 1 : n;
  for (std::size_t i = 0; i < edges; ++i) {
    const Point d = hull[(i + 1) % n] - hull[i];
    const double len = std::hypot(d.x, d.y);
    const Point u{d.x / len, d.y / len};
    const Point v{-u.y, u.x};
    double lo_u = INFINITY, hi_u = -INFINITY, lo_v = INFINITY, hi_v = -INFINITY;
    for (const auto& p : hull) {
      const double pu = dot(p, u);
      const double pv = dot(p, v);
      lo_u = std::min(lo_u, pu);
      hi_u = std::max(hi_u, pu);
      lo_v = std::min(lo_v, pv);
      hi_v = std::max(hi_v, pv);
    }
    const double area = (hi_u - lo_u) * (hi_v - lo_v);
    if (area < best_area) {
      best_area = area;
      best_u = u;
      best_lo_u = lo_u;
      best_hi_u = hi_u;
      best_lo_v = lo_v;
      best_hi_v = hi_v;
    }
  }

  const Point v{-best_u.y, best_u.x};
  OrientedRect rect;
  rect.center = (0.5 * (best_lo_u + best_hi_u)) * best_u + (0.5 * (best_lo_v + best_hi_v)) * v;
  rect.width = best_hi_u - best_lo_u;
  rect.height = best_hi_v - best_lo_v;

  // Fold the edge direction into [0, pi/2); each quarter turn swaps the sides.
  constexpr double quarter = std::numbers::pi / 2;
  const double theta = std::atan2(best_u.y, best_u.x);
  const double k = std::floor(theta / quarter);
  double angle = theta - k * quarter;
  bool swap = static_cast<long>(k) % 2 != 0;
  if (angle >= quarter) {
    angle = 0.0;
    swap = !swap;
  }
  if (angle < 0.0) angle = 0.0;
  if (swap) std::swap(rect.width, rect.height);
  rect.angle = angle;
  return rect;
}

// Centers of the leftmost and rightmost foreground pixel of each row; their
// hull equals the hull of all foreground centers.
inline std::vector<Point> foreground_extremes(const BinaryMask& m) {
  std::vector<Point> pts;
  for (int r = 0; r < m.height; ++r) {
    int first = -1;
    int last = -1;
    for (int c = 0; c < m.width; ++c) {
      if (m.at(r, c)) {
        if (first < 0) first = c;
        last = c;
      }
    }
    if (first < 0) continue;
    pts.push_back({first + 0.5, r + 0.5});
    if (last != first) pts.push_back({last + 0.5, r + 0.5});
  }
  return pts;
}

/// Minimum-area oriented rectangle containing every foreground pixel center.
inline OrientedRect min_area_rect(const BinaryMask& m) {
  auto pts = foreground_extremes(m);
  if (pts.empty()) throw EmptyMask();
  return min_area_rect(pts);
}

struct RefineOptions {
  // Upper bound on applied moves; <= 0 selects 4 * (height + width).
  int max_moves = 0;
  // Recount every candidate over the whole frame instead of its bounding box.
  bool full_recompute = false;
};

struct RefineResult {
  Quad quad;
  std::vector<double> iou_trace;  // IoU before the first move, then after each move
  int moves = 0;
};

inline MaskQuadCounts mask_quad_counts_full(const BinaryMask& mask, const Quad& q) {
  MaskQuadCounts counts;
  const QuadCoverage cov(q);
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      const bool in_mask = mask.at(r, c) != 0;
      const bool in_quad = cov.contains_pixel(r, c);
      counts.mask += in_mask;
      counts.quad += in_quad;
      counts.both += in_mask && in_quad;
    }
  }
  return counts;
}

/// Greedy best-improvement corner refinement: each step scores the 16
/// single-pixel moves (corner 0..3 x -x, +x, -y, +y) against the mask and applies
/// the best one if it strictly raises IoU. Ties keep the earliest move in that
/// enumeration. Moves that would make the quad non-convex are not candidates.
inline RefineResult refine_quad_traced(const BinaryMask& mask, const Quad& q0,
                                       RefineOptions opts = {}) {
  constexpr std::array<Point, 4> kSteps{Point{-1, 0}, Point{1, 0}, Point{0, -1}, Point{0, 1}};
  const int cap = opts.max_moves > 0 ? opts.max_moves : 4 * (mask.height + mask.width);
  const std::size_t mask_count = mask.count();
  auto score = [&](const Quad& q) {
    return opts.full_recompute ? mask_quad_counts_full(mask, q).iou()
                               : mask_quad_counts(mask, q, mask_count).iou();
  };

  RefineResult res;
  res.quad = q0;
  double current = score(q0);
  res.iou_trace.push_back(current);
  while (res.moves < cap) {
    double best = current;
    Quad best_quad;
    bool improved = false;
    for (int corner = 0; corner < 4; ++corner) {
      for (const auto& step : kSteps) {
        Quad cand = res.quad;
        cand[corner] = cand[corner] + step;
        if (!is_convex(cand)) continue;
        const double iou = score(cand);
        if (iou > best) {
          best = iou;
          best_quad = cand;
          improved = true;
        }
      }
    }
    if (!improved) break;
    assert(best > current);
    res.quad = best_quad;
    current = best;
    res.iou_trace.push_back(current);
    ++res.moves;
  }
  return res;
}

inline Quad refine_quad(const BinaryMask& mask, const Quad& q0, RefineOptions opts = {}) {
  return canonicalize(refine_quad_traced(mask, q0, opts).quad);
}

struct PostProcessResult {
  BinaryMask thresholded;
  BinaryMask cleaned;  // after largest component and hole filling
  OrientedRect rect;
  Quad initial;
  Quad refined;
};

/// Full post-processing chain: threshold at 0.5, keep the largest component,
/// fill holes, fit the minimum-area rectangle, then refine its corners. Throws
/// EmptyMask when nothing survives thresholding.
inline PostProcessResult postprocess(const ProbabilityMap& p, RefineOptions opts = {}) {
  PostProcessResult out;
  out.thresholded = threshold(p, 0.5);
  out.cleaned = fill_holes(largest_component(out.thresholded));
  out.rect = min_area_rect(out.cleaned);
  out.initial = to_quad(out.rect);
  out.refined = refine_quad(out.cleaned, out.initial, opts);
  return out;
}

inline Quad extract_quad(const ProbabilityMap& p) { return postprocess(p).refined; }

/// Scales corners from a (from_h, from_w) frame to a (to_h, to_w) frame,
/// keeping corner order.
inline Quad upscale_quad(const Quad& q, int from_h, int from_w, int to_h, int to_w) {
  if (from_h <= 0 || from_w <= 0 || to_h <= 0 || to_w <= 0) {
    throw ShapeMismatch("quad scaling needs positive dimensions");
  }
  const double sx = static_cast<double>(to_w) / from_w;
  const double sy = static_cast<double>(to_h) / from_h;
  Quad out = q;
  for (auto& p : out.corners) p = Point{p.x * sx, p.y * sy};
  return out;
}

}  // namespace pagenet
