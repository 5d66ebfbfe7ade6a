#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "pagenet/errors.hpp"
#include "pagenet/image.hpp"

namespace pagenet {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
  bool operator==(const Point&) const = default;
};

inline double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }
inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
// z-component of (b - a) x (c - a); positive when a->b->c turns clockwise on
// screen (y grows downward), i.e. the canonical winding.
inline double orient(Point a, Point b, Point c) { return cross(b - a, c - a); }

inline bool is_finite(Point p) { return std::isfinite(p.x) && std::isfinite(p.y); }

// Four corners in canonical order: clockwise as displayed (positive shoelace
// sum in raw image coordinates), starting at the top-left corner.
struct Quad {
  std::array<Point, 4> corners{};

  Point& operator[](std::size_t i) { return corners[i]; }
  const Point& operator[](std::size_t i) const { return corners[i]; }
  bool operator==(const Quad&) const = default;
};

struct OrientedRect {
  Point center;
  double width = 0.0;   // extent along (cos angle, sin angle)
  double height = 0.0;  // extent along (-sin angle, cos angle)
  double angle = 0.0;   // radians in [0, pi/2)
};

// Signed shoelace area; positive for canonical winding.
inline double signed_area(const std::vector<Point>& poly) {
  double s = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) s += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * s;
}

inline double signed_area(const Quad& q) {
  return 0.5 * (cross(q[0], q[1]) + cross(q[1], q[2]) + cross(q[2], q[3]) + cross(q[3], q[0]));
}

inline double polygon_area(const Quad& q) { return std::abs(signed_area(q)); }
inline double polygon_area(const std::vector<Point>& poly) { return std::abs(signed_area(poly)); }

/// Orders four points into the canonical winding. The ordering depends only on
/// the multiset of points, so the function is idempotent and independent of
/// input permutation. Points are sorted by angle around their centroid, which
/// yields a simple (non self-intersecting) polygon; the start is the top-left
/// corner: of the two topmost points, the one nearest the image origin.
/// Concave inputs come back in simple order; callers that need convexity check
/// is_convex().
inline Quad canonicalize(std::array<Point, 4> pts) {
  for (const auto& p : pts) {
    if (!is_finite(p)) throw std::invalid_argument("quad corner is not finite");
  }
  auto lex = [](Point a, Point b) { return a.x < b.x || (a.x == b.x && a.y < b.y); };
  std::sort(pts.begin(), pts.end(), lex);

  const Point c{(pts[0].x + pts[1].x + pts[2].x + pts[3].x) / 4.0,
                (pts[0].y + pts[1].y + pts[2].y + pts[3].y) / 4.0};
  std::array<double, 4> ang{};
  std::array<double, 4> dist{};
  for (int i = 0; i < 4; ++i) {
    ang[i] = std::atan2(pts[i].y - c.y, pts[i].x - c.x);
    dist[i] = dot(pts[i] - c, pts[i] - c);
  }
  std::array<int, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (ang[a] != ang[b]) return ang[a] < ang[b];
    return dist[a] < dist[b];
  });

  // Two topmost points (ties resolved by the lexicographic pre-sort).
  std::array<int, 4> by_y{0, 1, 2, 3};
  std::stable_sort(by_y.begin(), by_y.end(), [&](int a, int b) { return pts[a].y < pts[b].y; });
  auto origin_dist = [&](int i) { return pts[i].x * pts[i].x + pts[i].y * pts[i].y; };
  int start = by_y[0];
  const int other = by_y[1];
  if (origin_dist(other) < origin_dist(start) ||
      (origin_dist(other) == origin_dist(start) && lex(pts[other], pts[start]))) {
    start = other;
  }

  const auto pos = static_cast<int>(std::find(order.begin(), order.end(), start) - order.begin());
  Quad q;
  for (int i = 0; i < 4; ++i) q[i] = pts[order[(pos + i) % 4]];
  return q;
}

inline Quad canonicalize(const Quad& q) { return canonicalize(q.corners); }

inline bool is_convex(const Quad& q) {
  bool pos = false;
  bool neg = false;
  for (int i = 0; i < 4; ++i) {
    const double o = orient(q[i], q[(i + 1) % 4], q[(i + 2) % 4]);
    pos = pos || o > 0;
    neg = neg || o < 0;
  }
  return !(pos && neg);
}

inline Quad translate(const Quad& q, Point t) {
  Quad out = q;
  for (auto& p : out.corners) p = p + t;
  return out;
}

inline Quad frame_quad(double width, double height) {
  return Quad{{Point{0, 0}, Point{width, 0}, Point{width, height}, Point{0, height}}};
}

inline Quad to_quad(const OrientedRect& r) {
  const Point u{std::cos(r.angle), std::sin(r.angle)};
  const Point v{-u.y, u.x};
  const Point hu = (0.5 * r.width) * u;
  const Point hv = (0.5 * r.height) * v;
  return canonicalize(std::array<Point, 4>{r.center - hu - hv, r.center + hu - hv,
                                           r.center + hu + hv, r.center - hu + hv});
}

/// Convex hull by monotone chain. Vertices come back with positive signed area
/// (counter-clockwise in the y-up sense) and without collinear vertices.
inline std::vector<Point> convex_hull(std::vector<Point> pts) {
  if (pts.empty()) throw std::invalid_argument("convex_hull needs at least one point");
  std::sort(pts.begin(), pts.end(),
            [](Point a, Point b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;

  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && orient(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && orient(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

namespace detail {

// Sutherland-Hodgman clipping of a polygon against a convex polygon with
// positive winding.
inline std::vector<Point> clip_convex(std::vector<Point> subject, const Quad& clip) {
  std::vector<Point> next;
  for (int e = 0; e < 4 && !subject.empty(); ++e) {
    const Point a = clip[e];
    const Point b = clip[(e + 1) % 4];
    next.clear();
    const std::size_t n = subject.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point p = subject[i];
      const Point q = subject[(i + 1) % n];
      const double sp = orient(a, b, p);
      const double sq = orient(a, b, q);
      if (sp >= 0) next.push_back(p);
      if ((sp >= 0) != (sq >= 0)) {
        const double t = sp / (sp - sq);
        next.push_back(p + t * (q - p));
      }
    }
    subject.swap(next);
  }
  return subject;
}

inline bool lex_less(const Quad& a, const Quad& b) {
  for (int i = 0; i < 4; ++i) {
    if (a[i].x != b[i].x) return a[i].x < b[i].x;
    if (a[i].y != b[i].y) return a[i].y < b[i].y;
  }
  return false;
}

inline Quad positive_winding(const Quad& q) {
  if (signed_area(q) >= 0) return q;
  return Quad{{q[0], q[3], q[2], q[1]}};
}

}  // namespace detail

/// Exact intersection-over-union of two convex quadrilaterals. The operand
/// pair is put in a fixed order before clipping, so the result is bit-for-bit
/// symmetric. Zero-area unions score 0.
inline double quad_iou(const Quad& a, const Quad& b) {
  if (!is_convex(a) || !is_convex(b)) throw NonConvexQuad();
  const bool swap = detail::lex_less(b, a);
  const Quad& s = swap ? b : a;
  const Quad& c = swap ? a : b;
  const double area_s = polygon_area(s);
  const double area_c = polygon_area(c);
  if (area_s == 0.0 || area_c == 0.0) return 0.0;

  const auto clipped = detail::clip_convex(std::vector<Point>(s.corners.begin(), s.corners.end()),
                                           detail::positive_winding(c));
  const double inter = clipped.size() < 3 ? 0.0 : polygon_area(clipped);
  const double uni = (area_s + area_c) - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// Pixel-center membership: inside or on the boundary. Zero-area quads contain
// nothing.
class QuadCoverage {
 public:
  explicit QuadCoverage(const Quad& q) : q_(detail::positive_winding(q)) {
    empty_ = polygon_area(q_) == 0.0;
    min_x_ = max_x_ = q_[0].x;
    min_y_ = max_y_ = q_[0].y;
    for (const auto& p : q_.corners) {
      min_x_ = std::min(min_x_, p.x);
      max_x_ = std::max(max_x_, p.x);
      min_y_ = std::min(min_y_, p.y);
      max_y_ = std::max(max_y_, p.y);
    }
  }

  bool contains(Point p) const {
    if (empty_) return false;
    for (int e = 0; e < 4; ++e) {
      if (orient(q_[e], q_[(e + 1) % 4], p) < 0) return false;
    }
    return true;
  }

  bool contains_pixel(int row, int col) const { return contains({col + 0.5, row + 0.5}); }

  // Inclusive range of pixel rows/cols whose centers can be covered, clipped
  // to a frame of the given size. Empty when lo > hi.
  int row_lo() const { return std::max(0, static_cast<int>(std::floor(min_y_ - 0.5))); }
  int row_hi(int height) const {
    return std::min(height - 1, static_cast<int>(std::ceil(max_y_ - 0.5)));
  }
  int col_lo() const { return std::max(0, static_cast<int>(std::floor(min_x_ - 0.5))); }
  int col_hi(int width) const {
    return std::min(width - 1, static_cast<int>(std::ceil(max_x_ - 0.5)));
  }
  bool empty() const { return empty_; }

 private:
  Quad q_;
  bool empty_ = true;
  double min_x_ = 0, max_x_ = 0, min_y_ = 0, max_y_ = 0;
};

struct MaskQuadCounts {
  std::size_t mask = 0;
  std::size_t quad = 0;
  std::size_t both = 0;

  double iou() const {
    const std::size_t uni = mask + quad - both;
    return uni == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(uni);
  }
};

// Counts restricted to the quad's bounding box; `mask_count` is the number of
// foreground pixels in the whole mask.
inline MaskQuadCounts mask_quad_counts(const BinaryMask& mask, const Quad& q,
                                       std::size_t mask_count) {
  MaskQuadCounts counts;
  counts.mask = mask_count;
  const QuadCoverage cov(q);
  if (cov.empty()) return counts;
  const int r1 = cov.row_hi(mask.height);
  const int c1 = cov.col_hi(mask.width);
  for (int r = cov.row_lo(); r <= r1; ++r) {
    const std::uint8_t* row = &mask.bits[static_cast<std::size_t>(r) * mask.width];
    for (int c = cov.col_lo(); c <= c1; ++c) {
      if (cov.contains_pixel(r, c)) {
        ++counts.quad;
        counts.both += row[c];
      }
    }
  }
  return counts;
}

/// IoU between the foreground pixels of `mask` and the pixels whose centers lie
/// inside or on `q`.
inline double mask_quad_iou(const BinaryMask& mask, const Quad& q) {
  return mask_quad_counts(mask, q, mask.count()).iou();
}

}  // namespace pagenet
