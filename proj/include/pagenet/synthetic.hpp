#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "pagenet/dataset.hpp"
#include "pagenet/geometry.hpp"
#include "pagenet/image.hpp"

namespace pagenet {

/// Parameters of the synthetic border-noise generator. Intensities are 8-bit
/// gray levels; fractions are relative to the image side.
struct SyntheticSpec {
  static constexpr int kVersion = 1;

  int image_size = 256;
  double page_intensity_min = 175;
  double page_intensity_max = 235;
  double background_intensity_min = 20;
  double background_intensity_max = 95;
  double page_scale_min = 0.6;   // page side / image side
  double page_scale_max = 0.85;
  double max_rotation_deg = 6;
  double corner_jitter = 0.01;   // per-corner displacement, fraction of image side
  double book_edge_prob = 0.0;
  double partial_page_prob = 0.0;
  double overlay_prob = 0.0;
  double noise_amplitude = 0.0;  // std-dev of additive Gaussian noise
  double background_gradient = 12;
  double text_density = 0.5;     // fraction of text-line segments drawn
  std::uint64_t seed = 0;

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (image_size < 8) throw std::invalid_argument("image_size must be at least 8");
    if (!prob(book_edge_prob) || !prob(partial_page_prob) || !prob(overlay_prob) || !prob(text_density)) {
      throw std::invalid_argument("probabilities must lie in [0,1]");
    }
    if (!(page_scale_min > 0 && page_scale_min <= page_scale_max && page_scale_max <= 1)) {
      throw std::invalid_argument("page scale range must lie in (0,1]");
    }
    if (page_intensity_min > page_intensity_max || background_intensity_min > background_intensity_max) {
      throw std::invalid_argument("intensity ranges must be ordered");
    }
    if (noise_amplitude < 0 || corner_jitter < 0 || max_rotation_deg < 0) {
      throw std::invalid_argument("noise, jitter and rotation must be non-negative");
    }
  }

  bool operator==(const SyntheticSpec&) const = default;
};

inline nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"version", SyntheticSpec::kVersion},
          {"image_size", s.image_size},
          {"page_intensity", {s.page_intensity_min, s.page_intensity_max}},
          {"background_intensity", {s.background_intensity_min, s.background_intensity_max}},
          {"page_scale", {s.page_scale_min, s.page_scale_max}},
          {"max_rotation_deg", s.max_rotation_deg},
          {"corner_jitter", s.corner_jitter},
          {"book_edge_prob", s.book_edge_prob},
          {"partial_page_prob", s.partial_page_prob},
          {"overlay_prob", s.overlay_prob},
          {"noise_amplitude", s.noise_amplitude},
          {"background_gradient", s.background_gradient},
          {"text_density", s.text_density},
          {"seed", s.seed}};
}

// Missing keys keep their defaults.
inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  if (j.value("version", SyntheticSpec::kVersion) != SyntheticSpec::kVersion) {
    throw FormatError("unsupported synthetic spec version");
  }
  SyntheticSpec s;
  auto range = [&](const char* key, double& lo, double& hi) {
    if (j.contains(key)) {
      lo = j.at(key).at(0).get<double>();
      hi = j.at(key).at(1).get<double>();
    }
  };
  s.image_size = j.value("image_size", s.image_size);
  range("page_intensity", s.page_intensity_min, s.page_intensity_max);
  range("background_intensity", s.background_intensity_min, s.background_intensity_max);
  range("page_scale", s.page_scale_min, s.page_scale_max);
  s.max_rotation_deg = j.value("max_rotation_deg", s.max_rotation_deg);
  s.corner_jitter = j.value("corner_jitter", s.corner_jitter);
  s.book_edge_prob = j.value("book_edge_prob", s.book_edge_prob);
  s.partial_page_prob = j.value("partial_page_prob", s.partial_page_prob);
  s.overlay_prob = j.value("overlay_prob", s.overlay_prob);
  s.noise_amplitude = j.value("noise_amplitude", s.noise_amplitude);
  s.background_gradient = j.value("background_gradient", s.background_gradient);
  s.text_density = j.value("text_density", s.text_density);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

struct SyntheticSample {
  Image image;
  AnnotationRecord record;           // quad = the generating (target) quad
  Quad page;                         // main page; differs from record.quad when overlaid
  std::optional<Quad> partial_page;  // distractor touching an image border
  std::optional<Quad> book_edge;
  std::optional<Quad> overlay;
};

namespace detail {

struct Rgb {
  double r, g, b;
};

class Canvas {
 public:
  explicit Canvas(int size) : size_(size), px_(static_cast<std::size_t>(size) * size) {}

  int size() const { return size_; }
  Rgb& at(int r, int c) { return px_[static_cast<std::size_t>(r) * size_ + c]; }

  // Calls f(row, col) for every pixel whose center lies in q.
  template <typename F>
  void for_pixels(const Quad& q, F&& f) {
    const QuadCoverage cov(q);
    if (cov.empty()) return;
    for (int r = cov.row_lo(); r <= cov.row_hi(size_); ++r) {
      for (int c = cov.col_lo(); c <= cov.col_hi(size_); ++c) {
        if (cov.contains_pixel(r, c)) f(r, c);
      }
    }
  }

  Image to_image() const {
    Image img(size_, size_, 3);
    for (std::size_t i = 0; i < px_.size(); ++i) {
      img.data[3 * i] = to_u8(px_[i].r);
      img.data[3 * i + 1] = to_u8(px_[i].g);
      img.data[3 * i + 2] = to_u8(px_[i].b);
    }
    return img;
  }

 private:
  static std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }
  int size_;
  std::vector<Rgb> px_;
};

class Generator {
 public:
  explicit Generator(const SyntheticSpec& spec) : spec_(spec), rng_(spec.seed) {}

  SyntheticSample next(std::size_t index);

 private:
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool chance(double p) { return p > 0.0 && uniform(0.0, 1.0) < p; }
  Rgb tinted(double base, double spread) {
    return {base + uniform(-spread, spread), base + uniform(-spread, spread), base + uniform(-spread, spread)};
  }

  Quad rotated_rect(Point center, double w, double h, double angle);
  void paint_sheet(Canvas& canvas, const Quad& q, Rgb color, double angle);

  const SyntheticSpec& spec_;
  std::mt19937_64 rng_;
};

inline Quad Generator::rotated_rect(Point center, double w, double h, double angle) {
  const Point u{std::cos(angle), std::sin(angle)};
  const Point v{-u.y, u.x};
  const double jitter = spec_.corner_jitter * spec_.image_size;
  std::array<Point, 4> pts{};
  const std::array<std::array<double, 2>, 4> signs{{{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}};
  for (int k = 0; k < 4; ++k) {
    pts[k] = center + (0.5 * w * signs[k][0]) * u + (0.5 * h * signs[k][1]) * v;
    if (jitter > 0) pts[k] = pts[k] + Point{uniform(-jitter, jitter), uniform(-jitter, jitter)};
  }
  return canonicalize(pts);
}

// Fills q with a page color and draws faux text lines aligned with `angle`.
inline void Generator::paint_sheet(Canvas& canvas, const Quad& q, Rgb color, double angle) {
  const double s = canvas.size();
  const double spacing = std::max(3.0, s / 18.0);
  const double thickness = std::max(1.0, s / 128.0);
  const double seg_len = std::max(2.0, s / 20.0);
  const Rgb ink = tinted(uniform(25, 80), 8);
  const Point u{std::cos(angle), std::sin(angle)};
  const Point v{-u.y, u.x};

  double lo_u = INFINITY, hi_u = -INFINITY, lo_v = INFINITY, hi_v = -INFINITY;
  for (const auto& p : q.corners) {
    lo_u = std::min(lo_u, dot(p, u));
    hi_u = std::max(hi_u, dot(p, u));
    lo_v = std::min(lo_v, dot(p, v));
    hi_v = std::max(hi_v, dot(p, v));
  }
  const double margin_u = 0.12 * (hi_u - lo_u);
  const double margin_v = 0.12 * (hi_v - lo_v);
  const int lines = std::max(0, static_cast<int>((hi_v - lo_v - 2 * margin_v) / spacing));
  const int segs = std::max(1, static_cast<int>((hi_u - lo_u) / seg_len) + 1);
  std::vector<std::uint8_t> on(static_cast<std::size_t>(lines) * segs);
  for (auto& b : on) b = chance(spec_.text_density) ? 1 : 0;

  canvas.for_pixels(q, [&](int r, int c) {
    const Point p{c + 0.5, r + 0.5};
    Rgb px = color;
    const double pu = dot(p, u) - lo_u;
    const double pv = dot(p, v) - lo_v - margin_v;
    if (lines > 0 && pv >= 0 && pu >= margin_u && pu <= hi_u - lo_u - margin_u) {
      const int line = static_cast<int>(pv / spacing);
      if (line < lines && pv - line * spacing < thickness) {
        const int seg = static_cast<int>(pu / seg_len);
        if (on[static_cast<std::size_t>(line) * segs + seg]) px = ink;
      }
    }
    canvas.at(r, c) = px;
  });
}

inline SyntheticSample Generator::next(std::size_t index) {
  const double S = spec_.image_size;
  Canvas canvas(spec_.image_size);

  // Background with a linear illumination gradient.
  const Rgb bg = tinted(uniform(spec_.background_intensity_min, spec_.background_intensity_max), 8);
  const double grad_angle = uniform(0, 2 * std::numbers::pi);
  const double grad_amp = spec_.background_gradient;
  for (int r = 0; r < spec_.image_size; ++r) {
    for (int c = 0; c < spec_.image_size; ++c) {
      const double t = ((c + 0.5) / S - 0.5) * std::cos(grad_angle) + ((r + 0.5) / S - 0.5) * std::sin(grad_angle);
      canvas.at(r, c) = {bg.r + grad_amp * t, bg.g + grad_amp * t, bg.b + grad_amp * t};
    }
  }

  // Main page geometry.
  const bool want_partial = chance(spec_.partial_page_prob);
  const bool want_edge = chance(spec_.book_edge_prob);
  const bool want_overlay = chance(spec_.overlay_prob);
  const double angle = uniform(-spec_.max_rotation_deg, spec_.max_rotation_deg) * std::numbers::pi / 180.0;
  double pw = uniform(spec_.page_scale_min, spec_.page_scale_max) * S;
  double ph = uniform(spec_.page_scale_min, spec_.page_scale_max) * S;
  const double jitter = spec_.corner_jitter * S;
  const double gap = std::max(2.0, 0.03 * S);
  const double min_strip = std::max(3.0, 0.05 * S);
  const bool partial_left = uniform(0, 1) < 0.5;
  auto extent = [&](double w, double h) {
    return Point{0.5 * (w * std::abs(std::cos(angle)) + h * std::abs(std::sin(angle))) + jitter,
                 0.5 * (w * std::abs(std::sin(angle)) + h * std::abs(std::cos(angle))) + jitter};
  };
  const double need = want_partial ? gap + min_strip : 0.0;
  while (2 * extent(pw, ph).x + need + 2 > S || 2 * extent(pw, ph).y + 2 > S) {
    pw *= 0.95;
    ph *= 0.95;
  }
  const Point ext = extent(pw, ph);
  double cx_lo = ext.x + 1;
  double cx_hi = S - ext.x - 1;
  if (want_partial) (partial_left ? cx_lo : cx_hi) += partial_left ? need : -need;
  const Point center{uniform(cx_lo, std::max(cx_lo, cx_hi)),
                     uniform(ext.y + 1, std::max(ext.y + 1, S - ext.y - 1))};
  const Quad page = rotated_rect(center, pw, ph, angle);

  SyntheticSample out;
  out.page = page;

  double page_min_x = INFINITY, page_max_x = -INFINITY;
  for (const auto& p : page.corners) {
    page_min_x = std::min(page_min_x, p.x);
    page_max_x = std::max(page_max_x, p.x);
  }

  if (want_partial) {
    const double y0 = uniform(0, 0.25 * S);
    const double y1 = uniform(0.75 * S, S);
    const double inner = partial_left ? page_min_x - gap : page_max_x + gap;
    const Quad strip = partial_left ? canonicalize(std::array<Point, 4>{Point{0, y0}, Point{inner, y0},
                                                                        Point{inner, y1}, Point{0, y1}})
                                    : canonicalize(std::array<Point, 4>{Point{inner, y0}, Point{S, y0},
                                                                        Point{S, y1}, Point{inner, y1}});
    paint_sheet(canvas, strip, tinted(uniform(spec_.page_intensity_min, spec_.page_intensity_max), 6), 0.0);
    out.partial_page = strip;
  }

  if (want_edge) {
    // Striped band of page edges along one side of the page, outside it.
    const int side = static_cast<int>(uniform(0, 4)) % 4;
    const Point a = page[side];
    const Point b = page[(side + 1) % 4];
    const Point d = b - a;
    const double len = std::hypot(d.x, d.y);
    const Point outward{d.y / len, -d.x / len};
    const double width = uniform(std::max(1.5, 0.02 * S), std::max(2.5, 0.05 * S));
    const Quad band = canonicalize(std::array<Point, 4>{a, b, b + width * outward, a + width * outward});
    const double light = uniform(120, 190);
    const double dark = uniform(50, 100);
    canvas.for_pixels(band, [&](int r, int c) {
      const double dist = dot(Point{c + 0.5, r + 0.5} - a, outward);
      const double v = static_cast<long>(std::floor(dist)) % 2 == 0 ? light : dark;
      canvas.at(r, c) = {v, v * 0.95, v * 0.85};
    });
    out.book_edge = band;
  }

  paint_sheet(canvas, page, tinted(uniform(spec_.page_intensity_min, spec_.page_intensity_max), 6), angle);
  Quad target = page;

  if (want_overlay) {
    // Lighter sheet lying fully on the page; it becomes the target.
    double ow = uniform(0.45, 0.7) * pw;
    double oh = uniform(0.45, 0.7) * ph;
    const double oangle = angle + uniform(-3, 3) * std::numbers::pi / 180.0;
    Quad overlay;
    for (int attempt = 0;; ++attempt) {
      const Point oc = center + Point{uniform(-0.15, 0.15) * pw, uniform(-0.15, 0.15) * ph};
      overlay = rotated_rect(oc, ow, oh, oangle);
      const QuadCoverage cov(page);
      bool inside = true;
      for (const auto& p : overlay.corners) inside = inside && cov.contains(p);
      if (inside || attempt > 50) break;
      ow *= 0.97;
      oh *= 0.97;
    }
    const double base = std::min(250.0, uniform(spec_.page_intensity_max, spec_.page_intensity_max + 20));
    paint_sheet(canvas, overlay, tinted(base, 3), oangle);
    out.overlay = overlay;
    target = overlay;
  }

  Image img = canvas.to_image();
  if (spec_.noise_amplitude > 0) {
    std::normal_distribution<double> noise(0.0, spec_.noise_amplitude);
    for (auto& v : img.data) {
      v = static_cast<std::uint8_t>(std::clamp(std::lround(v + noise(rng_)), 0L, 255L));
    }
  }

  char name[32];
  std::snprintf(name, sizeof name, "synth_%05zu.png", index);
  out.image = std::move(img);
  out.record = AnnotationRecord{name, spec_.image_size, spec_.image_size, target, std::nullopt};
  return out;
}

}  // namespace detail

/// Generates n images with their annotations. Deterministic for a fixed SyntheticSpec
/// (including its seed).
inline std::vector<SyntheticSample> generate_synthetic(const SyntheticSpec& spec, std::size_t n) {
  spec.validate();
  if (n == 0) throw std::invalid_argument("generate_synthetic needs n >= 1");
  detail::Generator gen(spec);
  std::vector<SyntheticSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(gen.next(i));
  return out;
}

}  // namespace pagenet
