#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <tuple>
#include <vector>

#include "pagenet/errors.hpp"
#include "pagenet/geometry.hpp"
#include "pagenet/image.hpp"
#include "pagenet/io.hpp"
#include "pagenet/nn/tensor.hpp"
#include "pagenet/quadfit.hpp"
#include "pagenet/raster.hpp"

namespace pagenet {

inline constexpr int kDefaultInputSize = 256;

struct AnnotationRecord {
  std::string image_path;
  int width = 0;
  int height = 0;
  Quad quad;  // original-image coordinates; corners may sit slightly outside the frame
  std::optional<std::string> annotator_id;

  bool operator==(const AnnotationRecord&) const = default;
};

// Shortest decimal text that parses back to the same double.
inline std::string format_number(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline std::optional<double> parse_number(std::string_view s) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

/// One line of the annotation grammar:
/// `path TAB width TAB height TAB x1,y1 TAB x2,y2 TAB x3,y3 TAB x4,y4 [TAB annotator]`.
inline std::string format_annotation(const AnnotationRecord& r) {
  std::string line = r.image_path + '\t' + std::to_string(r.width) + '\t' + std::to_string(r.height);
  for (const auto& p : r.quad.corners) line += '\t' + format_number(p.x) + ',' + format_number(p.y);
  if (r.annotator_id) line += '\t' + *r.annotator_id;
  return line;
}

inline AnnotationRecord parse_annotation(std::string_view line, std::size_t line_no) {
  const auto f = split_tabs(line);
  if (f.size() < 7) {
    throw ParseError(line_no, "expected path, width, height and 4 corners, found " +
                                  std::to_string(f.size()) + " field(s) (" +
                                  std::to_string(f.size() > 3 ? f.size() - 3 : 0) + " corner(s))");
  }
  if (f.size() > 8) throw ParseError(line_no, "too many fields");
  AnnotationRecord r;
  r.image_path = std::string(f[0]);
  if (r.image_path.empty()) throw ParseError(line_no, "empty image path");
  auto parse_dim = [&](std::string_view s, const char* name) {
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || v <= 0) {
      throw ParseError(line_no, std::string("invalid ") + name + " '" + std::string(s) + "'");
    }
    return v;
  };
  r.width = parse_dim(f[1], "width");
  r.height = parse_dim(f[2], "height");
  std::array<Point, 4> pts{};
  for (int i = 0; i < 4; ++i) {
    const auto field = f[3 + i];
    const auto comma = field.find(',');
    std::optional<double> x;
    std::optional<double> y;
    if (comma != std::string_view::npos) {
      x = parse_number(field.substr(0, comma));
      y = parse_number(field.substr(comma + 1));
    }
    if (!x || !y) {
      throw ParseError(line_no, "corner " + std::to_string(i + 1) + " is not 'x,y': '" + std::string(field) + "'");
    }
    pts[i] = {*x, *y};
  }
  r.quad = canonicalize(pts);
  if (!is_convex(r.quad)) throw ParseError(line_no, "quadrilateral is not convex");
  if (f.size() == 8 && !f[7].empty()) r.annotator_id = std::string(f[7]);
  return r;
}

/// Parses annotation text. Blank lines and lines starting with '#' are
/// skipped; duplicate image paths are rejected.
inline std::vector<AnnotationRecord> parse_annotations(std::istream& in) {
  std::vector<AnnotationRecord> records;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto rec = parse_annotation(line, line_no);
    if (!seen.insert(rec.image_path).second) {
      throw ParseError(line_no, "duplicate image path '" + rec.image_path + "'");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open annotation file: " + path.string());
  return parse_annotations(in);
}

inline std::string format_annotations(const std::vector<AnnotationRecord>& records) {
  std::string out;
  for (const auto& r : records) out += format_annotation(r) + '\n';
  return out;
}

inline void save_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records) {
  write_file_atomic(path, format_annotations(records));
}

inline std::filesystem::path resolve_image(const std::filesystem::path& images_dir, const AnnotationRecord& r) {
  const std::filesystem::path p(r.image_path);
  return p.is_absolute() || images_dir.empty() ? p : images_dir / p;
}

/// Loads the image a record refers to (as RGB) and checks its size.
inline Image load_record_image(const std::filesystem::path& images_dir, const AnnotationRecord& r) {
  const auto path = resolve_image(images_dir, r);
  Image img;
  try {
    img = read_image(path);
  } catch (const FormatError&) {
    throw MissingImage(path.string());
  }
  if (img.width != r.width || img.height != r.height) {
    throw ShapeMismatch("image " + path.string() + " is " + std::to_string(img.width) + "x" +
                        std::to_string(img.height) + ", annotation says " + std::to_string(r.width) +
                        "x" + std::to_string(r.height));
  }
  return to_rgb(img);
}

struct Sample {
  nn::Tensor4 input;   // (1, 3, S, S), values in [-0.5, 0.5]
  BinaryMask target;   // (S, S)
  AnnotationRecord meta;
};

// Maps original-image corners into an S x S network frame.
inline Quad scale_to_input(const AnnotationRecord& r, int size) {
  return upscale_quad(r.quad, r.height, r.width, size, size);
}

/// Resizes to size x size, maps intensities v -> v / 255 - 0.5 and rasterizes
/// the scaled annotation as the target.
inline Sample preprocess(const Image& img, const AnnotationRecord& ann, int size = kDefaultInputSize) {
  if (img.width != ann.width || img.height != ann.height) {
    throw ShapeMismatch("image size does not match annotation for " + ann.image_path);
  }
  const Image rgb = resize_bilinear(to_rgb(img), size, size);
  Sample s;
  s.input = nn::Tensor4(1, 3, size, size);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      for (int ch = 0; ch < 3; ++ch) s.input(0, ch, r, c) = rgb.at(r, c, ch) / 255.0 - 0.5;
    }
  }
  s.target = rasterize_quad(scale_to_input(ann, size), size, size);
  s.meta = ann;
  return s;
}

// Input tensor only, for inference on unannotated images.
inline nn::Tensor4 preprocess_image(const Image& img, int size = kDefaultInputSize) {
  const Image rgb = resize_bilinear(to_rgb(img), size, size);
  nn::Tensor4 t(1, 3, size, size);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      for (int ch = 0; ch < 3; ++ch) t(0, ch, r, c) = rgb.at(r, c, ch) / 255.0 - 0.5;
    }
  }
  return t;
}

struct Splits {
  std::vector<AnnotationRecord> train;
  std::vector<AnnotationRecord> val;
  std::vector<AnnotationRecord> test;
};

/// Seeded shuffle, then contiguous partition by cumulative fractions (up to
/// three: train, val, test). Records beyond the fraction total are dropped.
inline Splits split(std::vector<AnnotationRecord> records, const std::vector<double>& fractions,
                    std::uint64_t seed) {
  if (records.empty()) throw EmptyDataset();
  if (fractions.empty() || fractions.size() > 3) throw std::invalid_argument("need 1 to 3 split fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw std::invalid_argument("split fractions must be positive");
    total += f;
  }
  if (total > 1.0 + 1e-9) throw std::invalid_argument("split fractions sum above 1");

  std::mt19937_64 rng(seed);
  std::shuffle(records.begin(), records.end(), rng);

  const auto n = static_cast<double>(records.size());
  std::array<std::vector<AnnotationRecord>*, 3> parts{};
  Splits out;
  parts = {&out.train, &out.val, &out.test};
  double cumulative = 0.0;
  std::size_t begin = 0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    cumulative += fractions[k];
    const auto end = std::min(records.size(), static_cast<std::size_t>(std::floor(cumulative * n + 1e-9)));
    parts[k]->assign(records.begin() + static_cast<std::ptrdiff_t>(begin),
                     records.begin() + static_cast<std::ptrdiff_t>(end));
    begin = end;
  }
  return out;
}

}  // namespace pagenet
