#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "pagenet/dataset.hpp"
#include "pagenet/errors.hpp"
#include "pagenet/geometry.hpp"
#include "pagenet/io.hpp"

namespace pagenet {

// Corners as fractions of image width/height, in canonical corner order.
struct MeanQuadModel {
  static constexpr int kVersion = 1;
  std::array<Point, 4> corners{};

  bool operator==(const MeanQuadModel&) const = default;
};

/// Corner-wise mean of the width/height-normalized annotation quads. Each
/// coordinate's terms are summed in sorted order, so the result does not
/// depend on record order.
inline MeanQuadModel fit_mean_quad(const std::vector<AnnotationRecord>& records) {
  if (records.empty()) throw EmptyDataset();
  std::array<std::vector<double>, 8> terms;
  for (const auto& r : records) {
    if (r.width <= 0 || r.height <= 0) throw ShapeMismatch("annotation " + r.image_path + " has no size");
    const Quad q = canonicalize(r.quad);
    for (int n = 0; n < 4; ++n) {
      terms[2 * n].push_back(q[n].x / r.width);
      terms[2 * n + 1].push_back(q[n].y / r.height);
    }
  }
  MeanQuadModel model;
  const auto count = static_cast<double>(records.size());
  for (int k = 0; k < 8; ++k) {
    std::sort(terms[k].begin(), terms[k].end());
    double sum = 0.0;
    for (double v : terms[k]) sum += v;
    (k % 2 == 0 ? model.corners[k / 2].x : model.corners[k / 2].y) = sum / count;
  }
  return model;
}

inline Quad predict_mean_quad(const MeanQuadModel& model, int width, int height) {
  if (width <= 0 || height <= 0) throw ShapeMismatch("image dimensions must be positive");
  std::array<Point, 4> pts{};
  for (int n = 0; n < 4; ++n) pts[n] = {width * model.corners[n].x, height * model.corners[n].y};
  return canonicalize(pts);
}

inline Quad predict_full_image(int width, int height) {
  if (width <= 0 || height <= 0) throw ShapeMismatch("image dimensions must be positive");
  return frame_quad(width, height);
}

inline std::string format_mean_quad(const MeanQuadModel& model) {
  std::string out = "pagenet-meanquad v" + std::to_string(MeanQuadModel::kVersion) + "\n";
  for (int n = 0; n < 4; ++n) {
    out += format_number(model.corners[n].x) + '\t' + format_number(model.corners[n].y);
    out += n == 3 ? '\n' : '\t';
  }
  return out;
}

inline MeanQuadModel parse_mean_quad(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  std::string values;
  if (!std::getline(in, header) || header != "pagenet-meanquad v" + std::to_string(MeanQuadModel::kVersion)) {
    throw ParseError(1, "not a version 1 mean-quad model");
  }
  if (!std::getline(in, values)) throw ParseError(2, "missing corner values");
  const auto f = split_tabs(values);
  if (f.size() != 8) throw ParseError(2, "expected 8 numbers");
  MeanQuadModel model;
  for (int k = 0; k < 8; ++k) {
    const auto v = parse_number(f[k]);
    if (!v) throw ParseError(2, "bad number '" + std::string(f[k]) + "'");
    (k % 2 == 0 ? model.corners[k / 2].x : model.corners[k / 2].y) = *v;
  }
  return model;
}

inline void save_mean_quad(const std::filesystem::path& path, const MeanQuadModel& model) {
  write_file_atomic(path, format_mean_quad(model));
}

inline MeanQuadModel load_mean_quad(const std::filesystem::path& path) { return parse_mean_quad(read_file(path)); }

}  // namespace pagenet
