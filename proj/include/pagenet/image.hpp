#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pagenet/errors.hpp"

namespace pagenet {

// Pixel (row, col) covers the unit square [col, col+1) x [row, row+1) of the
// continuous image plane; its center is (col + 0.5, row + 0.5). A frame of
// width W and height H spans [0, W] x [0, H].

// 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int h, int w, int c, std::uint8_t fill = 0) : height(h), width(w), channels(c) {
    if (h <= 0 || w <= 0) throw ShapeMismatch("image dimensions must be positive");
    if (c != 1 && c != 3) throw ShapeMismatch("image must have 1 or 3 channels");
    data.assign(static_cast<std::size_t>(h) * w * c, fill);
  }

  std::uint8_t& at(int r, int c, int ch = 0) {
    return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
  std::uint8_t at(int r, int c, int ch = 0) const {
    return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }

  bool operator==(const Image&) const = default;
};

// Per-pixel foreground flag, stored as 0/1 bytes.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int h, int w, bool fill = false) : height(h), width(w) {
    if (h <= 0 || w <= 0) throw ShapeMismatch("mask dimensions must be positive");
    bits.assign(static_cast<std::size_t>(h) * w, fill ? 1 : 0);
  }

  std::uint8_t& at(int r, int c) { return bits[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t at(int r, int c) const { return bits[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const { return bits.size(); }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }

  bool operator==(const BinaryMask&) const = default;
};

// Probability that each pixel belongs to the main page region.
struct ProbabilityMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  ProbabilityMap() = default;
  ProbabilityMap(int h, int w, double fill = 0.0) : height(h), width(w) {
    if (h <= 0 || w <= 0) throw ShapeMismatch("probability map dimensions must be positive");
    if (!(fill >= 0.0 && fill <= 1.0)) throw std::invalid_argument("probability out of [0,1]");
    values.assign(static_cast<std::size_t>(h) * w, fill);
  }

  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }

  bool operator==(const ProbabilityMap&) const = default;
};

// Replicates a gray image into three channels; RGB images pass through.
inline Image to_rgb(const Image& img) {
  if (img.channels == 3) return img;
  Image out(img.height, img.width, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    out.data[3 * i] = out.data[3 * i + 1] = out.data[3 * i + 2] = img.data[i];
  }
  return out;
}

}  // namespace pagenet
