#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

#include "pagenet/errors.hpp"

namespace pagenet::nn {

struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const { return static_cast<std::size_t>(n) * c * h * w; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape4&) const = default;
};

/// Dense NCHW tensor.
template <typename T>
class BasicTensor4 {
 public:
  BasicTensor4() = default;
  explicit BasicTensor4(Shape4 s, T fill = T(0)) : shape_(s), data_(s.size(), fill) {}
  BasicTensor4(int n, int c, int h, int w, T fill = T(0)) : BasicTensor4(Shape4{n, c, h, w}, fill) {}

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T* plane(int b, int ch) { return data_.data() + (static_cast<std::size_t>(b) * shape_.c + ch) * shape_.plane(); }
  const T* plane(int b, int ch) const {
    return data_.data() + (static_cast<std::size_t>(b) * shape_.c + ch) * shape_.plane();
  }

  T& operator()(int b, int ch, int y, int x) {
    return data_[((static_cast<std::size_t>(b) * shape_.c + ch) * shape_.h + y) * shape_.w + x];
  }
  T operator()(int b, int ch, int y, int x) const {
    return data_[((static_cast<std::size_t>(b) * shape_.c + ch) * shape_.h + y) * shape_.w + x];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  bool operator==(const BasicTensor4&) const = default;

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

using Tensor4 = BasicTensor4<double>;

inline void check_finite([[maybe_unused]] const Tensor4& t) {
#ifndef NDEBUG
  assert(t.all_finite());
#endif
}

}  // namespace pagenet::nn
