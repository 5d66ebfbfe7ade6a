#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pagenet {

// Base for every recoverable data error raised by the library. The CLI maps
// these to exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyMask : DataError {
  EmptyMask() : DataError("mask has no foreground pixels") {}
};

struct ShapeMismatch : DataError {
  using DataError::DataError;
};

struct EmptyDataset : DataError {
  EmptyDataset() : DataError("dataset is empty") {}
};

struct NonConvexQuad : DataError {
  NonConvexQuad() : DataError("quadrilateral is not convex") {}
};

struct ParseError : DataError {
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_number(line) {}
  std::size_t line_number;
};

struct MissingImage : DataError {
  explicit MissingImage(const std::string& path)
      : DataError("cannot open image: " + path), image_path(path) {}
  std::string image_path;
};

struct MissingPrediction : DataError {
  explicit MissingPrediction(std::vector<std::string> ids)
      : DataError(make_message(ids)), image_ids(std::move(ids)) {}
  std::vector<std::string> image_ids;

 private:
  static std::string make_message(const std::vector<std::string>& ids) {
    std::string msg = "missing prediction for " + std::to_string(ids.size()) + " image(s):";
    for (const auto& id : ids) msg += " " + id;
    return msg;
  }
};

struct FormatError : DataError {
  using DataError::DataError;
};

}  // namespace pagenet
