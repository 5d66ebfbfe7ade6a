#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>

#include "pagenet/errors.hpp"
#include "pagenet/io.hpp"
#include "pagenet/nn/fcn.hpp"

namespace pagenet::nn {

// Weight file layout, all integers little-endian u32:
//   magic "PAGENETW" | format version | model version | base_channels |
//   kernel_size | scale count | branch lengths... | head layer count |
//   per layer in declaration order: weights then bias as f32 |
//   CRC-32 of every preceding byte.
inline constexpr char kWeightMagic[8] = {'P', 'A', 'G', 'E', 'N', 'E', 'T', 'W'};
inline constexpr std::uint32_t kWeightFormatVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("model file is truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace detail

inline std::string serialize_model(const FcnModel& model) {
  std::string out(kWeightMagic, sizeof kWeightMagic);
  detail::put_u32(out, kWeightFormatVersion);
  detail::put_u32(out, FcnModel::kVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(model.base_channels));
  detail::put_u32(out, static_cast<std::uint32_t>(model.kernel_size));
  detail::put_u32(out, kNumScales);
  for (const auto& branch : model.branches) detail::put_u32(out, static_cast<std::uint32_t>(branch.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(model.head.size()));
  model.for_each_param([&](std::span<const double> p) {
    for (double v : p) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  });
  detail::put_u32(out, detail::crc32_of(out));
  return out;
}

inline FcnModel deserialize_model(std::string_view bytes) {
  if (bytes.size() < sizeof kWeightMagic + 4 || std::memcmp(bytes.data(), kWeightMagic, sizeof kWeightMagic) != 0) {
    throw FormatError("not a model weight file");
  }
  const auto body = bytes.substr(0, bytes.size() - 4);
  detail::Reader trailer(bytes.substr(bytes.size() - 4));
  if (trailer.u32() != detail::crc32_of(body)) throw FormatError("model file checksum mismatch");

  detail::Reader r(body);
  r.take(sizeof kWeightMagic);
  if (r.u32() != kWeightFormatVersion) throw FormatError("unsupported model file version");
  if (r.u32() != FcnModel::kVersion) throw FormatError("unsupported model version");
  const auto base = r.u32();
  const auto kernel = r.u32();
  if (base == 0 || base > 4096 || kernel == 0 || kernel % 2 == 0 || kernel > 31) {
    throw FormatError("implausible model architecture header");
  }
  if (r.u32() != kNumScales) throw FormatError("model must have 4 scale branches");
  for (int s = 0; s < kNumScales; ++s) {
    if (r.u32() != static_cast<std::uint32_t>(kBranchLengths[s])) throw FormatError("unexpected branch length");
  }
  if (r.u32() != 2) throw FormatError("model head must have 2 layers");

  FcnModel model = FcnModel::zeros(static_cast<int>(base), static_cast<int>(kernel));
  model.for_each_param([&](std::span<double> p) {
    for (double& v : p) v = r.f32();
  });
  if (r.pos() != body.size()) throw FormatError("trailing bytes in model file");
  return model;
}

inline void save_model(const std::filesystem::path& path, const FcnModel& model) {
  write_file_atomic(path, serialize_model(model));
}

inline FcnModel load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

}  // namespace pagenet::nn
