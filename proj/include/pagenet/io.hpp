#pragma once

#include <png.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "pagenet/errors.hpp"
#include "pagenet/image.hpp"

namespace pagenet {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Writes through a sibling temporary file and renames it into place, so a
/// reader never observes a partially written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  static std::atomic<unsigned> counter{0};
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw DataError("short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot rename into " + path.string());
  }
}

namespace detail {

inline std::string lower_extension(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

inline Image decode_pnm(const std::string& bytes, const std::string& name) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    long v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000) throw FormatError(name + ": PNM header value too large");
      ++pos;
    }
    if (pos == start) throw FormatError(name + ": malformed PNM header");
    return static_cast<int>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError(name + ": not a binary PGM/PPM file");
  }
  const int channels = bytes[1] == '5' ? 1 : 3;
  pos = 2;
  const int w = read_int();
  const int h = read_int();
  const int maxval = read_int();
  if (w <= 0 || h <= 0 || maxval != 255) throw FormatError(name + ": unsupported PNM geometry or depth");
  ++pos;  // single whitespace after maxval
  Image img(h, w, channels);
  if (bytes.size() < pos + img.data.size()) throw FormatError(name + ": truncated PNM data");
  std::memcpy(img.data.data(), bytes.data() + pos, img.data.size());
  return img;
}

}  // namespace detail

inline std::string encode_pnm(const Image& img) {
  std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
  return out;
}

inline std::string encode_png(const Image& img) {
  png_image desc;
  std::memset(&desc, 0, sizeof desc);
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(img.width);
  desc.height = static_cast<png_uint_32>(img.height);
  desc.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, img.data.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encode failed: ") + desc.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, img.data.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encode failed: ") + desc.message);
  }
  out.resize(size);
  return out;
}

inline Image decode_png(const std::string& bytes, const std::string& name) {
  png_image desc;
  std::memset(&desc, 0, sizeof desc);
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size())) {
    throw FormatError(name + ": " + desc.message);
  }
  const bool color = (desc.format & PNG_FORMAT_FLAG_COLOR) != 0;
  desc.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image img(static_cast<int>(desc.height), static_cast<int>(desc.width), color ? 3 : 1);
  if (!png_image_finish_read(&desc, nullptr, img.data.data(), 0, nullptr)) {
    png_image_free(&desc);
    throw FormatError(name + ": " + desc.message);
  }
  return img;
}

/// Reads PNG or binary PGM/PPM, chosen by content.
inline Image read_image(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const DataError&) {
    throw FormatError("cannot open image " + path.string());
  }
  if (bytes.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0) {
    return decode_png(bytes, path.string());
  }
  return detail::decode_pnm(bytes, path.string());
}

/// Writes PNG for a .png extension, PGM/PPM otherwise.
inline void write_image(const std::filesystem::path& path, const Image& img) {
  write_file_atomic(path, detail::lower_extension(path) == ".png" ? encode_png(img) : encode_pnm(img));
}

inline Image mask_to_image(const BinaryMask& m) {
  Image img(m.height, m.width, 1);
  for (std::size_t i = 0; i < m.size(); ++i) img.data[i] = m.bits[i] ? 255 : 0;
  return img;
}

// Any nonzero pixel is foreground.
inline BinaryMask image_to_mask(const Image& img) {
  BinaryMask m(img.height, img.width);
  for (std::size_t i = 0; i < m.size(); ++i) m.bits[i] = img.data[i * img.channels] != 0 ? 1 : 0;
  return m;
}

inline Image probability_to_image(const ProbabilityMap& p) {
  Image img(p.height, p.width, 1);
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    img.data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(p.values[i], 0.0, 1.0) * 255.0));
  }
  return img;
}

inline void write_mask(const std::filesystem::path& path, const BinaryMask& m) {
  write_image(path, mask_to_image(m));
}

inline BinaryMask read_mask(const std::filesystem::path& path) { return image_to_mask(read_image(path)); }

}  // namespace pagenet
