// Copyright 2026 The cocstress Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// 8-bit RGB raster plus lossless PPM (P6) and base64 codecs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cocstress/errors.hpp"

namespace cocstress
{

struct Image
{
  static constexpr int channels = 3;

  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major, interleaved RGB

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
  : width(w), height(h), data(static_cast<std::size_t>(w) * h * channels, fill)
  {
    if (w < 0 || h < 0) {
      throw ValidationError("image dimensions must be non-negative");
    }
  }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t pixel_count() const noexcept
  {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  std::size_t index(int x, int y, int c) const noexcept
  {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  std::uint8_t & at(int x, int y, int c) { return data[index(x, y, c)]; }
  std::uint8_t at(int x, int y, int c) const { return data[index(x, y, c)]; }

  bool same_shape(const Image & o) const noexcept
  {
    return width == o.width && height == o.height;
  }

  friend bool operator==(const Image &, const Image &) = default;
};

inline void validate(const Image & img)
{
  if (img.width < 0 || img.height < 0) {
    throw ValidationError("image dimensions must be non-negative");
  }
  if (img.data.size() != img.pixel_count() * Image::channels) {
    throw ValidationError(
      "image data length " + std::to_string(img.data.size()) + " does not match " +
      std::to_string(img.width) + "x" + std::to_string(img.height) + "x3");
  }
}

// Round half away from zero, then clamp to [0, 255]. Every kernel writes
// pixels through this so outputs are bit-exact across implementations.
inline std::uint8_t to_pixel(double v) noexcept
{
  if (!(v > 0.0)) {
    return 0;  // also maps NaN to 0
  }
  const double r = std::round(v);
  return r >= 255.0 ? 255 : static_cast<std::uint8_t>(r);
}

inline Image mirror_horizontal(const Image & img)
{
  Image out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < Image::channels; ++c) {
        out.at(img.width - 1 - x, y, c) = img.at(x, y, c);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- PPM (P6)

inline std::string encode_ppm(const Image & img)
{
  validate(img);
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
    "\n255\n";
  out.append(reinterpret_cast<const char *>(img.data.data()), img.data.size());
  return out;
}

inline Image decode_ppm(std::string_view bytes)
{
  std::size_t pos = 0;
  auto skip_ws_and_comments = [&]() {
    while (pos < bytes.size()) {
      const char ch = bytes[pos];
      if (ch == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') {
          ++pos;
        }
      } else if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_ws_and_comments();
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000) {
        throw IoError("ppm: header value out of range");
      }
      any = true;
      ++pos;
    }
    if (!any) {
      throw IoError("ppm: malformed header");
    }
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw IoError("ppm: expected P6 magic");
  }
  pos = 2;
  const long w = read_int();
  const long h = read_int();
  const long maxval = read_int();
  if (maxval != 255) {
    throw IoError("ppm: only maxval 255 is supported");
  }
  if (pos >= bytes.size()) {
    throw IoError("ppm: truncated header");
  }
  ++pos;  // single whitespace byte before the raster
  Image img(static_cast<int>(w), static_cast<int>(h));
  if (bytes.size() - pos < img.data.size()) {
    throw IoError("ppm: truncated raster");
  }
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), img.data.size(), img.data.begin());
  return img;
}

inline std::string read_file_bytes(const std::string & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string & path, std::string_view bytes)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("write failed: " + path);
  }
}

inline Image read_ppm(const std::string & path)
{
  try {
    return decode_ppm(read_file_bytes(path));
  } catch (const IoError & e) {
    throw IoError(path + ": " + e.what());
  }
}

inline void write_ppm(const Image & img, const std::string & path)
{
  write_file_bytes(path, encode_ppm(img));
}

// ---------------------------------------------------------------- base64

inline std::string base64_encode(std::string_view in)
{
  static constexpr char tbl[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const auto n = (static_cast<std::uint32_t>(static_cast<unsigned char>(in[i])) << 16) |
      (static_cast<std::uint32_t>(static_cast<unsigned char>(in[i + 1])) << 8) |
      static_cast<unsigned char>(in[i + 2]);
    out += tbl[(n >> 18) & 63];
    out += tbl[(n >> 12) & 63];
    out += tbl[(n >> 6) & 63];
    out += tbl[n & 63];
  }
  if (i < in.size()) {
    auto n = static_cast<std::uint32_t>(static_cast<unsigned char>(in[i])) << 16;
    if (i + 1 < in.size()) {
      n |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[i + 1])) << 8;
    }
    out += tbl[(n >> 18) & 63];
    out += tbl[(n >> 12) & 63];
    out += i + 1 < in.size() ? tbl[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

inline std::string base64_decode(std::string_view in)
{
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::string out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (const char c : in) {
    if (c == '=') {
      break;
    }
    const int v = val(c);
    if (v < 0) {
      throw IoError("base64: invalid character");
    }
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out += static_cast<char>((acc >> bits) & 0xFF);
    }
  }
  return out;
}

}  // namespace cocstress
