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

// Input-preprocessing defenses applied to perturbed frames before inference.
// Borders use reflect-101 (…cb|abc|ba…) everywhere.

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <jpeglib.h>

#include "cocstress/errors.hpp"
#include "cocstress/image.hpp"
#include "cocstress/types.hpp"

namespace cocstress
{

inline int reflect101(int i, int n)
{
  if (n == 1) {
    return 0;
  }
  while (i < 0 || i >= n) {
    i = i < 0 ? -i : 2 * n - 2 - i;
  }
  return i;
}

/// Gaussian sigma used for a k x k kernel: 0.3 * ((k - 1) / 2 - 1) + 0.8.
inline double gaussian_sigma_for_kernel(int k) { return 0.3 * ((k - 1) * 0.5 - 1.0) + 0.8; }

/// Normalized 1-D Gaussian weights of odd length k.
inline std::vector<double> gaussian_kernel(int k, double sigma)
{
  if (k < 1 || k % 2 == 0) {
    throw ValidationError("gaussian kernel size must be odd and positive");
  }
  std::vector<double> w(static_cast<std::size_t>(k));
  const int r = k / 2;
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    w[static_cast<std::size_t>(i + r)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += w[static_cast<std::size_t>(i + r)];
  }
  for (auto & v : w) {
    v /= sum;
  }
  return w;
}

/// Separable normalized Gaussian blur; the intermediate pass stays in floating point.
inline Image gaussian_blur(const Image & img, int kernel, double sigma = 0.0)
{
  validate(img);
  if (sigma <= 0.0) {
    sigma = gaussian_sigma_for_kernel(kernel);
  }
  const auto w = gaussian_kernel(kernel, sigma);
  const int r = kernel / 2;
  const int W = img.width;
  const int H = img.height;
  std::vector<double> tmp(img.data.size());
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < Image::channels; ++c) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) {
          acc += w[static_cast<std::size_t>(k + r)] * img.at(reflect101(x + k, W), y, c);
        }
        tmp[img.index(x, y, c)] = acc;
      }
    }
  }
  Image out(W, H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < Image::channels; ++c) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) {
          acc += w[static_cast<std::size_t>(k + r)] * tmp[img.index(x, reflect101(y + k, H), c)];
        }
        out.at(x, y, c) = to_pixel(acc);
      }
    }
  }
  return out;
}

/// Per-channel median over a k x k window.
inline Image median_filter(const Image & img, int kernel)
{
  validate(img);
  if (kernel < 1 || kernel % 2 == 0) {
    throw ValidationError("median kernel size must be odd and positive");
  }
  const int r = kernel / 2;
  Image out(img.width, img.height);
  std::vector<std::uint8_t> win(static_cast<std::size_t>(kernel * kernel));
  const auto mid = win.begin() + static_cast<std::ptrdiff_t>(win.size() / 2);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < Image::channels; ++c) {
        std::size_t n = 0;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = reflect101(y + dy, img.height);
          for (int dx = -r; dx <= r; ++dx) {
            win[n++] = img.at(reflect101(x + dx, img.width), yy, c);
          }
        }
        std::nth_element(win.begin(), mid, win.end());
        out.at(x, y, c) = *mid;
      }
    }
  }
  return out;
}

/// Bilateral filter over a diameter x diameter window. The range term uses
/// the Euclidean RGB distance so the three channels are weighted jointly.
inline Image bilateral_filter(
  const Image & img, int diameter = 5, double sigma_color = 75.0, double sigma_space = 75.0)
{
  validate(img);
  if (diameter < 1 || diameter % 2 == 0) {
    throw ValidationError("bilateral diameter must be odd and positive");
  }
  if (!(sigma_color > 0.0) || !(sigma_space > 0.0)) {
    throw ValidationError("bilateral sigmas must be positive");
  }
  const int r = diameter / 2;
  std::vector<double> spatial(static_cast<std::size_t>(diameter * diameter));
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      spatial[static_cast<std::size_t>((dy + r) * diameter + dx + r)] =
        std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_space * sigma_space));
    }
  }
  const double range_coeff = std::isinf(sigma_color) ? 0.0 : -1.0 / (2.0 * sigma_color * sigma_color);
  Image out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc[3] = {0.0, 0.0, 0.0};
      double wsum = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = reflect101(y + dy, img.height);
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = reflect101(x + dx, img.width);
          double d2 = 0.0;
          for (int c = 0; c < Image::channels; ++c) {
            const double d = double(img.at(xx, yy, c)) - double(img.at(x, y, c));
            d2 += d * d;
          }
          const double wgt =
            spatial[static_cast<std::size_t>((dy + r) * diameter + dx + r)] * std::exp(range_coeff * d2);
          wsum += wgt;
          for (int c = 0; c < Image::channels; ++c) {
            acc[c] += wgt * img.at(xx, yy, c);
          }
        }
      }
      for (int c = 0; c < Image::channels; ++c) {
        out.at(x, y, c) = to_pixel(acc[c] / wsum);
      }
    }
  }
  return out;
}

// ------------------------------------------------------------ JPEG

namespace detail
{

struct JpegErrorMgr
{
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo)
{
  auto * err = reinterpret_cast<JpegErrorMgr *>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

}  // namespace detail

/// Baseline JPEG encode at `quality` (4:2:0 chroma subsampling, libjpeg defaults).
inline std::string jpeg_encode(const Image & img, int quality)
{
  validate(img);
  if (quality < 1 || quality > 100) {
    throw ValidationError("jpeg quality must lie in [1, 100]");
  }
  if (img.width == 0 || img.height == 0) {
    throw IoError("jpeg: cannot encode an empty image");
  }
  jpeg_compress_struct cinfo{};
  detail::JpegErrorMgr jerr{};
  unsigned char * buf = nullptr;
  unsigned long len = 0;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = detail::jpeg_error_exit;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buf);
    throw IoError(std::string("jpeg encode failed: ") + jerr.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buf, &len);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
  while (cinfo.next_scanline < cinfo.image_height) {
    auto * row = const_cast<JSAMPLE *>(img.data.data() + cinfo.next_scanline * stride);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::string out(reinterpret_cast<const char *>(buf), len);
  std::free(buf);
  return out;
}

inline Image jpeg_decode(const std::string & bytes)
{
  jpeg_decompress_struct cinfo{};
  detail::JpegErrorMgr jerr{};
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = detail::jpeg_error_exit;
  Image img;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError(std::string("jpeg decode failed: ") + jerr.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(
    &cinfo, reinterpret_cast<const unsigned char *>(bytes.data()),
    static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  img = Image(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
  const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPLE * row = img.data.data() + cinfo.output_scanline * stride;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

inline Image jpeg_roundtrip(const Image & img, int quality = 75)
{
  Image out = jpeg_decode(jpeg_encode(img, quality));
  if (!out.same_shape(img)) {
    throw IoError("jpeg round-trip changed image dimensions");
  }
  return out;
}

inline Image apply_defense(const Image & img, const DefenseSpec & spec)
{
  spec.validate();
  switch (spec.kind) {
    case DefenseKind::none: return img;
    case DefenseKind::gaussian3:
    case DefenseKind::gaussian5: return gaussian_blur(img, spec.kernel);
    case DefenseKind::median3:
    case DefenseKind::median5: return median_filter(img, spec.kernel);
    case DefenseKind::bilateral:
      return bilateral_filter(img, spec.diameter, spec.sigma_color, spec.sigma_space);
    case DefenseKind::jpeg75: return jpeg_roundtrip(img, spec.quality);
  }
  throw ValidationError("unknown defense kind");
}

}  // namespace cocstress
