// Copyright (c) 2026, The instmix Authors. All rights reserved.
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

#include "instmix/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

namespace instmix {

RgbImage::RgbImage(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw DimensionError("image dimensions must be >= 1, got " + std::to_string(width) + "x" +
                         std::to_string(height));
  }
  data_.resize(pixel_count() * 3);
  for (std::size_t i = 0; i < pixel_count(); ++i) {
    data_[3 * i] = fill[0];
    data_[3 * i + 1] = fill[1];
    data_[3 * i + 2] = fill[2];
  }
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return f;
}

// libpng reports errors through a callback that must not return; it unwinds
// with longjmp back into the calling function. Only trivially destructible
// state may be created between setjmp and the libpng calls it guards.
struct PngError {
  std::jmp_buf jump;
  char message[256] = {};
};

[[noreturn]] void png_error_handler(png_structp png, png_const_charp msg) {
  auto* err = static_cast<PngError*>(png_get_error_ptr(png));
  std::snprintf(err->message, sizeof(err->message), "%s", msg);
  std::longjmp(err->jump, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

// Owns a libpng read or write struct pair.
class PngHandle {
 public:
  PngHandle(bool writing, PngError* err) : writing_(writing) {
    png_ = writing ? png_create_write_struct(PNG_LIBPNG_VER_STRING, err, png_error_handler,
                                             png_warning_handler)
                   : png_create_read_struct(PNG_LIBPNG_VER_STRING, err, png_error_handler,
                                            png_warning_handler);
    if (!png_) throw IoError("png_create_*_struct failed");
    info_ = png_create_info_struct(png_);
    if (!info_) {
      destroy();
      throw IoError("png_create_info_struct failed");
    }
  }
  ~PngHandle() { destroy(); }
  PngHandle(const PngHandle&) = delete;
  PngHandle& operator=(const PngHandle&) = delete;

  png_structp png() const { return png_; }
  png_infop info() const { return info_; }

 private:
  void destroy() {
    if (writing_) {
      png_destroy_write_struct(&png_, info_ ? &info_ : nullptr);
    } else {
      png_destroy_read_struct(&png_, info_ ? &info_ : nullptr, nullptr);
    }
  }

  bool writing_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint8_t> bytes;  // row-major, big-endian samples for 16-bit
};

enum class HeaderProblem { kNone, kNotGray, kNot16 };

DecodedPng decode_png(const std::filesystem::path& path, bool want_gray, bool want_16) {
  auto file = open_file(path, "rb");
  std::uint8_t sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("'" + path.string() + "' is not a PNG file");
  }
  PngError err;
  PngHandle h(false, &err);
  DecodedPng out;
  volatile std::size_t rowbytes = 0;
  HeaderProblem problem = HeaderProblem::kNone;

  if (setjmp(err.jump)) {
    throw IoError("'" + path.string() + "': " + err.message);
  }
  png_init_io(h.png(), file.get());
  png_set_sig_bytes(h.png(), 8);
  png_read_info(h.png(), h.info());
  {
    const png_byte color = png_get_color_type(h.png(), h.info());
    const png_byte depth = png_get_bit_depth(h.png(), h.info());
    const bool has_trns = png_get_valid(h.png(), h.info(), PNG_INFO_tRNS) != 0;
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(h.png());
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(h.png());
    if ((color & PNG_COLOR_MASK_ALPHA) || has_trns) png_set_strip_alpha(h.png());
    if (want_gray && ((color & PNG_COLOR_MASK_COLOR) || color == PNG_COLOR_TYPE_PALETTE)) {
      problem = HeaderProblem::kNotGray;
    } else if (!want_gray && !(color & PNG_COLOR_MASK_COLOR)) {
      png_set_gray_to_rgb(h.png());
    }
    if (!want_16 && depth == 16) png_set_strip_16(h.png());
    if (want_16 && depth != 16) problem = HeaderProblem::kNot16;
  }
  if (problem == HeaderProblem::kNone) {
    png_read_update_info(h.png(), h.info());
    out.width = static_cast<int>(png_get_image_width(h.png(), h.info()));
    out.height = static_cast<int>(png_get_image_height(h.png(), h.info()));
    out.channels = png_get_channels(h.png(), h.info());
    out.bit_depth = png_get_bit_depth(h.png(), h.info());
    rowbytes = png_get_rowbytes(h.png(), h.info());
  }
  if (problem == HeaderProblem::kNotGray) {
    throw IoError("'" + path.string() + "' must be a single-channel PNG");
  }
  if (problem == HeaderProblem::kNot16) {
    throw IoError("'" + path.string() + "' must be a 16-bit PNG");
  }

  const std::size_t stride = rowbytes;
  out.bytes.resize(stride * out.height);
  std::vector<png_bytep> rows(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = out.bytes.data() + stride * y;
  if (setjmp(err.jump)) {
    throw IoError("'" + path.string() + "': " + err.message);
  }
  png_read_image(h.png(), rows.data());
  png_read_end(h.png(), nullptr);
  return out;
}

void encode_png(const std::filesystem::path& path, int width, int height, int color_type,
                int bit_depth, const std::uint8_t* bytes, std::size_t rowbytes) {
  auto file = open_file(path, "wb");
  PngError err;
  PngHandle h(true, &err);
  if (setjmp(err.jump)) {
    throw IoError("'" + path.string() + "': " + err.message);
  }
  png_init_io(h.png(), file.get());
  png_set_IHDR(h.png(), h.info(), width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(h.png(), h.info());
  for (int y = 0; y < height; ++y) {
    png_write_row(h.png(), const_cast<png_bytep>(bytes + rowbytes * y));
  }
  png_write_end(h.png(), nullptr);
}

}  // namespace

RgbImage read_png_rgb(const std::filesystem::path& path) {
  DecodedPng d = decode_png(path, false, false);
  RgbImage img(d.width, d.height);
  img.data() = std::move(d.bytes);
  return img;
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image) {
  encode_png(path, image.width(), image.height(), PNG_COLOR_TYPE_RGB, 8, image.data().data(),
             static_cast<std::size_t>(image.width()) * 3);
}

Gray16Image read_png_gray16(const std::filesystem::path& path) {
  DecodedPng d = decode_png(path, true, true);
  Gray16Image img{d.width, d.height, {}};
  img.data.resize(static_cast<std::size_t>(d.width) * d.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    img.data[i] = static_cast<std::uint16_t>((d.bytes[2 * i] << 8) | d.bytes[2 * i + 1]);
  }
  return img;
}

void write_png_gray16(const std::filesystem::path& path, const Gray16Image& image) {
  std::vector<std::uint8_t> be(image.data.size() * 2);
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    be[2 * i] = static_cast<std::uint8_t>(image.data[i] >> 8);
    be[2 * i + 1] = static_cast<std::uint8_t>(image.data[i] & 0xff);
  }
  encode_png(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, 16, be.data(),
             static_cast<std::size_t>(image.width) * 2);
}

Gray8Image read_png_gray8(const std::filesystem::path& path) {
  DecodedPng d = decode_png(path, true, false);
  return Gray8Image{d.width, d.height, std::move(d.bytes)};
}

void write_png_gray8(const std::filesystem::path& path, const Gray8Image& image) {
  encode_png(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, 8, image.data.data(),
             static_cast<std::size_t>(image.width));
}

RgbImage resize_bilinear(const RgbImage& image, int width, int height) {
  if (image.width() == width && image.height() == height) return image;
  RgbImage out(width, height);
  const double sx = static_cast<double>(image.width()) / width;
  const double sy = static_cast<double>(image.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width() - 1);
      const double wx = fx - x0;
      const Rgb a = image.at(x0, y0), b = image.at(x1, y0);
      const Rgb c = image.at(x0, y1), d = image.at(x1, y1);
      Rgb px;
      for (int ch = 0; ch < 3; ++ch) {
        const double top = a[ch] * (1 - wx) + b[ch] * wx;
        const double bot = c[ch] * (1 - wx) + d[ch] * wx;
        px[ch] = static_cast<std::uint8_t>(std::lround(top * (1 - wy) + bot * wy));
      }
      out.set(x, y, px);
    }
  }
  return out;
}

}  // namespace instmix
