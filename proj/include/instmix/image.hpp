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

#ifndef INSTMIX_IMAGE_HPP_
#define INSTMIX_IMAGE_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "instmix/common.hpp"

namespace instmix {

using Rgb = std::array<std::uint8_t, 3>;

/// Interleaved 8-bit RGB, row-major.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, Rgb fill = {0, 0, 0});

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  Rgb at(int x, int y) const {
    const std::size_t i = offset(x, y);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    const std::size_t i = offset(x, y);
    data_[i] = c[0];
    data_[i + 1] = c[1];
    data_[i + 2] = c[2];
  }

  const std::vector<std::uint8_t>& data() const { return data_; }
  std::vector<std::uint8_t>& data() { return data_; }

  bool same_shape(const RgbImage& o) const { return width_ == o.width_ && height_ == o.height_; }
  bool operator==(const RgbImage&) const = default;

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Single-channel 16-bit image (instance-ID maps).
struct Gray16Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> data;

  std::uint16_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const Gray16Image&) const = default;
};

/// Single-channel 8-bit image (provenance maps).
struct Gray8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  bool operator==(const Gray8Image&) const = default;
};

RgbImage read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);

Gray16Image read_png_gray16(const std::filesystem::path& path);
void write_png_gray16(const std::filesystem::path& path, const Gray16Image& image);

Gray8Image read_png_gray8(const std::filesystem::path& path);
void write_png_gray8(const std::filesystem::path& path, const Gray8Image& image);

/// Bilinear resample with half-pixel centres; identity when size matches.
RgbImage resize_bilinear(const RgbImage& image, int width, int height);

}  // namespace instmix

#endif  // INSTMIX_IMAGE_HPP_
