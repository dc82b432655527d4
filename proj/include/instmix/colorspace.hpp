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

#ifndef INSTMIX_COLORSPACE_HPP_
#define INSTMIX_COLORSPACE_HPP_

#include <array>
#include <span>
#include <vector>

#include "instmix/image.hpp"

namespace instmix {

struct Lab {
  double L = 0;
  double a = 0;
  double b = 0;

  double operator[](int c) const { return c == 0 ? L : (c == 1 ? a : b); }
  double& operator[](int c) { return c == 0 ? L : (c == 1 ? a : b); }
  bool operator==(const Lab&) const = default;
};

inline constexpr std::array<double, 3> kLabMin = {0.0, -128.0, -128.0};
inline constexpr std::array<double, 3> kLabMax = {100.0, 127.0, 127.0};

/// Row-major CIELAB image (D65 white).
struct LabImage {
  int width = 0;
  int height = 0;
  std::vector<Lab> pixels;

  const Lab& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct ChannelStats {
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{};  // population standard deviation
};

Lab srgb_to_lab(Rgb c);

/// Converts with gamut clamping and rounding to the nearest 8-bit level.
Rgb lab_to_srgb(Lab lab);

/// True when `lab` maps inside the sRGB cube (before clamping), within `tol`
/// in linear units.
bool lab_in_srgb_gamut(Lab lab, double tol = 1e-9);

/// ΔE*ab (CIE76).
double delta_e(const Lab& p, const Lab& q);

LabImage rgb_to_lab(const RgbImage& image);
RgbImage lab_to_rgb(const LabImage& lab);

ChannelStats channel_stats(const LabImage& lab);

/// Statistics pooled over all pixels of several images.
ChannelStats pooled_channel_stats(std::span<const LabImage> images);

/// Per channel: v' = (v - mu_s) / sigma_s * sigma_t + mu_t, clamped to the
/// channel range. A channel with sigma_s below 1e-6 is mean-shifted only.
LabImage color_transfer(const LabImage& source, const ChannelStats& target);

/// Same mapping with the source statistics supplied, e.g. pooled over a whole
/// domain rather than taken from this image.
LabImage color_transfer(const LabImage& source, const ChannelStats& from,
                        const ChannelStats& target);

/// rgb -> lab -> transfer -> rgb.
RgbImage color_transfer_rgb(const RgbImage& source, const ChannelStats& target);
RgbImage color_transfer_rgb(const RgbImage& source, const ChannelStats& from,
                            const ChannelStats& target);

}  // namespace instmix

#endif  // INSTMIX_COLORSPACE_HPP_
