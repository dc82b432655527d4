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

#include "instmix/colorspace.hpp"

#include <algorithm>
#include <cmath>

namespace instmix {

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

// Linear sRGB -> XYZ (D65).
constexpr Mat3 kRgbToXyz = {{{0.4124564, 0.3575761, 0.1804375},
                             {0.2126729, 0.7151522, 0.0721750},
                             {0.0193339, 0.1191920, 0.9503041}}};

Mat3 invert(const Mat3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Mat3 r;
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return r;
}

const Mat3& xyz_to_rgb() {
  static const Mat3 inv = invert(kRgbToXyz);
  return inv;
}

// Reference white = image of linear (1,1,1), so neutral greys get a = b = 0.
const std::array<double, 3>& white() {
  static const std::array<double, 3> w = {
      kRgbToXyz[0][0] + kRgbToXyz[0][1] + kRgbToXyz[0][2],
      kRgbToXyz[1][0] + kRgbToXyz[1][1] + kRgbToXyz[1][2],
      kRgbToXyz[2][0] + kRgbToXyz[2][1] + kRgbToXyz[2][2]};
  return w;
}

constexpr double kEpsilon = 216.0 / 24389.0;
constexpr double kKappa = 24389.0 / 27.0;

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) { return t > kEpsilon ? std::cbrt(t) : (kKappa * t + 16.0) / 116.0; }

double lab_f_inv(double u) {
  const double u3 = u * u * u;
  return u3 > kEpsilon ? u3 : (116.0 * u - 16.0) / kKappa;
}

std::array<double, 3> lab_to_linear(Lab lab) {
  const double fy = (lab.L + 16.0) / 116.0;
  const double fx = fy + lab.a / 500.0;
  const double fz = fy - lab.b / 200.0;
  const auto& w = white();
  const double xyz[3] = {lab_f_inv(fx) * w[0], lab_f_inv(fy) * w[1], lab_f_inv(fz) * w[2]};
  const Mat3& m = xyz_to_rgb();
  std::array<double, 3> rgb{};
  for (int i = 0; i < 3; ++i) {
    rgb[i] = m[i][0] * xyz[0] + m[i][1] * xyz[1] + m[i][2] * xyz[2];
  }
  return rgb;
}

}  // namespace

Lab srgb_to_lab(Rgb c) {
  const double lin[3] = {srgb_to_linear(c[0] / 255.0), srgb_to_linear(c[1] / 255.0),
                         srgb_to_linear(c[2] / 255.0)};
  const auto& w = white();
  double xyz[3];
  for (int i = 0; i < 3; ++i) {
    xyz[i] = kRgbToXyz[i][0] * lin[0] + kRgbToXyz[i][1] * lin[1] + kRgbToXyz[i][2] * lin[2];
  }
  const double fx = lab_f(xyz[0] / w[0]);
  const double fy = lab_f(xyz[1] / w[1]);
  const double fz = lab_f(xyz[2] / w[2]);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

Rgb lab_to_srgb(Lab lab) {
  const auto lin = lab_to_linear(lab);
  Rgb out;
  for (int i = 0; i < 3; ++i) {
    const double v = linear_to_srgb(std::clamp(lin[i], 0.0, 1.0));
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  }
  return out;
}

bool lab_in_srgb_gamut(Lab lab, double tol) {
  const auto lin = lab_to_linear(lab);
  return std::all_of(lin.begin(), lin.end(),
                     [tol](double v) { return v >= -tol && v <= 1.0 + tol; });
}

double delta_e(const Lab& p, const Lab& q) {
  const double dl = p.L - q.L, da = p.a - q.a, db = p.b - q.b;
  return std::sqrt(dl * dl + da * da + db * db);
}

LabImage rgb_to_lab(const RgbImage& image) {
  LabImage out{image.width(), image.height(), {}};
  out.pixels.reserve(image.pixel_count());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) out.pixels.push_back(srgb_to_lab(image.at(x, y)));
  }
  return out;
}

RgbImage lab_to_rgb(const LabImage& lab) {
  RgbImage out(lab.width, lab.height);
  for (int y = 0; y < lab.height; ++y) {
    for (int x = 0; x < lab.width; ++x) out.set(x, y, lab_to_srgb(lab.at(x, y)));
  }
  return out;
}

ChannelStats pooled_channel_stats(std::span<const LabImage> images) {
  // Two passes in long double: mean first, then centred second moment.
  std::size_t n = 0;
  long double sum[3] = {0, 0, 0};
  for (const auto& img : images) {
    for (const Lab& p : img.pixels) {
      for (int c = 0; c < 3; ++c) sum[c] += p[c];
    }
    n += img.pixels.size();
  }
  if (n == 0) throw DimensionError("channel_stats needs at least one pixel");
  ChannelStats st;
  for (int c = 0; c < 3; ++c) st.mean[c] = static_cast<double>(sum[c] / n);
  long double sq[3] = {0, 0, 0};
  for (const auto& img : images) {
    for (const Lab& p : img.pixels) {
      for (int c = 0; c < 3; ++c) {
        const long double d = p[c] - static_cast<long double>(st.mean[c]);
        sq[c] += d * d;
      }
    }
  }
  for (int c = 0; c < 3; ++c) st.stddev[c] = static_cast<double>(std::sqrt(sq[c] / n));
  return st;
}

ChannelStats channel_stats(const LabImage& lab) {
  return pooled_channel_stats(std::span<const LabImage>(&lab, 1));
}

LabImage color_transfer(const LabImage& source, const ChannelStats& target) {
  return color_transfer(source, channel_stats(source), target);
}

LabImage color_transfer(const LabImage& source, const ChannelStats& src,
                        const ChannelStats& target) {
  constexpr double kSigmaFloor = 1e-6;
  LabImage out = source;
  for (int c = 0; c < 3; ++c) {
    const bool flat = src.stddev[c] < kSigmaFloor;
    const double scale = flat ? 1.0 : target.stddev[c] / src.stddev[c];
    for (Lab& p : out.pixels) {
      const double v = (p[c] - src.mean[c]) * scale + target.mean[c];
      p[c] = std::clamp(v, kLabMin[c], kLabMax[c]);
    }
  }
  return out;
}

RgbImage color_transfer_rgb(const RgbImage& source, const ChannelStats& target) {
  return lab_to_rgb(color_transfer(rgb_to_lab(source), target));
}

RgbImage color_transfer_rgb(const RgbImage& source, const ChannelStats& from,
                            const ChannelStats& target) {
  return lab_to_rgb(color_transfer(rgb_to_lab(source), from, target));
}

}  // namespace instmix
