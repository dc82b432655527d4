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

#include "instmix/mask.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace instmix {

BinaryMask::BinaryMask(int width, int height) : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw DimensionError("mask dimensions must be >= 1, got " + std::to_string(width) + "x" +
                         std::to_string(height));
  }
  bits_.assign(static_cast<std::size_t>(width) * height, 0);
}

std::size_t BinaryMask::area() const {
  return static_cast<std::size_t>(std::count_if(bits_.begin(), bits_.end(),
                                                [](std::uint8_t b) { return b != 0; }));
}

RleMask rle_encode(const BinaryMask& mask) {
  RleMask rle{mask.height(), mask.width(), {}};
  bool current = false;
  std::uint64_t run = 0;
  for (int x = 0; x < mask.width(); ++x) {
    for (int y = 0; y < mask.height(); ++y) {
      const bool v = mask.at(x, y);
      if (v != current) {
        rle.counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  }
  rle.counts.push_back(run);
  return rle;
}

BinaryMask rle_decode(const RleMask& rle) {
  if (rle.height < 1 || rle.width < 1) {
    throw CodecError("RLE size must be positive, got [" + std::to_string(rle.height) + "," +
                     std::to_string(rle.width) + "]");
  }
  const std::uint64_t total = static_cast<std::uint64_t>(rle.height) * rle.width;
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < rle.counts.size(); ++i) {
    if (i > 0 && rle.counts[i] == 0) {
      throw CodecError("RLE run " + std::to_string(i) + " is zero; only the first run may be 0");
    }
    sum += rle.counts[i];
    if (sum > total) break;
  }
  if (sum != total) {
    throw CodecError("RLE counts sum to " + std::to_string(sum) + ", expected " +
                     std::to_string(total));
  }

  BinaryMask mask(rle.width, rle.height);
  std::uint64_t pos = 0;
  bool fg = false;
  for (std::uint64_t run : rle.counts) {
    if (fg) {
      for (std::uint64_t k = pos; k < pos + run; ++k) {
        const int x = static_cast<int>(k / rle.height);
        const int y = static_cast<int>(k % rle.height);
        mask.set(x, y);
      }
    }
    pos += run;
    fg = !fg;
  }
  return mask;
}

namespace {

void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": mask dimensions differ (" +
                         std::to_string(a.width()) + "x" + std::to_string(a.height()) + " vs " +
                         std::to_string(b.width()) + "x" + std::to_string(b.height()) + ")");
  }
}

}  // namespace

std::size_t intersection_area(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b, "intersection_area");
  const auto& x = a.bits();
  const auto& y = b.bits();
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) n += (x[i] & y[i]) != 0;
  return n;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b, "mask_iou");
  const auto& x = a.bits();
  const auto& y = b.bits();
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    inter += (x[i] & y[i]) != 0;
    uni += (x[i] | y[i]) != 0;
  }
  if (uni == 0) throw Error("mask_iou: both masks are empty");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::optional<BinaryMask> erase_overlap(const BinaryMask& recipient, const BinaryMask& pasted,
                                        std::size_t min_remnant_area) {
  require_same_shape(recipient, pasted, "erase_overlap");
  BinaryMask out = recipient;
  auto& bits = out.bits();
  const auto& p = pasted.bits();
  std::size_t remaining = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    bits[i] = (bits[i] != 0 && p[i] == 0) ? 1 : 0;
    remaining += bits[i];
  }
  if (remaining < min_remnant_area) return std::nullopt;
  return out;
}

MaskStats mask_stats(const BinaryMask& mask) {
  MaskStats s;
  int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      ++s.area;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (s.area > 0) s.bbox = BBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
  return s;
}

BinaryMask box_mask(int width, int height, const BBox& box) {
  BinaryMask m(width, height);
  const int xa = std::max(0, box.x), xb = std::min(width, box.x + box.w);
  const int ya = std::max(0, box.y), yb = std::min(height, box.y + box.h);
  for (int y = ya; y < yb; ++y) {
    for (int x = xa; x < xb; ++x) m.set(x, y);
  }
  return m;
}

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b, "mask_and");
  BinaryMask out = a;
  auto& bits = out.bits();
  const auto& o = b.bits();
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = (bits[i] & o[i]) ? 1 : 0;
  return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, int width, int height) {
  if (mask.width() == width && mask.height() == height) return mask;
  BinaryMask out(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(mask.height() - 1,
                            static_cast<int>((static_cast<long long>(y) * 2 + 1) * mask.height() /
                                             (2LL * height)));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(mask.width() - 1,
                              static_cast<int>((static_cast<long long>(x) * 2 + 1) * mask.width() /
                                               (2LL * width)));
      if (mask.at(sx, sy)) out.set(x, y);
    }
  }
  return out;
}

}  // namespace instmix
