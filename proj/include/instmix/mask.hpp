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

#ifndef INSTMIX_MASK_HPP_
#define INSTMIX_MASK_HPP_

#include <cstdint>
#include <optional>
#include <vector>

#include "instmix/common.hpp"

namespace instmix {

/// Axis-aligned pixel box: top-left (x, y), extent (w, h).
struct BBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool contains(int px, int py) const {
    return px >= x && px < x + w && py >= y && py < y + h;
  }
  bool operator==(const BBox&) const = default;
};

/// Row-major binary mask. Pixel (x, y) is column x, row y.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return bits_.size(); }

  bool at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool v = true) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
  }

  const std::vector<std::uint8_t>& bits() const { return bits_; }
  std::vector<std::uint8_t>& bits() { return bits_; }

  std::size_t area() const;
  bool empty() const { return area() == 0; }
  bool same_shape(const BinaryMask& o) const {
    return width_ == o.width_ && height_ == o.height_;
  }

  bool operator==(const BinaryMask&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Uncompressed COCO-style run-length encoding over column-major pixel order,
/// alternating background/foreground runs, starting with background.
struct RleMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint64_t> counts;

  bool operator==(const RleMask&) const = default;
};

RleMask rle_encode(const BinaryMask& mask);

/// Throws CodecError when counts do not sum to height*width or violate the
/// run structure (zero run anywhere but first position).
BinaryMask rle_decode(const RleMask& rle);

/// |a ∩ b| / |a ∪ b|. Throws DimensionError on shape mismatch and Error when
/// both masks are empty.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

std::size_t intersection_area(const BinaryMask& a, const BinaryMask& b);

/// recipient AND NOT pasted; std::nullopt ("dropped") when the remaining area
/// falls below min_remnant_area.
std::optional<BinaryMask> erase_overlap(const BinaryMask& recipient, const BinaryMask& pasted,
                                        std::size_t min_remnant_area);

struct MaskStats {
  std::size_t area = 0;
  std::optional<BBox> bbox;
};

MaskStats mask_stats(const BinaryMask& mask);

/// Mask with the pixels of `box` (clipped to the mask bounds) set.
BinaryMask box_mask(int width, int height, const BBox& box);

/// a AND b.
BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);

/// Nearest-neighbour resample to the given size.
BinaryMask resize_nearest(const BinaryMask& mask, int width, int height);

inline constexpr std::size_t kDefaultMinRemnantArea = 10;

}  // namespace instmix

#endif  // INSTMIX_MASK_HPP_
