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

#ifndef INSTMIX_MIXING_HPP_
#define INSTMIX_MIXING_HPP_

#include <optional>
#include <span>
#include <vector>

#include "instmix/dataset.hpp"
#include "instmix/image.hpp"
#include "instmix/rng.hpp"

namespace instmix {

enum class Strategy { kInstanceWise, kPatchWise };
enum class Direction { kS2T, kT2S };
enum class DonorSelection { kAllInstances, kRandomHalf };
enum class LabelOrigin { kRecipient, kDonor };

const char* to_string(Direction d);
const char* to_string(Strategy s);

inline constexpr std::size_t kDefaultAreaThreshold = 1500;
inline constexpr double kDefaultPatchMargin = 0.20;

struct MixOptions {
  // Instances strictly larger than this are pasted instance-wise; the rest,
  // including equality, patch-wise.
  std::size_t area_threshold = kDefaultAreaThreshold;
  // Patch context per side, as a fraction of the instance bbox extent.
  double patch_margin = kDefaultPatchMargin;
  std::size_t min_remnant_area = kDefaultMinRemnantArea;
  DonorSelection selection = DonorSelection::kAllInstances;
  std::optional<CategoryGroup> group_filter;
  std::uint64_t seed = 0;

  void validate() const;
};

/// An image with its instances; the donor or recipient of a mix.
struct LabeledImage {
  long long image_id = 1;
  RgbImage image;
  std::vector<InstanceAnnotation> annotations;
};

struct MixedSample {
  RgbImage image;
  std::vector<InstanceAnnotation> annotations;
  std::vector<LabelOrigin> origins;     // parallel to annotations
  std::vector<std::uint8_t> provenance;  // row-major; 1 = donor pixel
  Direction direction = Direction::kS2T;

  /// 0 for recipient pixels, 255 for donor pixels.
  Gray8Image provenance_image() const;
};

Strategy route_strategy(std::size_t area, const MixOptions& options);

/// canvas[p] = donor[p] wherever mask[p] is set.
RgbImage paste_instance(const RgbImage& donor, const BinaryMask& mask, RgbImage canvas);

/// The bbox grown by ceil(margin * extent) on each side, clipped to bounds.
BBox patch_region(const BBox& bbox, double margin, int width, int height);

struct PatchPaste {
  RgbImage canvas;
  BBox region;
  // The instance itself, then every other donor annotation clipped to the
  // region whose clipped area reaches min_remnant_area.
  std::vector<InstanceAnnotation> carried;
};

PatchPaste paste_patch(const RgbImage& donor, const InstanceAnnotation& instance,
                       std::span<const InstanceAnnotation> donor_annotations,
                       const MixOptions& options, RgbImage canvas);

/// Cut-and-paste of donor instances onto the recipient. Donor instances are
/// pasted in order (primary donor first, then each extra donor), each later
/// paste taking priority over everything beneath it; overlapped labels are
/// erased and dropped below min_remnant_area. Donors whose size differs from
/// the recipient are resized to it first.
MixedSample mix(const LabeledImage& donor, const LabeledImage& recipient, Direction direction,
                const MixOptions& options, Rng& rng,
                std::span<const LabeledImage> extra_donors = {});

}  // namespace instmix

#endif  // INSTMIX_MIXING_HPP_
