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

#include "instmix/mixing.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace instmix {

const char* to_string(Direction d) { return d == Direction::kS2T ? "s2t" : "t2s"; }

const char* to_string(Strategy s) {
  return s == Strategy::kInstanceWise ? "instance-wise" : "patch-wise";
}

void MixOptions::validate() const {
  if (!(patch_margin >= 0.0 && patch_margin <= 1.0)) {
    throw ValidationError("patch_margin must lie in [0,1]");
  }
  if (group_filter && group_filter->classes.empty()) {
    throw ValidationError("group filter '" + group_filter->name + "' is empty");
  }
}

Gray8Image MixedSample::provenance_image() const {
  Gray8Image img{image.width(), image.height(), provenance};
  for (auto& v : img.data) v = v ? 255 : 0;
  return img;
}

Strategy route_strategy(std::size_t area, const MixOptions& options) {
  return area > options.area_threshold ? Strategy::kInstanceWise : Strategy::kPatchWise;
}

RgbImage paste_instance(const RgbImage& donor, const BinaryMask& mask, RgbImage canvas) {
  if (!donor.same_shape(canvas) || donor.width() != mask.width() ||
      donor.height() != mask.height()) {
    throw DimensionError("paste_instance: donor, mask and canvas sizes differ");
  }
  const auto& bits = mask.bits();
  auto& out = canvas.data();
  const auto& src = donor.data();
  for (std::size_t p = 0; p < bits.size(); ++p) {
    if (!bits[p]) continue;
    out[3 * p] = src[3 * p];
    out[3 * p + 1] = src[3 * p + 1];
    out[3 * p + 2] = src[3 * p + 2];
  }
  return canvas;
}

BBox patch_region(const BBox& bbox, double margin, int width, int height) {
  // The 1e-9 slack keeps exact products such as 0.2 * 5 from rounding up.
  const int dx = static_cast<int>(std::ceil(margin * bbox.w - 1e-9));
  const int dy = static_cast<int>(std::ceil(margin * bbox.h - 1e-9));
  const int x0 = std::max(0, bbox.x - dx);
  const int y0 = std::max(0, bbox.y - dy);
  const int x1 = std::min(width, bbox.x + bbox.w + dx);
  const int y1 = std::min(height, bbox.y + bbox.h + dy);
  return {x0, y0, x1 - x0, y1 - y0};
}

namespace {

InstanceAnnotation with_mask(const InstanceAnnotation& src, BinaryMask mask) {
  InstanceAnnotation a = src;
  const MaskStats st = mask_stats(mask);
  a.mask = std::move(mask);
  a.area = st.area;
  a.bbox = st.bbox.value_or(BBox{});
  return a;
}

}  // namespace

PatchPaste paste_patch(const RgbImage& donor, const InstanceAnnotation& instance,
                       std::span<const InstanceAnnotation> donor_annotations,
                       const MixOptions& options, RgbImage canvas) {
  if (!donor.same_shape(canvas) || instance.mask.width() != donor.width() ||
      instance.mask.height() != donor.height()) {
    throw DimensionError("paste_patch: donor, instance mask and canvas sizes differ");
  }
  PatchPaste out;
  out.region = patch_region(instance.bbox, options.patch_margin, donor.width(), donor.height());
  const BBox& r = out.region;
  for (int y = r.y; y < r.y + r.h; ++y) {
    for (int x = r.x; x < r.x + r.w; ++x) canvas.set(x, y, donor.at(x, y));
  }
  out.canvas = std::move(canvas);

  out.carried.push_back(instance);
  const std::size_t min_area = std::max<std::size_t>(1, options.min_remnant_area);
  for (const auto& other : donor_annotations) {
    if (other.id == instance.id) continue;
    if (!other.mask.same_shape(instance.mask)) {
      throw DimensionError("paste_patch: donor annotation sizes differ");
    }
    BinaryMask clipped(other.mask.width(), other.mask.height());
    std::size_t area = 0;
    for (int y = r.y; y < r.y + r.h; ++y) {
      for (int x = r.x; x < r.x + r.w; ++x) {
        if (other.mask.at(x, y)) {
          clipped.set(x, y);
          ++area;
        }
      }
    }
    if (area >= min_area) out.carried.push_back(with_mask(other, std::move(clipped)));
  }
  return out;
}

namespace {

std::vector<InstanceAnnotation> filter_group(const std::vector<InstanceAnnotation>& anns,
                                             const std::optional<CategoryGroup>& group) {
  if (!group) return anns;
  std::vector<InstanceAnnotation> out;
  for (const auto& a : anns) {
    if (group->contains(a.class_id)) out.push_back(a);
  }
  return out;
}

// Donor brought to the recipient's size, group-filtered.
LabeledImage prepare_donor(const LabeledImage& donor, int width, int height,
                           const std::optional<CategoryGroup>& group) {
  LabeledImage out;
  out.image_id = donor.image_id;
  out.image = resize_bilinear(donor.image, width, height);
  for (const auto& a : filter_group(donor.annotations, group)) {
    if (a.mask.width() != donor.image.width() || a.mask.height() != donor.image.height()) {
      throw DimensionError("donor annotation " + std::to_string(a.id) +
                           " does not match its image size");
    }
    BinaryMask m = resize_nearest(a.mask, width, height);
    if (m.empty()) continue;
    out.annotations.push_back(with_mask(a, std::move(m)));
  }
  return out;
}

struct Label {
  InstanceAnnotation ann;
  LabelOrigin origin;
};

}  // namespace

MixedSample mix(const LabeledImage& donor, const LabeledImage& recipient, Direction direction,
                const MixOptions& options, Rng& rng, std::span<const LabeledImage> extra_donors) {
  options.validate();
  const int w = recipient.image.width();
  const int h = recipient.image.height();

  std::vector<LabeledImage> donors;
  donors.push_back(prepare_donor(donor, w, h, options.group_filter));
  for (const auto& d : extra_donors) donors.push_back(prepare_donor(d, w, h, options.group_filter));
  for (const auto& d : donors) {
    if (!d.image.same_shape(recipient.image)) {
      throw DimensionError("mix: donor and recipient sizes differ after resize");
    }
  }

  // Paste order: (donor index, annotation index).
  std::vector<std::pair<std::size_t, std::size_t>> order;
  {
    const std::size_t n = donors[0].annotations.size();
    if (options.selection == DonorSelection::kRandomHalf) {
      for (std::size_t i : rng.sample_without_replacement(n, (n + 1) / 2)) order.emplace_back(0, i);
    } else {
      for (std::size_t i = 0; i < n; ++i) order.emplace_back(0, i);
    }
    for (std::size_t d = 1; d < donors.size(); ++d) {
      for (std::size_t i = 0; i < donors[d].annotations.size(); ++i) order.emplace_back(d, i);
    }
  }

  MixedSample out;
  out.direction = direction;
  out.image = recipient.image;
  out.provenance.assign(static_cast<std::size_t>(w) * h, 0);

  std::vector<Label> labels;
  for (const auto& a : filter_group(recipient.annotations, options.group_filter)) {
    if (a.mask.width() != w || a.mask.height() != h) {
      throw DimensionError("recipient annotation " + std::to_string(a.id) +
                           " does not match the recipient image size");
    }
    labels.push_back({a, LabelOrigin::kRecipient});
  }

  for (const auto& [d, i] : order) {
    const LabeledImage& src = donors[d];
    const InstanceAnnotation& inst = src.annotations[i];

    BinaryMask region;
    std::vector<InstanceAnnotation> carried;
    if (route_strategy(inst.area, options) == Strategy::kInstanceWise) {
      out.image = paste_instance(src.image, inst.mask, std::move(out.image));
      region = inst.mask;
      carried.push_back(inst);
    } else {
      PatchPaste p = paste_patch(src.image, inst, src.annotations, options, std::move(out.image));
      out.image = std::move(p.canvas);
      region = box_mask(w, h, p.region);
      carried = std::move(p.carried);
    }

    std::vector<Label> kept;
    kept.reserve(labels.size() + carried.size());
    for (auto& l : labels) {
      if (intersection_area(l.ann.mask, region) == 0) {
        kept.push_back(std::move(l));
        continue;
      }
      auto rest = erase_overlap(l.ann.mask, region, options.min_remnant_area);
      if (rest && !rest->empty()) {
        kept.push_back({with_mask(l.ann, std::move(*rest)), l.origin});
      }
    }
    for (auto& c : carried) kept.push_back({std::move(c), LabelOrigin::kDonor});
    labels = std::move(kept);

    const auto& bits = region.bits();
    for (std::size_t p = 0; p < bits.size(); ++p) {
      if (bits[p]) out.provenance[p] = 1;
    }
  }

  // Recipient-origin labels first, then donor labels in paste order.
  std::stable_partition(labels.begin(), labels.end(),
                        [](const Label& l) { return l.origin == LabelOrigin::kRecipient; });
  long long next_id = 1;
  for (auto& l : labels) {
    l.ann.id = next_id++;
    l.ann.image_id = recipient.image_id;
    out.annotations.push_back(std::move(l.ann));
    out.origins.push_back(l.origin);
  }
  return out;
}

}  // namespace instmix
