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

#include "instmix/pseudo_label.hpp"

#include <algorithm>
#include <map>

namespace instmix {

namespace {

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

void Prediction::validate() const {
  if (!in_unit(mask_conf) || !in_unit(class_conf)) {
    throw ValidationError("prediction confidences must lie in [0,1]");
  }
  if (mask.size() == 0 || mask.empty()) throw ValidationError("prediction mask is empty");
}

void FilterConfig::validate() const {
  if (!in_unit(tau)) throw ValidationError("tau must lie in [0,1]");
  if (!in_unit(fuse_iou)) throw ValidationError("fuse_iou must lie in [0,1]");
}

double confidence(const Prediction& p) { return p.mask_conf * p.class_conf; }

std::vector<Prediction> filter_predictions(std::span<const Prediction> preds,
                                           const FilterConfig& cfg) {
  cfg.validate();
  std::vector<Prediction> kept;
  for (const auto& p : preds) {
    if (confidence(p) >= cfg.tau) kept.push_back(p);
  }
  return kept;
}

std::vector<Prediction> fuse(std::span<const Prediction> group_a_preds,
                             std::span<const Prediction> group_b_preds, const CategoryGroup& group_a,
                             const CategoryGroup& group_b, const FilterConfig& cfg) {
  cfg.validate();
  validate_grouping({group_a, group_b});
  for (const auto& p : group_a_preds) {
    if (!group_a.contains(p.class_id)) {
      throw ValidationError("class " + std::string(class_name(p.class_id)) +
                            " is not in group '" + group_a.name + "'");
    }
  }
  for (const auto& p : group_b_preds) {
    if (!group_b.contains(p.class_id)) {
      throw ValidationError("class " + std::string(class_name(p.class_id)) +
                            " is not in group '" + group_b.name + "'");
    }
  }

  std::vector<bool> drop_a(group_a_preds.size(), false), drop_b(group_b_preds.size(), false);
  for (std::size_t i = 0; i < group_a_preds.size(); ++i) {
    for (std::size_t j = 0; j < group_b_preds.size(); ++j) {
      const auto& a = group_a_preds[i];
      const auto& b = group_b_preds[j];
      if (!a.mask.same_shape(b.mask)) {
        throw DimensionError("fuse: prediction masks of one image differ in size");
      }
      if (a.mask.empty() && b.mask.empty()) continue;
      if (mask_iou(a.mask, b.mask) <= cfg.fuse_iou) continue;
      if (confidence(b) > confidence(a)) {
        drop_a[i] = true;
      } else {
        drop_b[j] = true;
      }
    }
  }

  std::vector<Prediction> out;
  for (std::size_t i = 0; i < group_a_preds.size(); ++i) {
    if (drop_a[i]) continue;
    out.push_back(group_a_preds[i]);
    out.back().source_group = group_a.name;
  }
  for (std::size_t j = 0; j < group_b_preds.size(); ++j) {
    if (drop_b[j]) continue;
    out.push_back(group_b_preds[j]);
    out.back().source_group = group_b.name;
  }
  return out;
}

InstanceAnnotation to_annotation(const Prediction& p, long long id, long long image_id) {
  InstanceAnnotation a = make_annotation(id, image_id, p.class_id, p.mask, confidence(p));
  a.mask_conf = p.mask_conf;
  a.class_conf = p.class_conf;
  if (!p.source_group.empty()) a.source_group = p.source_group;
  return a;
}

Prediction from_annotation(const InstanceAnnotation& a, const std::string& source_group) {
  if (!a.mask_conf || !a.class_conf) {
    throw ValidationError("prediction record " + std::to_string(a.id) +
                          " lacks mask_conf/class_conf");
  }
  if (!a.score) {
    throw ValidationError("prediction record " + std::to_string(a.id) + " lacks a score");
  }
  Prediction p{a.class_id, a.mask, *a.mask_conf, *a.class_conf,
               source_group.empty() ? a.source_group.value_or("") : source_group};
  p.validate();
  return p;
}

Dataset filter_document(const Dataset& predictions, const FilterConfig& cfg) {
  cfg.validate();
  Dataset out{predictions.images, {}, predictions.classes};
  for (const auto& a : predictions.annotations) {
    if (confidence(from_annotation(a)) >= cfg.tau) out.annotations.push_back(a);
  }
  return out;
}

Dataset fuse_documents(const Dataset& group_a_doc, const Dataset& group_b_doc,
                       const CategoryGroup& group_a, const CategoryGroup& group_b,
                       const FilterConfig& cfg) {
  auto ids = [](const Dataset& d) {
    std::vector<long long> v;
    for (const auto& im : d.images) v.push_back(im.id);
    std::sort(v.begin(), v.end());
    return v;
  };
  if (ids(group_a_doc) != ids(group_b_doc)) {
    throw ReferenceError("fuse: the two prediction documents list different images");
  }
  Dataset out{group_a_doc.images, {}, default_categories()};
  std::sort(out.images.begin(), out.images.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; });
  long long next_id = 1;
  for (const auto& im : out.images) {
    std::vector<Prediction> pa, pb;
    for (const auto* a : group_a_doc.annotations_for(im.id)) pa.push_back(from_annotation(*a));
    for (const auto* b : group_b_doc.annotations_for(im.id)) pb.push_back(from_annotation(*b));
    for (const auto& p : fuse(pa, pb, group_a, group_b, cfg)) {
      out.annotations.push_back(to_annotation(p, next_id++, im.id));
    }
  }
  return out;
}

}  // namespace instmix
