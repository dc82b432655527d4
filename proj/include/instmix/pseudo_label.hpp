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

#ifndef INSTMIX_PSEUDO_LABEL_HPP_
#define INSTMIX_PSEUDO_LABEL_HPP_

#include <span>
#include <string>
#include <vector>

#include "instmix/dataset.hpp"

namespace instmix {

struct Prediction {
  ClassId class_id;
  BinaryMask mask;
  double mask_conf = 0;
  double class_conf = 0;
  std::string source_group;

  void validate() const;
  bool operator==(const Prediction&) const = default;
};

inline constexpr double kDefaultTau = 0.9;
inline constexpr double kDefaultFuseIou = 0.5;

struct FilterConfig {
  double tau = kDefaultTau;
  double fuse_iou = kDefaultFuseIou;

  void validate() const;
};

/// mask_conf * class_conf.
double confidence(const Prediction& p);

/// Keeps predictions with confidence >= tau, in order.
std::vector<Prediction> filter_predictions(std::span<const Prediction> preds,
                                           const FilterConfig& cfg);

/// Merges the outputs of two category-group models. For every cross-group
/// pair whose mask IoU exceeds fuse_iou the lower-confidence member is
/// removed (group A wins ties). All removals are decided on the input lists,
/// so the result does not depend on pair visiting order. Output: surviving A
/// predictions, then surviving B, each tagged with its group name.
std::vector<Prediction> fuse(std::span<const Prediction> group_a_preds,
                             std::span<const Prediction> group_b_preds, const CategoryGroup& group_a,
                             const CategoryGroup& group_b, const FilterConfig& cfg);

/// Annotation carrying score = confidence plus mask_conf/class_conf/source_group.
InstanceAnnotation to_annotation(const Prediction& p, long long id, long long image_id);

/// Reads a prediction record; mask_conf and class_conf are mandatory.
Prediction from_annotation(const InstanceAnnotation& a, const std::string& source_group = {});

/// Document-level filter: drops records whose mask_conf*class_conf < tau.
Dataset filter_document(const Dataset& predictions, const FilterConfig& cfg);

/// Document-level fuse, image by image. Both documents must list the same images.
Dataset fuse_documents(const Dataset& group_a_doc, const Dataset& group_b_doc,
                       const CategoryGroup& group_a, const CategoryGroup& group_b,
                       const FilterConfig& cfg);

}  // namespace instmix

#endif  // INSTMIX_PSEUDO_LABEL_HPP_
