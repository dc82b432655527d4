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

#ifndef INSTMIX_DATASET_HPP_
#define INSTMIX_DATASET_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "instmix/common.hpp"
#include "instmix/image.hpp"
#include "instmix/mask.hpp"

namespace instmix {

struct ImageRecord {
  long long id = 0;
  int width = 0;
  int height = 0;
  std::string file_name;

  bool operator==(const ImageRecord&) const = default;
};

// A labelled instance. The mask is held decoded; documents carry it as RLE.
// `area` and `bbox` are stored as read and checked against the mask by
// validate_dataset.
struct InstanceAnnotation {
  long long id = 0;
  long long image_id = 0;
  ClassId class_id;
  BinaryMask mask;
  BBox bbox;
  std::size_t area = 0;
  std::optional<double> score;
  // Prediction-document extensions.
  std::optional<double> mask_conf;
  std::optional<double> class_conf;
  std::optional<std::string> source_group;

  bool operator==(const InstanceAnnotation&) const = default;
};

/// Builds an annotation whose area and bbox are derived from `mask`.
/// Throws ValidationError for an empty mask.
InstanceAnnotation make_annotation(long long id, long long image_id, ClassId cls, BinaryMask mask,
                                   std::optional<double> score = std::nullopt);

struct Dataset {
  std::vector<ImageRecord> images;
  std::vector<InstanceAnnotation> annotations;
  std::vector<std::pair<ClassId, std::string>> classes;

  const ImageRecord* find_image(long long id) const;
  std::vector<const InstanceAnnotation*> annotations_for(long long image_id) const;

  bool operator==(const Dataset&) const = default;
};

/// The canonical category table (all eight classes).
std::vector<std::pair<ClassId, std::string>> default_categories();

/// Checks every structural and geometric invariant; throws ValidationError
/// (ReferenceError for dangling image ids) naming the offending record.
void validate_dataset(const Dataset& dataset);

/// Parses and validates an annotation document. `origin` prefixes messages.
Dataset parse_dataset(std::string_view json_text, std::string_view origin = "<memory>");
Dataset load_dataset(const std::filesystem::path& path);

/// Canonical serialization: records sorted by id, fixed field order.
std::string serialize_dataset(const Dataset& dataset);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

/// Cityscapes-style instance map: class_id*1000 + k, k the 1-based index of
/// the instance within its class in input order; 0 is background. Throws
/// RasterizationError when masks overlap, CapacityError beyond 999 per class.
Gray16Image write_instance_id_image(std::span<const InstanceAnnotation> annotations, int width,
                                    int height);
Gray16Image write_instance_id_image(std::span<const InstanceAnnotation* const> annotations,
                                    int width, int height);

struct DecodedInstance {
  ClassId class_id;
  BinaryMask mask;
};

/// Inverse of write_instance_id_image, ordered by pixel value.
std::vector<DecodedInstance> read_instance_id_image(const Gray16Image& image);

/// A document plus its decoded images, parallel to `dataset.images`.
/// On disk: <dir>/annotations.json with file_name relative to <dir>.
struct ImageSet {
  Dataset dataset;
  std::vector<RgbImage> images;

  const RgbImage& image(long long image_id) const;
};

ImageSet load_image_set(const std::filesystem::path& dir);

/// Writes every image to <dir>/<file_name>, annotations.json and, when
/// `instance_ids` is set, instance_ids/<stem>.png for each image.
void save_image_set(const std::filesystem::path& dir, const ImageSet& set,
                    bool instance_ids = true);

struct GroupShares {
  std::string group;
  std::size_t instances = 0;
  // Absent when the group has no instances.
  std::optional<std::map<ClassId, double>> shares;
};

/// Per-group instance share of every class in the group.
std::vector<GroupShares> class_statistics(const Dataset& dataset,
                                          const std::vector<CategoryGroup>& grouping);

}  // namespace instmix

#endif  // INSTMIX_DATASET_HPP_
