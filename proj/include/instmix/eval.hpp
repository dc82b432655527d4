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

#ifndef INSTMIX_EVAL_HPP_
#define INSTMIX_EVAL_HPP_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "instmix/dataset.hpp"

namespace instmix {

struct EvalConfig {
  std::vector<double> iou_thresholds = default_thresholds();
  int recall_points = 101;
  int max_dets = 100;  // per image and class

  void validate() const;
  static std::vector<double> default_thresholds();
};

/// Greedy matching for one image and class. Predictions are ranked by score
/// descending, ties by id ascending; each takes the unmatched ground truth of
/// highest IoU (lowest index on ties) when that IoU >= iou_t. The returned
/// flags follow the ranked order, which is written to `order` if given.
std::vector<bool> match_greedy(std::span<const InstanceAnnotation* const> preds,
                               std::span<const InstanceAnnotation* const> gts, double iou_t,
                               std::vector<std::size_t>* order = nullptr);

/// Interpolated AP from TP/FP flags in rank order. nullopt when n_gt == 0.
std::optional<double> average_precision(const std::vector<bool>& flags, std::size_t n_gt,
                                        int recall_points = 101);

struct ClassResult {
  ClassId class_id;
  std::size_t n_gt = 0;
  std::vector<double> ap;  // one per threshold
  double ap_mean = 0;
};

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<ClassResult> classes;  // only classes present in ground truth, by id
  double map = 0;
  std::optional<double> map50;  // absent when 0.50 is not a threshold
};

/// Throws ReferenceError when the documents list different image ids and
/// ValidationError for a prediction without a score or an empty ground truth.
EvalReport evaluate(const Dataset& predictions, const Dataset& ground_truth,
                    const EvalConfig& cfg = {});

/// Per-class table in percent, one row, '-' for classes absent from ground truth.
std::string format_report_table(const EvalReport& report, bool map50_only = false);
std::string report_to_json(const EvalReport& report);

}  // namespace instmix

#endif  // INSTMIX_EVAL_HPP_
