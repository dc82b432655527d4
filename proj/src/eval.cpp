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

#include "instmix/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace instmix {

std::vector<double> EvalConfig::default_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

void EvalConfig::validate() const {
  if (iou_thresholds.empty()) throw ValidationError("at least one IoU threshold is required");
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
    const double t = iou_thresholds[i];
    if (!(t > 0.0 && t <= 1.0)) throw ValidationError("IoU thresholds must lie in (0,1]");
    if (i > 0 && !(t > iou_thresholds[i - 1])) {
      throw ValidationError("IoU thresholds must be strictly increasing");
    }
  }
  if (recall_points < 2) throw ValidationError("recall_points must be >= 2");
  if (max_dets < 1) throw ValidationError("max_dets must be >= 1");
}

namespace {

bool ranks_before(const InstanceAnnotation& a, const InstanceAnnotation& b) {
  const double sa = a.score.value_or(0), sb = b.score.value_or(0);
  if (sa != sb) return sa > sb;
  return a.id < b.id;
}

std::vector<std::size_t> rank(std::span<const InstanceAnnotation* const> preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return ranks_before(*preds[i], *preds[j]); });
  return order;
}

// IoU of ranked prediction i with ground truth j; 0 when both masks are empty.
using IouMatrix = std::vector<std::vector<double>>;

IouMatrix iou_matrix(std::span<const InstanceAnnotation* const> ranked,
                     std::span<const InstanceAnnotation* const> gts) {
  IouMatrix m(ranked.size(), std::vector<double>(gts.size(), 0.0));
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const std::size_t inter = intersection_area(ranked[i]->mask, gts[j]->mask);
      const std::size_t uni = ranked[i]->mask.area() + gts[j]->mask.area() - inter;
      m[i][j] = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
  }
  return m;
}

std::vector<bool> match_ranked(const IouMatrix& iou, std::size_t n_gt, double iou_t) {
  std::vector<bool> taken(n_gt, false);
  std::vector<bool> tp(iou.size(), false);
  for (std::size_t i = 0; i < iou.size(); ++i) {
    double best = -1;
    std::size_t best_j = n_gt;
    for (std::size_t j = 0; j < n_gt; ++j) {
      if (taken[j]) continue;
      if (iou[i][j] > best) {
        best = iou[i][j];
        best_j = j;
      }
    }
    if (best_j < n_gt && best >= iou_t) {
      taken[best_j] = true;
      tp[i] = true;
    }
  }
  return tp;
}

}  // namespace

std::vector<bool> match_greedy(std::span<const InstanceAnnotation* const> preds,
                               std::span<const InstanceAnnotation* const> gts, double iou_t,
                               std::vector<std::size_t>* order) {
  const auto idx = rank(preds);
  std::vector<const InstanceAnnotation*> ranked;
  for (auto i : idx) ranked.push_back(preds[i]);
  if (order) *order = idx;
  return match_ranked(iou_matrix(ranked, gts), gts.size(), iou_t);
}

std::optional<double> average_precision(const std::vector<bool>& flags, std::size_t n_gt,
                                        int recall_points) {
  if (n_gt == 0) return std::nullopt;
  if (recall_points < 2) throw ValidationError("recall_points must be >= 2");
  const std::size_t n = flags.size();
  std::vector<double> recall(n), precision(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += flags[k];
    recall[k] = static_cast<double>(tp) / static_cast<double>(n_gt);
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  // Precision envelope: max precision at any rank at or after k.
  for (std::size_t k = n; k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double sum = 0;
  for (int r = 0; r < recall_points; ++r) {
    const double level = static_cast<double>(r) / (recall_points - 1);
    auto it = std::lower_bound(recall.begin(), recall.end(), level);
    if (it == recall.end()) break;
    sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / recall_points;
}

EvalReport evaluate(const Dataset& predictions, const Dataset& ground_truth,
                    const EvalConfig& cfg) {
  cfg.validate();
  std::set<long long> pred_ids, gt_ids;
  for (const auto& im : predictions.images) pred_ids.insert(im.id);
  for (const auto& im : ground_truth.images) gt_ids.insert(im.id);
  if (pred_ids != gt_ids) {
    throw ReferenceError("prediction and ground-truth documents list different image ids");
  }
  for (const auto& a : predictions.annotations) {
    if (!a.score) throw ValidationError("prediction " + std::to_string(a.id) + " has no score");
  }
  if (ground_truth.annotations.empty()) {
    throw ValidationError("ground truth holds no instances");
  }

  const std::size_t nt = cfg.iou_thresholds.size();
  EvalReport report;
  report.thresholds = cfg.iou_thresholds;

  for (int c = 1; c <= kNumClasses; ++c) {
    const ClassId cls(c);
    // (score, id, tp per threshold) over all images.
    struct Det {
      double score;
      long long id;
      std::vector<bool> tp;
    };
    std::vector<Det> dets;
    std::size_t n_gt = 0;
    for (long long image_id : gt_ids) {
      std::vector<const InstanceAnnotation*> p, g;
      for (const auto* a : predictions.annotations_for(image_id)) {
        if (a->class_id == cls) p.push_back(a);
      }
      for (const auto* a : ground_truth.annotations_for(image_id)) {
        if (a->class_id == cls) g.push_back(a);
      }
      n_gt += g.size();
      if (p.empty()) continue;
      auto order = rank(p);
      if (order.size() > static_cast<std::size_t>(cfg.max_dets)) order.resize(cfg.max_dets);
      std::vector<const InstanceAnnotation*> ranked;
      for (auto i : order) ranked.push_back(p[i]);
      const IouMatrix iou = iou_matrix(ranked, g);
      std::vector<std::vector<bool>> per_t;
      for (double t : cfg.iou_thresholds) per_t.push_back(match_ranked(iou, g.size(), t));
      for (std::size_t i = 0; i < ranked.size(); ++i) {
        Det d{*ranked[i]->score, ranked[i]->id, std::vector<bool>(nt)};
        for (std::size_t t = 0; t < nt; ++t) d.tp[t] = per_t[t][i];
        dets.push_back(std::move(d));
      }
    }
    if (n_gt == 0) continue;
    std::stable_sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.id < b.id;
    });
    ClassResult res{cls, n_gt, {}, 0};
    for (std::size_t t = 0; t < nt; ++t) {
      std::vector<bool> flags;
      for (const auto& d : dets) flags.push_back(d.tp[t]);
      res.ap.push_back(*average_precision(flags, n_gt, cfg.recall_points));
    }
    res.ap_mean = std::accumulate(res.ap.begin(), res.ap.end(), 0.0) / static_cast<double>(nt);
    report.classes.push_back(std::move(res));
  }

  double sum = 0;
  for (const auto& c : report.classes) sum += c.ap_mean;
  report.map = sum / static_cast<double>(report.classes.size());
  for (std::size_t t = 0; t < nt; ++t) {
    if (std::abs(cfg.iou_thresholds[t] - 0.5) > 1e-9) continue;
    double s50 = 0;
    for (const auto& c : report.classes) s50 += c.ap[t];
    report.map50 = s50 / static_cast<double>(report.classes.size());
  }
  return report;
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * v);
  return buf;
}

const char* kShortNames[kNumClasses] = {"Person", "Rider", "Car", "Truck",
                                        "Bus",    "Train", "M.C", "B.C"};

}  // namespace

std::string format_report_table(const EvalReport& report, bool map50_only) {
  std::ostringstream out;
  std::vector<std::string> head, row;
  if (!map50_only) {
    for (int c = 1; c <= kNumClasses; ++c) {
      head.push_back(kShortNames[c - 1]);
      auto it = std::find_if(report.classes.begin(), report.classes.end(),
                             [&](const ClassResult& r) { return r.class_id.value() == c; });
      row.push_back(it == report.classes.end() ? "-" : pct(it->ap_mean));
    }
    head.push_back("mAP");
    row.push_back(pct(report.map));
  }
  head.push_back("mAP50");
  row.push_back(report.map50 ? pct(*report.map50) : "-");
  for (std::size_t i = 0; i < head.size(); ++i) {
    out << (i ? " | " : "") << head[i]
        << std::string(std::max(head[i].size(), row[i].size()) - head[i].size(), ' ');
  }
  out << "\n";
  for (std::size_t i = 0; i < row.size(); ++i) {
    out << (i ? " | " : "") << row[i]
        << std::string(std::max(head[i].size(), row[i].size()) - row[i].size(), ' ');
  }
  out << "\n";
  return out.str();
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["iou_thresholds"] = report.thresholds;
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (const auto& c : report.classes) {
    classes.push_back({{"class_id", c.class_id.value()},
                       {"name", std::string(class_name(c.class_id))},
                       {"n_gt", c.n_gt},
                       {"ap", c.ap},
                       {"ap_mean", c.ap_mean}});
  }
  j["classes"] = classes;
  j["mAP"] = report.map;
  j["mAP50"] = report.map50 ? nlohmann::ordered_json(*report.map50) : nlohmann::ordered_json();
  return j.dump(2) + "\n";
}

}  // namespace instmix
