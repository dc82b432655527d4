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

#include <algorithm>
#include <map>
#include <random>

#include "doctest.h"
#include "instmix/eval.hpp"
#include "json.hpp"
#include "oracles/ap_oracle.hpp"
#include "test_util.hpp"

using namespace instmix;

namespace {

constexpr int kW = 8;
constexpr int kH = 8;

std::vector<char> flat(const BinaryMask& m) {
  return std::vector<char>(m.bits().begin(), m.bits().end());
}

struct Fixture {
  Dataset pred, gt;
  std::vector<oracle::Det> opred, ogt;
  std::vector<long long> images;
};

// Up to `max_per` predictions and ground truths per image and class; predictions
// are jittered copies of ground truths or free rectangles. Scores come from a
// small set so ties occur.
Fixture random_fixture(std::mt19937_64& gen, int n_images, int n_classes, int max_per) {
  Fixture f;
  std::uniform_int_distribution<int> count(0, max_per), jitter(-1, 1), coin(0, 2);
  std::uniform_int_distribution<int> score_bucket(1, 6);
  long long next_gt = 1, next_pred = 1;
  for (long long im = 1; im <= n_images; ++im) {
    f.images.push_back(im);
    f.pred.images.push_back({im, kW, kH, "im" + std::to_string(im) + ".png"});
    for (int c = 1; c <= n_classes; ++c) {
      std::vector<BBox> boxes;
      for (int i = count(gen); i > 0; --i) {
        auto m = testing::random_rect_mask(gen, kW, kH);
        boxes.push_back(*mask_stats(m).bbox);
        f.gt.annotations.push_back(make_annotation(next_gt, im, ClassId(c), m));
        f.ogt.push_back({next_gt, im, c, 0, flat(m)});
        ++next_gt;
      }
      for (int i = count(gen); i > 0; --i) {
        BinaryMask m(kW, kH);
        if (!boxes.empty() && coin(gen) != 0) {
          BBox b = boxes[std::uniform_int_distribution<std::size_t>(0, boxes.size() - 1)(gen)];
          b.x += jitter(gen);
          b.y += jitter(gen);
          b.w = std::max(1, b.w + jitter(gen));
          b.h = std::max(1, b.h + jitter(gen));
          m = box_mask(kW, kH, b);
        }
        if (m.empty()) m = testing::random_rect_mask(gen, kW, kH);
        const double score = score_bucket(gen) / 6.0;
        f.pred.annotations.push_back(make_annotation(next_pred, im, ClassId(c), m, score));
        f.opred.push_back({next_pred, im, c, score, flat(m)});
        ++next_pred;
      }
    }
  }
  f.gt.images = f.pred.images;
  f.pred.classes = f.gt.classes = default_categories();
  return f;
}

std::vector<const InstanceAnnotation*> ptrs(const std::vector<InstanceAnnotation>& v) {
  std::vector<const InstanceAnnotation*> out;
  for (const auto& a : v) out.push_back(&a);
  return out;
}

InstanceAnnotation ann(long long id, const BinaryMask& m, double score = 1.0) {
  return make_annotation(id, 1, ClassId(1), m, score);
}

}  // namespace

TEST_CASE("match_greedy examples") {
  // 10 px gt, 9 px pred inside it: IoU 0.9.
  const auto g = box_mask(10, 10, {0, 0, 10, 1});
  const auto p = box_mask(10, 10, {0, 0, 9, 1});
  std::vector<InstanceAnnotation> gts{ann(1, g)};
  std::vector<InstanceAnnotation> one{ann(1, p, 0.8)};
  CHECK(match_greedy(ptrs(one), ptrs(gts), 0.5) == std::vector<bool>{true});
  CHECK(match_greedy(ptrs(one), ptrs(gts), 0.95) == std::vector<bool>{false});

  std::vector<InstanceAnnotation> two{ann(1, p, 0.6), ann(2, g, 0.9)};
  std::vector<std::size_t> order;
  CHECK(match_greedy(ptrs(two), ptrs(gts), 0.5, &order) == std::vector<bool>{true, false});
  CHECK(order == std::vector<std::size_t>{1, 0});

  std::vector<InstanceAnnotation> tied{ann(7, p, 0.9), ann(3, p, 0.9)};
  CHECK(match_greedy(ptrs(tied), ptrs(gts), 0.5, &order) == std::vector<bool>{true, false});
  CHECK(order == std::vector<std::size_t>{1, 0});
}

TEST_CASE("average_precision examples") {
  CHECK(*average_precision({true}, 1) == 1.0);
  CHECK(*average_precision({}, 1) == 0.0);
  CHECK(*average_precision({true, false}, 1) == 1.0);
  CHECK_FALSE(average_precision({}, 0).has_value());
  CHECK_FALSE(average_precision({false}, 0).has_value());
  // [FP, TP], one gt: precision 1/2 at every recall level.
  CHECK(*average_precision({false, true}, 1) == doctest::Approx(0.5));
  // [TP], two gts: recall tops out at 0.5, so 51 of 101 levels score 1.
  CHECK(*average_precision({true}, 2) == doctest::Approx(51.0 / 101.0));
}

TEST_CASE("evaluate examples") {
  std::mt19937_64 gen(7);
  auto f = random_fixture(gen, 4, 3, 3);
  REQUIRE_FALSE(f.gt.annotations.empty());

  Dataset perfect = f.gt;
  for (auto& a : perfect.annotations) a.score = 1.0;
  const auto r = evaluate(perfect, f.gt);
  CHECK(r.map == 1.0);
  CHECK(*r.map50 == 1.0);

  Dataset empty = f.gt;
  empty.annotations.clear();
  CHECK(evaluate(empty, f.gt).map == 0.0);

  Dataset other = f.pred;
  other.images.push_back({99, kW, kH, "x.png"});
  CHECK_THROWS_AS(evaluate(other, f.gt), ReferenceError);

  Dataset unscored = perfect;
  unscored.annotations[0].score.reset();
  CHECK_THROWS_AS(evaluate(unscored, f.gt), ValidationError);

  EvalConfig bad;
  bad.iou_thresholds = {0.5, 0.5};
  CHECK_THROWS_AS(evaluate(perfect, f.gt, bad), ValidationError);
}

TEST_CASE("classes absent from ground truth are excluded") {
  const auto m = box_mask(kW, kH, {0, 0, 4, 4});
  Dataset gt{{{1, kW, kH, "a.png"}}, {make_annotation(1, 1, ClassId(3), m)}, default_categories()};
  Dataset pred = gt;
  pred.annotations[0].score = 1.0;
  pred.annotations.push_back(make_annotation(2, 1, ClassId(6), m, 0.9));
  const auto r = evaluate(pred, gt);
  REQUIRE(r.classes.size() == 1);
  CHECK(r.classes[0].class_id == ClassId(3));
  CHECK(r.map == 1.0);
  const std::string table = format_report_table(r);
  CHECK(table.find("Train") != std::string::npos);
  CHECK(table.find("100.0") != std::string::npos);
  CHECK(table.find(" - ") != std::string::npos);
  const auto j = nlohmann::json::parse(report_to_json(r));
  CHECK(j["mAP"].get<double>() == 1.0);
  CHECK(j["classes"].size() == 1);
  CHECK(format_report_table(r, true).find("Person") == std::string::npos);
}

TEST_CASE("match_greedy agrees with the brute-force matcher") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 1000; ++trial) {
    auto f = random_fixture(gen, 1, 1, 4);
    const double t = std::uniform_real_distribution<double>(0.3, 0.95)(gen);
    std::vector<std::size_t> order;
    const auto flags = match_greedy(ptrs(f.pred.annotations), ptrs(f.gt.annotations), t, &order);
    const auto want = oracle::match(f.opred, f.ogt, t, 100);
    REQUIRE(flags.size() == want.size());
    for (std::size_t i = 0; i < flags.size(); ++i) {
      REQUIRE(f.pred.annotations[order[i]].id == want[i].id);
      REQUIRE(flags[i] == want[i].tp);
    }
  }
}

TEST_CASE("evaluate agrees with the brute-force evaluator") {
  std::mt19937_64 gen(13);
  const EvalConfig cfg;
  int compared = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto f = random_fixture(gen, 3, 3, 4);
    if (f.gt.annotations.empty()) continue;
    ++compared;
    const auto r = evaluate(f.pred, f.gt, cfg);
    const auto want = oracle::evaluate(f.opred, f.ogt, f.images, cfg.iou_thresholds);
    for (const auto& c : r.classes) {
      const auto& w = want.ap[c.class_id.value()];
      REQUIRE(w.size() == c.ap.size());
      for (std::size_t t = 0; t < w.size(); ++t) REQUIRE(std::abs(w[t] - c.ap[t]) <= 1e-9);
    }
    std::size_t present = 0;
    for (const auto& w : want.ap) present += !w.empty();
    REQUIRE(present == r.classes.size());
    REQUIRE(std::abs(r.map - want.map) <= 1e-9);
    REQUIRE(std::abs(*r.map50 - want.map50) <= 1e-9);
  }
  CHECK(compared > 900);
}

TEST_CASE("max_dets caps predictions per image and class") {
  std::mt19937_64 gen(17);
  EvalConfig cfg;
  cfg.max_dets = 2;
  for (int trial = 0; trial < 200; ++trial) {
    auto f = random_fixture(gen, 2, 2, 4);
    if (f.gt.annotations.empty()) continue;
    const auto r = evaluate(f.pred, f.gt, cfg);
    const auto want = oracle::evaluate(f.opred, f.ogt, f.images, cfg.iou_thresholds, 101, 2);
    REQUIRE(std::abs(r.map - want.map) <= 1e-9);
  }
}

// Flags of every prediction in `doc` at threshold t, keyed by id.
std::map<long long, bool> all_flags(const Dataset& pred, const Dataset& gt, double t) {
  std::map<long long, bool> out;
  for (const auto& im : gt.images) {
    for (int c = 1; c <= kNumClasses; ++c) {
      std::vector<const InstanceAnnotation*> p, g;
      for (const auto* a : pred.annotations_for(im.id))
        if (a->class_id == ClassId(c)) p.push_back(a);
      for (const auto* a : gt.annotations_for(im.id))
        if (a->class_id == ClassId(c)) g.push_back(a);
      std::vector<std::size_t> order;
      const auto flags = match_greedy(p, g, t, &order);
      for (std::size_t i = 0; i < order.size(); ++i) out[p[order[i]]->id] = flags[i];
    }
  }
  return out;
}

TEST_CASE("removing a false positive never lowers AP") {
  std::mt19937_64 gen(19);
  EvalConfig cfg;
  cfg.iou_thresholds = {0.5};
  int checked_fp = 0, checked_tp = 0;
  for (int trial = 0; trial < 300; ++trial) {
    auto f = random_fixture(gen, 2, 1, 4);
    if (f.gt.annotations.empty() || f.pred.annotations.empty()) continue;
    const double base = evaluate(f.pred, f.gt, cfg).map;
    const auto flags = all_flags(f.pred, f.gt, 0.5);
    for (std::size_t k = 0; k < f.pred.annotations.size(); ++k) {
      const long long victim = f.pred.annotations[k].id;
      Dataset fewer = f.pred;
      fewer.annotations.erase(fewer.annotations.begin() + static_cast<std::ptrdiff_t>(k));
      const double after = evaluate(fewer, f.gt, cfg).map;
      if (!flags.at(victim)) {
        ++checked_fp;
        REQUIRE(after >= base - 1e-12);
        continue;
      }
      // A removed true positive frees its ground truth; when no other
      // prediction changes status as a result, AP cannot rise.
      auto rest = all_flags(fewer, f.gt, 0.5);
      bool unchanged = true;
      for (const auto& [id, tp] : rest) unchanged = unchanged && flags.at(id) == tp;
      if (!unchanged) continue;
      ++checked_tp;
      REQUIRE(after <= base + 1e-12);
    }
  }
  CHECK(checked_fp > 100);
  CHECK(checked_tp > 100);
}

TEST_CASE("a removed true positive can promote a later false positive") {
  // g1 and g2; A hits g1 exactly, B overlaps g1 only, C hits g2.
  const auto g1 = box_mask(kW, kH, {0, 0, 4, 4});
  const auto g2 = box_mask(kW, kH, {5, 5, 3, 3});
  Dataset gt{{{1, kW, kH, "a.png"}},
             {make_annotation(1, 1, ClassId(1), g1), make_annotation(2, 1, ClassId(1), g2)},
             default_categories()};
  Dataset pred{gt.images,
               {make_annotation(1, 1, ClassId(1), g1, 0.9),
                make_annotation(2, 1, ClassId(1), box_mask(kW, kH, {0, 0, 4, 3}), 0.8),
                make_annotation(3, 1, ClassId(1), g2, 0.7)},
               default_categories()};
  EvalConfig cfg;
  cfg.iou_thresholds = {0.5};
  const double base = evaluate(pred, gt, cfg).map;
  CHECK(base == doctest::Approx((51.0 + 50.0 * 2.0 / 3.0) / 101.0));
  pred.annotations.erase(pred.annotations.begin());
  CHECK(evaluate(pred, gt, cfg).map == 1.0);
}

TEST_CASE("mAP does not depend on class or record order") {
  std::mt19937_64 gen(23);
  for (int trial = 0; trial < 100; ++trial) {
    auto f = random_fixture(gen, 3, 4, 3);
    if (f.gt.annotations.empty()) continue;
    const auto r = evaluate(f.pred, f.gt);
    Dataset shuffled = f.pred;
    std::shuffle(shuffled.annotations.begin(), shuffled.annotations.end(), gen);
    const auto r2 = evaluate(shuffled, f.gt);
    REQUIRE(r2.map == r.map);
    // Each class evaluated alone reproduces its entry; averaging in reverse
    // order gives the same mAP.
    double sum = 0;
    for (auto it = r.classes.rbegin(); it != r.classes.rend(); ++it) {
      Dataset p1 = f.pred, g1 = f.gt;
      std::erase_if(p1.annotations, [&](const auto& a) { return a.class_id != it->class_id; });
      std::erase_if(g1.annotations, [&](const auto& a) { return a.class_id != it->class_id; });
      const auto alone = evaluate(p1, g1);
      REQUIRE(alone.classes.size() == 1);
      REQUIRE(alone.classes[0].ap == it->ap);
      sum += alone.map;
    }
    REQUIRE(std::abs(sum / r.classes.size() - r.map) <= 1e-12);
  }
}
