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

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "instmix/pipeline.hpp"
#include "test_util.hpp"

using namespace instmix;

namespace {

const ToyDataset& toy(Domain d) {
  static const ToyDataset src = generate_dataset(ToySceneConfig{}, 8, Domain::kSource);
  static const ToyDataset tgt = generate_dataset(ToySceneConfig{}, 8, Domain::kTarget);
  return d == Domain::kSource ? src : tgt;
}

std::vector<SampleRef> refs(const ImageSet& set) {
  std::vector<SampleRef> out;
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    const auto& rec = set.dataset.images[i];
    SampleRef r{rec.id, rec.file_name, std::make_shared<const RgbImage>(set.images[i]), {}};
    for (const auto* a : set.dataset.annotations_for(rec.id)) r.annotations.push_back(*a);
    out.push_back(std::move(r));
  }
  return out;
}

PipelineConfig small_config() {
  PipelineConfig cfg;
  cfg.t_stage1 = 4;
  cfg.t_stage2 = 2;
  cfg.batch_size = 2;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Keeps the student unchanged.
class FrozenTrainer : public Trainer {
 public:
  ParameterSet train_step(const ParameterSet& student, std::span<const MixedSample>,
                          std::span<const MixedSample>) override {
    return student;
  }
};

struct Harness {
  PipelineConfig cfg = small_config();
  Palette palette = domain_palette(ToySceneConfig{}, Domain::kSource);
  MockPredictor teacher{palette, cfg.predictor};
  MockPredictor student{palette, cfg.predictor};
  MockTrainer trainer{cfg.learning_rate};
  Stage2State state{init_from(student.parameters()), student.parameters(), RarePool(10)};
  std::vector<SampleRef> src = refs(toy(Domain::kSource).set);
  std::vector<SampleRef> tgt = refs(toy(Domain::kTarget).set);

  Stage2Result step(std::size_t iter, std::span<const SampleRef> s, std::span<const SampleRef> t,
                    const Stage2Context& ctx, std::uint64_t seed, EventLog* log) {
    Rng rng(seed);
    return stage2_step(iter, teacher, student, trainer, state, s, t, ctx, rng, log);
  }
};

}  // namespace

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
  CHECK(hex_digest(0xabcULL) == "0000000000000abc");
}

TEST_CASE("pipeline config JSON round-trip and strictness") {
  PipelineConfig cfg;
  cfg.t_stage2 = 17;
  cfg.filter.tau = 0.8;
  cfg.mix.selection = DonorSelection::kRandomHalf;
  cfg.seed = 99;
  const auto text = pipeline_config_to_json(cfg);
  const auto back = parse_pipeline_config(text);
  CHECK(pipeline_config_to_json(back) == text);
  CHECK(back.grouping.size() == 2);
  CHECK(back.grouping[0].classes == human_cycle_group().classes);

  CHECK(parse_pipeline_config("{}").t_stage1 == 40000);
  CHECK(parse_pipeline_config(R"({"grouping": ["all"]})").grouping[0].classes.size() == 8);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"bogus": 1})"), ParseError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"filter": {"tau": "x"}})"), ParseError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"filter": {"tau": 1.5}})"), ValidationError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"batch_size": 0})"), ValidationError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"mix": {"selection": "most"}})"), ParseError);
  CHECK_THROWS_AS(
      parse_pipeline_config(R"({"grouping": [{"name": "a", "classes": ["car"]},
                                              {"name": "b", "classes": ["car"]}]})"),
      ValidationError);
  CHECK_THROWS_AS(parse_pipeline_config("{"), ParseError);
}

TEST_CASE("shipped pipeline config parses") {
  const auto cfg =
      load_pipeline_config(std::filesystem::path(INSTMIX_SOURCE_DIR) / "configs/pipeline.json");
  CHECK(cfg.filter.tau == 0.9);
  CHECK(cfg.ema.alpha == 0.999);
  CHECK(cfg.batch_size == 3);
}

TEST_CASE("seed override from the environment") {
  PipelineConfig cfg;
  ::unsetenv(kSeedEnvVar);
  CHECK_FALSE(apply_seed_override(cfg));
  CHECK(cfg.seed == 7);
  ::setenv(kSeedEnvVar, "12345", 1);
  CHECK(apply_seed_override(cfg));
  CHECK(cfg.seed == 12345);
  ::setenv(kSeedEnvVar, "12x", 1);
  CHECK_THROWS_AS(apply_seed_override(cfg), ValidationError);
  ::setenv(kSeedEnvVar, "-3", 1);
  CHECK_THROWS_AS(apply_seed_override(cfg), ValidationError);
  ::unsetenv(kSeedEnvVar);
}

TEST_CASE("shuffled stream visits every index once per pass") {
  ShuffledStream s(7, Rng(3));
  for (int pass = 0; pass < 5; ++pass) {
    std::set<std::size_t> seen;
    for (int i = 0; i < 7; ++i) seen.insert(s.next());
    CHECK(seen.size() == 7);
  }
  CHECK_THROWS_AS(ShuffledStream(0, Rng(1)), ValidationError);
}

TEST_CASE("stage 1 emits exactly t_stage1 batches") {
  const auto& src = toy(Domain::kSource).set;
  PipelineConfig cfg = small_config();
  cfg.t_stage1 = 0;
  CHECK(stage1_emit(src, cfg).empty());

  cfg.t_stage1 = 3334;
  cfg.batch_size = 3;
  const auto a = stage1_emit(src, cfg);
  const auto b = stage1_emit(src, cfg);
  REQUIRE(a.size() == 3334);
  std::map<long long, int> freq;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].iter == i + 1);
    CHECK(a[i].image_ids == b[i].image_ids);
    CHECK(a[i].image_ids.size() == 3);
    CHECK_FALSE(a[i].seg_loss.has_value());
    for (long long id : a[i].image_ids) ++freq[id];
  }
  // 10002 draws over 8 images.
  REQUIRE(freq.size() == 8);
  for (const auto& [id, n] : freq) CHECK(std::abs(n - 10002.0 / 8) <= 10002.0 / 8 * 0.05);

  cfg.seed = 8;
  const auto c = stage1_emit(src, cfg);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].image_ids != c[i].image_ids;
  CHECK(differs);
}

TEST_CASE("stage 1 reports a finite loss with a dense predictor") {
  const auto& src = toy(Domain::kSource).set;
  const MockPredictor pred(domain_palette(ToySceneConfig{}, Domain::kSource), {});
  const auto batches = stage1_emit(src, small_config(), &pred);
  REQUIRE(batches.size() == 4);
  for (const auto& b : batches) {
    REQUIRE(b.seg_loss.has_value());
    CHECK(std::isfinite(*b.seg_loss));
    CHECK(*b.seg_loss > 0);
  }
}

TEST_CASE("fit_palette recovers the rendering palette") {
  const Palette truth = domain_palette(ToySceneConfig{}, Domain::kSource);
  Palette blank;
  const Palette fit = fit_palette(toy(Domain::kSource).set, blank);
  std::set<ClassId> present;
  for (const auto& a : toy(Domain::kSource).set.dataset.annotations) present.insert(a.class_id);
  for (int c = 0; c < kNumClasses; ++c) {
    if (!present.count(ClassId(c + 1))) {
      CHECK(fit.classes[c] == blank.classes[c]);
      continue;
    }
    for (int ch = 0; ch < 3; ++ch) CHECK(std::abs(fit.classes[c][ch] - truth.classes[c][ch]) <= 1);
  }
  REQUIRE(fit.background.size() == 2);
  for (const Rgb& tone : truth.background) {
    bool found = false;
    for (const Rgb& f : fit.background) {
      found |= std::abs(f[0] - tone[0]) <= 2 && std::abs(f[1] - tone[1]) <= 2 &&
               std::abs(f[2] - tone[2]) <= 2;
    }
    CHECK(found);
  }
}

TEST_CASE("palette parameters round-trip") {
  const Palette p = domain_palette(ToySceneConfig{}, Domain::kTarget);
  const Palette back = palette_from_parameters(palette_parameters(p));
  CHECK(back.classes == p.classes);
  CHECK(back.background == p.background);
  ParameterSet bad;
  bad.set("palette.classes", {1, 2, 3});
  bad.set("palette.background", {});
  CHECK_THROWS_AS(palette_from_parameters(bad), SchemaError);
  CHECK_THROWS_AS(palette_from_parameters(ParameterSet{}), SchemaError);
}

TEST_CASE("mock trainer moves class colours toward observed colours") {
  const Palette p = domain_palette(ToySceneConfig{}, Domain::kSource);
  MixedSample s;
  s.image = RgbImage(4, 4, {100, 100, 100});
  s.annotations.push_back(
      make_annotation(1, 1, ClassId(3), box_mask(4, 4, BBox{0, 0, 2, 2})));
  MockTrainer t(0.5);
  const auto out = palette_from_parameters(
      t.train_step(palette_parameters(p), std::span<const MixedSample>(&s, 1), {}));
  for (int ch = 0; ch < 3; ++ch) {
    CHECK(out.classes[2][ch] == std::lround((p.classes[2][ch] + 100) / 2.0));
  }
  CHECK(out.classes[0] == p.classes[0]);
}

TEST_CASE("tau above every confidence leaves T2S without pseudo-labels") {
  Harness h;
  h.cfg.filter.tau = 1.0;
  const Stage2Context ctx{&h.cfg, std::nullopt, std::nullopt};
  EventLog log;
  const auto res = h.step(1, std::span(h.src).first(2), std::span(h.tgt).first(2), ctx, 5, &log);
  REQUIRE(res.t2s.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    // No target labels: nothing pasted into the source recipient.
    CHECK(std::all_of(res.t2s[k].provenance.begin(), res.t2s[k].provenance.end(),
                      [](auto v) { return v == 0; }));
    CHECK(res.t2s[k].annotations.size() == h.src[k].annotations.size());
    // S2T keeps only pasted source instances; the target brought none.
    for (auto o : res.s2t[k].origins) CHECK(o == LabelOrigin::kDonor);
    CHECK_FALSE(res.s2t[k].annotations.empty());
  }
  CHECK(log.events().size() == 10);  // 3 + 2 pairs x 2 mixes + 3
}

TEST_CASE("identical teacher and student stay fixed under EMA") {
  Harness h;
  FrozenTrainer frozen;
  const Stage2Context ctx{&h.cfg, std::nullopt, std::nullopt};
  const ParameterSet before = h.state.teacher;
  Rng rng(1);
  stage2_step(1, h.teacher, h.student, frozen, h.state, std::span(h.src).first(2),
              std::span(h.tgt).first(2), ctx, rng);
  CHECK(h.state.teacher == before);
  CHECK(h.state.student == before);
}

TEST_CASE("the teacher trails the student by the EMA rate") {
  Harness h;
  const Stage2Context ctx{&h.cfg, std::nullopt, std::nullopt};
  const ParameterSet t0 = h.state.teacher;
  h.step(1, std::span(h.src).first(2), std::span(h.tgt).first(2), ctx, 1, nullptr);
  const auto& t1 = h.state.teacher.get("palette.classes");
  const auto& s1 = h.state.student.get("palette.classes");
  const auto& old = t0.get("palette.classes");
  bool moved = false;
  for (std::size_t i = 0; i < t1.size(); ++i) {
    CHECK(t1[i] == doctest::Approx(0.999 * old[i] + 0.001 * s1[i]).epsilon(1e-12));
    moved |= s1[i] != old[i];
  }
  CHECK(moved);
}

TEST_CASE("schema mismatch between teacher and student is rejected") {
  Harness h;
  const Stage2Context ctx{&h.cfg, std::nullopt, std::nullopt};
  h.state.teacher.set("extra", {1.0});
  CHECK_THROWS_AS(h.step(1, std::span(h.src).first(1), std::span(h.tgt).first(1), ctx, 1, nullptr),
                  SchemaError);
  Harness h2;
  h2.state.student.set("palette.background", {1, 2, 3});
  CHECK_THROWS_AS(
      h2.step(1, std::span(h2.src).first(1), std::span(h2.tgt).first(1), ctx, 1, nullptr),
      SchemaError);
  CHECK_THROWS_AS(h.step(1, std::span(h.src).first(2), std::span(h.tgt).first(1), ctx, 1, nullptr),
                  ValidationError);
}

TEST_CASE("stage 2 step is deterministic for a fixed seed") {
  Harness a, b;
  const Stage2Context ctx{&a.cfg, human_cycle_group(), std::nullopt};
  EventLog la, lb;
  for (std::size_t it = 1; it <= 2; ++it) {
    a.step(it, std::span(a.src).first(3), std::span(a.tgt).first(3), ctx, mix_seed(7, it), &la);
    b.step(it, std::span(b.src).first(3), std::span(b.tgt).first(3), ctx, mix_seed(7, it), &lb);
  }
  CHECK(la.to_jsonl() == lb.to_jsonl());
  CHECK(a.state.teacher == b.state.teacher);
}

TEST_CASE("stage 2 events follow the fixed order") {
  Harness h;
  // Rare class: the first class of the first source image; pick one donor
  // that has it and one that lacks it, twice, so the pool can inject.
  const ClassId rare = h.src[0].annotations.at(0).class_id;
  auto has = [&](const SampleRef& r) {
    return std::any_of(r.annotations.begin(), r.annotations.end(),
                       [&](const auto& a) { return a.class_id == rare; });
  };
  std::vector<SampleRef> with, without;
  for (const auto& r : h.src) (has(r) ? with : without).push_back(r);
  REQUIRE(with.size() >= 1);
  REQUIRE(without.size() >= 1);
  const std::vector<SampleRef> batch{with[0], with[0], without[0]};
  const Stage2Context ctx{&h.cfg, all_classes_group(), rare};
  EventLog log;
  h.step(1, batch, std::span(h.tgt).first(3), ctx, 11, &log);

  std::vector<std::string> names;
  for (const auto& e : log.events()) {
    names.push_back(e.event);
    CHECK(e.iter == 1);
    CHECK(e.digest.size() == 16);
    if (e.event == "rare_inject" || e.event == "pool_offer") {
      REQUIRE(e.direction.has_value());
      CHECK(*e.direction == Direction::kS2T);
    }
  }
  const std::vector<std::string> expected{
      "teacher_inference", "filter", "color_transfer", "pool_offer", "pool_offer", "pool_offer",
      "rare_inject",       "mix",    "mix",            "mix",        "mix",        "mix",
      "mix",               "loss",   "student_update", "ema_update"};
  CHECK(names == expected);
  CHECK(h.state.pool.size() == 2);
}

TEST_CASE("no injection when every donor has the rare class") {
  Harness h;
  const ClassId rare = h.src[0].annotations.at(0).class_id;
  const std::vector<SampleRef> batch{h.src[0], h.src[0], h.src[0]};
  const Stage2Context ctx{&h.cfg, all_classes_group(), rare};
  EventLog log;
  h.step(1, batch, std::span(h.tgt).first(3), ctx, 11, &log);
  for (const auto& e : log.events()) CHECK(e.event != "rare_inject");
}

TEST_CASE("stage 2 samples never leave their group") {
  Harness h;
  for (const auto& group : {human_cycle_group(), vehicle_group()}) {
    MockPredictorConfig pc = h.cfg.predictor;
    pc.group = group;
    MockPredictor teacher(h.palette, pc), student(h.palette, pc);
    const Stage2Context ctx{&h.cfg, group, std::nullopt};
    for (std::size_t it = 1; it <= 3; ++it) {
      Rng rng(it);
      const auto res = stage2_step(it, teacher, student, h.trainer, h.state,
                                   std::span(h.src).subspan(it, 2), std::span(h.tgt).subspan(it, 2),
                                   ctx, rng);
      for (const auto* side : {&res.s2t, &res.t2s}) {
        for (const auto& s : *side) {
          for (const auto& a : s.annotations) CHECK(group.contains(a.class_id));
        }
      }
    }
  }
}

TEST_CASE("pseudo dataset equals filter and fuse per image") {
  const auto& tgt = toy(Domain::kTarget).set;
  PipelineConfig cfg;
  const Palette pal = domain_palette(ToySceneConfig{}, Domain::kSource);
  MockPredictorConfig ca, cb;
  ca.group = human_cycle_group();
  cb.group = vehicle_group();
  MockPredictor pa(pal, ca), pb(pal, cb);
  const Dataset doc =
      export_pseudo_dataset(tgt, pa, pb, human_cycle_group(), vehicle_group(), cfg);
  CHECK(doc.images == tgt.dataset.images);

  std::size_t expected = 0;
  Rng rng(0);
  for (std::size_t i = 0; i < tgt.images.size(); ++i) {
    const auto& rec = tgt.dataset.images[i];
    const auto a = filter_predictions(pa.predict(rec, tgt.images[i], rng), cfg.filter);
    const auto b = filter_predictions(pb.predict(rec, tgt.images[i], rng), cfg.filter);
    const auto fused = fuse(a, b, human_cycle_group(), vehicle_group(), cfg.filter);
    const auto got = doc.annotations_for(rec.id);
    REQUIRE(got.size() == fused.size());
    for (std::size_t k = 0; k < fused.size(); ++k) {
      CHECK(got[k]->mask == fused[k].mask);
      CHECK(got[k]->class_id == fused[k].class_id);
      CHECK(*got[k]->score >= cfg.filter.tau);
    }
    expected += fused.size();
  }
  CHECK(doc.annotations.size() == expected);
  CHECK(expected > 0);

  // Replaying the document through file predictors reproduces it.
  Dataset only_a = doc, only_b = doc;
  std::erase_if(only_a.annotations, [](const auto& a) { return *a.source_group != "human-cycle"; });
  std::erase_if(only_b.annotations, [](const auto& a) { return *a.source_group != "vehicle"; });
  FilePredictor fa(only_a), fb(only_b);
  CHECK(export_pseudo_dataset(tgt, fa, fb, human_cycle_group(), vehicle_group(), cfg) == doc);

  ImageSet empty;
  CHECK(export_pseudo_dataset(empty, pa, pb, human_cycle_group(), vehicle_group(), cfg)
            .annotations.empty());
  CHECK_THROWS_AS(export_pseudo_dataset(tgt, pa, pb, vehicle_group(), all_classes_group(), cfg),
                  ValidationError);
}

TEST_CASE("stage 2 simulation writes identical outputs for identical seeds") {
  testing::TempDir d1("sim"), d2("sim");
  PipelineConfig cfg = small_config();
  const auto s1 = run_stage2_sim(toy(Domain::kSource).set, toy(Domain::kTarget).set, cfg, d1.path());
  run_stage2_sim(toy(Domain::kSource).set, toy(Domain::kTarget).set, cfg, d2.path());
  REQUIRE(s1.streams.size() == 2);
  CHECK(s1.streams[0].group == "human-cycle");
  CHECK(s1.streams[0].s2t_samples == cfg.t_stage2 * cfg.batch_size);

  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(d1.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), d1.path());
    CHECK(slurp(e.path()) == slurp(d2.path() / rel));
    ++files;
  }
  CHECK(files > 10);
  for (const char* f : {"stage1.jsonl", "vehicle/events.jsonl", "vehicle/teacher.bin",
                        "human-cycle/s2t/annotations.json", "human-cycle/pool.json"}) {
    CHECK(std::filesystem::exists(d1.path() / f));
  }
  // The written mixed sets load back and validate.
  const auto s2t = load_image_set(d1.path() / "vehicle" / "s2t");
  CHECK(s2t.images.size() == cfg.t_stage2 * cfg.batch_size);
  for (const auto& a : s2t.dataset.annotations) CHECK(vehicle_group().contains(a.class_id));
  CHECK(load_parameters(d1.path() / "vehicle" / "teacher.bin").size() == 2);

  testing::TempDir d3("sim");
  cfg.seed = 8;
  run_stage2_sim(toy(Domain::kSource).set, toy(Domain::kTarget).set, cfg, d3.path());
  CHECK(slurp(d1.path() / "vehicle/events.jsonl") != slurp(d3.path() / "vehicle/events.jsonl"));
}

TEST_CASE("domain alignment matches pooled statistics") {
  const auto& src = toy(Domain::kSource).set;
  const auto& tgt = toy(Domain::kTarget).set;
  const ImageSet aligned = align_to_domain(tgt, src);
  CHECK(aligned.dataset == tgt.dataset);
  std::vector<LabImage> a, s;
  for (const auto& img : aligned.images) a.push_back(rgb_to_lab(img));
  for (const auto& img : src.images) s.push_back(rgb_to_lab(img));
  const auto sa = pooled_channel_stats(a), ss = pooled_channel_stats(s);
  // 8-bit requantisation and gamut clamping leave a small residual.
  for (int ch = 0; ch < 3; ++ch) {
    CHECK(std::abs(sa.mean[ch] - ss.mean[ch]) < 1.0);
    CHECK(std::abs(sa.stddev[ch] - ss.stddev[ch]) < 1.0);
  }
  CHECK_THROWS_AS(align_to_domain(ImageSet{}, src), ValidationError);
}
