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

#include "instmix/pipeline.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>

#include "json.hpp"

namespace instmix {

namespace {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

[[noreturn]] void config_fail(std::string_view origin, const std::string& msg) {
  throw ParseError(std::string(origin) + ": " + msg);
}

void reject_unknown(const Json& obj, std::initializer_list<std::string_view> keys,
                    std::string_view origin, const std::string& where) {
  if (!obj.is_object()) config_fail(origin, where + ": expected an object");
  for (const auto& [k, v] : obj.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      config_fail(origin, where + ": unknown field '" + k + "'");
    }
  }
}

template <typename T>
void read(const Json& obj, const char* key, T& out, std::string_view origin,
          const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj[key].get<T>();
  } catch (const Json::exception&) {
    config_fail(origin, where + "." + key + ": wrong type");
  }
}

std::string_view selection_name(DonorSelection s) {
  return s == DonorSelection::kAllInstances ? "all" : "random-half";
}

}  // namespace

void PipelineConfig::validate() const {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  filter.validate();
  ema.validate();
  mix.validate();
  loss.validate();
  predictor.validate();
  if (grouping.empty()) throw ValidationError("grouping needs at least one group");
  validate_grouping(grouping);
  if (pool_capacity < 1) throw ValidationError("pool_capacity must be >= 1");
  if (!(learning_rate >= 0 && learning_rate <= 1)) {
    throw ValidationError("learning_rate must lie in [0,1]");
  }
}

PipelineConfig parse_pipeline_config(std::string_view json_text, std::string_view origin) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    config_fail(origin, std::string("malformed JSON: ") + e.what());
  }
  reject_unknown(j,
                 {"t_stage1", "t_stage2", "batch_size", "filter", "ema", "mix", "loss", "grouping",
                  "pool_capacity", "predictor", "learning_rate", "seed"},
                 origin, "config");
  PipelineConfig cfg;
  read(j, "t_stage1", cfg.t_stage1, origin, "config");
  read(j, "t_stage2", cfg.t_stage2, origin, "config");
  read(j, "batch_size", cfg.batch_size, origin, "config");
  read(j, "pool_capacity", cfg.pool_capacity, origin, "config");
  read(j, "learning_rate", cfg.learning_rate, origin, "config");
  read(j, "seed", cfg.seed, origin, "config");
  if (j.contains("filter")) {
    const Json& f = j["filter"];
    reject_unknown(f, {"tau", "fuse_iou"}, origin, "filter");
    read(f, "tau", cfg.filter.tau, origin, "filter");
    read(f, "fuse_iou", cfg.filter.fuse_iou, origin, "filter");
  }
  if (j.contains("ema")) {
    reject_unknown(j["ema"], {"alpha"}, origin, "ema");
    read(j["ema"], "alpha", cfg.ema.alpha, origin, "ema");
  }
  if (j.contains("mix")) {
    const Json& m = j["mix"];
    reject_unknown(m, {"area_threshold", "patch_margin", "min_remnant_area", "selection"}, origin,
                   "mix");
    read(m, "area_threshold", cfg.mix.area_threshold, origin, "mix");
    read(m, "patch_margin", cfg.mix.patch_margin, origin, "mix");
    read(m, "min_remnant_area", cfg.mix.min_remnant_area, origin, "mix");
    std::string sel(selection_name(cfg.mix.selection));
    read(m, "selection", sel, origin, "mix");
    if (sel == "all") {
      cfg.mix.selection = DonorSelection::kAllInstances;
    } else if (sel == "random-half") {
      cfg.mix.selection = DonorSelection::kRandomHalf;
    } else {
      config_fail(origin, "mix.selection: expected 'all' or 'random-half'");
    }
  }
  if (j.contains("loss")) {
    const Json& l = j["loss"];
    reject_unknown(l, {"ce", "bce", "dice", "mix_s2t", "mix_t2s"}, origin, "loss");
    read(l, "ce", cfg.loss.ce, origin, "loss");
    read(l, "bce", cfg.loss.bce, origin, "loss");
    read(l, "dice", cfg.loss.dice, origin, "loss");
    read(l, "mix_s2t", cfg.loss.mix_s2t, origin, "loss");
    read(l, "mix_t2s", cfg.loss.mix_t2s, origin, "loss");
  }
  if (j.contains("grouping")) {
    const Json& g = j["grouping"];
    if (!g.is_array()) config_fail(origin, "grouping: expected an array");
    cfg.grouping.clear();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::string where = "grouping[" + std::to_string(i) + "]";
      if (g[i].is_string()) {
        try {
          cfg.grouping.push_back(group_by_name(g[i].get<std::string>()));
        } catch (const ValidationError& e) {
          config_fail(origin, where + ": " + e.what());
        }
        continue;
      }
      reject_unknown(g[i], {"name", "classes"}, origin, where);
      CategoryGroup group;
      read(g[i], "name", group.name, origin, where);
      std::vector<std::string> names;
      read(g[i], "classes", names, origin, where);
      for (const auto& n : names) {
        const auto id = class_from_name(n);
        if (!id) config_fail(origin, where + ": unknown class '" + n + "'");
        group.classes.push_back(*id);
      }
      cfg.grouping.push_back(std::move(group));
    }
  }
  if (j.contains("predictor")) {
    const Json& p = j["predictor"];
    reject_unknown(p,
                   {"accept_radius", "min_component_area", "mask_conf_scale", "class_conf_scale",
                    "noise"},
                   origin, "predictor");
    read(p, "accept_radius", cfg.predictor.accept_radius, origin, "predictor");
    read(p, "min_component_area", cfg.predictor.min_component_area, origin, "predictor");
    read(p, "mask_conf_scale", cfg.predictor.mask_conf_scale, origin, "predictor");
    read(p, "class_conf_scale", cfg.predictor.class_conf_scale, origin, "predictor");
    read(p, "noise", cfg.predictor.noise, origin, "predictor");
  }
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(origin) + ": " + e.what());
  }
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_pipeline_config(text, path.string());
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
  OrderedJson j;
  j["t_stage1"] = cfg.t_stage1;
  j["t_stage2"] = cfg.t_stage2;
  j["batch_size"] = cfg.batch_size;
  j["filter"] = {{"tau", cfg.filter.tau}, {"fuse_iou", cfg.filter.fuse_iou}};
  j["ema"] = {{"alpha", cfg.ema.alpha}};
  j["mix"] = {{"area_threshold", cfg.mix.area_threshold},
              {"patch_margin", cfg.mix.patch_margin},
              {"min_remnant_area", cfg.mix.min_remnant_area},
              {"selection", selection_name(cfg.mix.selection)}};
  j["loss"] = {{"ce", cfg.loss.ce},
               {"bce", cfg.loss.bce},
               {"dice", cfg.loss.dice},
               {"mix_s2t", cfg.loss.mix_s2t},
               {"mix_t2s", cfg.loss.mix_t2s}};
  OrderedJson groups = OrderedJson::array();
  for (const auto& g : cfg.grouping) {
    std::vector<std::string> names;
    for (ClassId c : g.classes) names.emplace_back(class_name(c));
    groups.push_back({{"name", g.name}, {"classes", names}});
  }
  j["grouping"] = groups;
  j["pool_capacity"] = cfg.pool_capacity;
  j["predictor"] = {{"accept_radius", cfg.predictor.accept_radius},
                    {"min_component_area", cfg.predictor.min_component_area},
                    {"mask_conf_scale", cfg.predictor.mask_conf_scale},
                    {"class_conf_scale", cfg.predictor.class_conf_scale},
                    {"noise", cfg.predictor.noise}};
  j["learning_rate"] = cfg.learning_rate;
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

bool apply_seed_override(PipelineConfig& cfg) {
  const char* env = std::getenv(kSeedEnvVar);
  if (!env || !*env) return false;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno != 0 || *end != '\0' || env[0] == '-') {
    throw ValidationError(std::string(kSeedEnvVar) + " must be a non-negative integer, got '" +
                          env + "'");
  }
  cfg.seed = v;
  return true;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex_digest(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string_view bytes_of(const std::vector<std::uint8_t>& v) {
  return {reinterpret_cast<const char*>(v.data()), v.size()};
}

template <typename T>
std::uint64_t fold(std::uint64_t h, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  return fnv1a({buf, sizeof(T)}, h);
}

std::uint64_t fold_mask(std::uint64_t h, const BinaryMask& m) {
  h = fold(h, m.width());
  h = fold(h, m.height());
  return fnv1a(bytes_of(m.bits()), h);
}

std::uint64_t fold_image(std::uint64_t h, const RgbImage& img) {
  h = fold(h, img.width());
  h = fold(h, img.height());
  return fnv1a(bytes_of(img.data()), h);
}

std::uint64_t fold_annotation(std::uint64_t h, const InstanceAnnotation& a) {
  h = fold(h, a.id);
  h = fold(h, a.image_id);
  h = fold(h, a.class_id.value());
  h = fold(h, a.score.value_or(-1.0));
  return fold_mask(h, a.mask);
}

std::uint64_t fold_prediction(std::uint64_t h, const Prediction& p) {
  h = fold(h, p.class_id.value());
  h = fold(h, p.mask_conf);
  h = fold(h, p.class_conf);
  return fold_mask(h, p.mask);
}

std::uint64_t digest_sample(const MixedSample& s) {
  std::uint64_t h = fnv1a({});
  h = fold_image(h, s.image);
  for (const auto& a : s.annotations) h = fold_annotation(h, a);
  for (auto o : s.origins) h = fold(h, static_cast<int>(o));
  h = fnv1a(bytes_of(s.provenance), h);
  return fold(h, static_cast<int>(s.direction));
}

constexpr const char* kClassParam = "palette.classes";
constexpr const char* kBackgroundParam = "palette.background";

}  // namespace

ParameterSet palette_parameters(const Palette& palette) {
  std::vector<double> cls, bg;
  for (const Rgb& c : palette.classes) cls.insert(cls.end(), c.begin(), c.end());
  for (const Rgb& c : palette.background) bg.insert(bg.end(), c.begin(), c.end());
  ParameterSet p;
  p.set(kClassParam, std::move(cls));
  p.set(kBackgroundParam, std::move(bg));
  return p;
}

Palette palette_from_parameters(const ParameterSet& params) {
  const auto& cls = params.get(kClassParam);
  const auto& bg = params.get(kBackgroundParam);
  if (cls.size() != 3 * kNumClasses || bg.size() % 3 != 0) {
    throw SchemaError("palette parameters have the wrong lengths");
  }
  auto to_byte = [](double v) {
    return static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
  };
  Palette p;
  for (int c = 0; c < kNumClasses; ++c) {
    p.classes[c] = {to_byte(cls[3 * c]), to_byte(cls[3 * c + 1]), to_byte(cls[3 * c + 2])};
  }
  for (std::size_t i = 0; i < bg.size(); i += 3) {
    p.background.push_back({to_byte(bg[i]), to_byte(bg[i + 1]), to_byte(bg[i + 2])});
  }
  return p;
}

Palette fit_palette(const ImageSet& labelled, const Palette& fallback,
                    std::size_t background_tones) {
  std::array<std::array<double, 3>, kNumClasses> sum{};
  std::array<std::size_t, kNumClasses> count{};
  // Background: 6-bit-per-channel colour histogram of unlabelled pixels.
  std::map<std::uint32_t, std::size_t> hist;
  std::vector<std::pair<Rgb, bool>> unlabelled_sample;
  for (std::size_t i = 0; i < labelled.images.size(); ++i) {
    const RgbImage& img = labelled.images[i];
    const auto anns = labelled.dataset.annotations_for(labelled.dataset.images[i].id);
    BinaryMask any(img.width(), img.height());
    for (const auto* a : anns) {
      const int c = static_cast<int>(a->class_id.index());
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
          if (!a->mask.at(x, y)) continue;
          any.set(x, y);
          const Rgb px = img.at(x, y);
          for (int ch = 0; ch < 3; ++ch) sum[c][ch] += px[ch];
          ++count[c];
        }
    }
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        if (any.at(x, y)) continue;
        const Rgb px = img.at(x, y);
        ++hist[((px[0] >> 2) << 12) | ((px[1] >> 2) << 6) | (px[2] >> 2)];
      }
  }
  Palette out = fallback;
  for (int c = 0; c < kNumClasses; ++c) {
    if (count[c] == 0) continue;
    for (int ch = 0; ch < 3; ++ch) {
      out.classes[c][ch] = static_cast<std::uint8_t>(std::lround(sum[c][ch] / count[c]));
    }
  }

  // Greedy modes: the most populated bins at least 24 levels apart; each tone
  // is the count-weighted mean of the bins within 12 levels of its mode.
  auto centre = [](std::uint32_t key) {
    return std::array<double, 3>{((key >> 12) & 63) * 4.0 + 1.5, ((key >> 6) & 63) * 4.0 + 1.5,
                                 (key & 63) * 4.0 + 1.5};
  };
  auto dist = [](const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return std::max({std::abs(a[0] - b[0]), std::abs(a[1] - b[1]), std::abs(a[2] - b[2])});
  };
  std::vector<std::pair<std::size_t, std::uint32_t>> bins;
  for (const auto& [k, n] : hist) bins.push_back({n, k});
  std::sort(bins.begin(), bins.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::array<double, 3>> modes;
  for (const auto& [n, k] : bins) {
    if (modes.size() >= background_tones) break;
    const auto c = centre(k);
    if (std::all_of(modes.begin(), modes.end(), [&](const auto& m) { return dist(m, c) >= 24; })) {
      modes.push_back(c);
    }
  }
  if (!modes.empty()) {
    out.background.clear();
    for (const auto& m : modes) {
      std::array<double, 3> acc{};
      double total = 0;
      for (const auto& [n, k] : bins) {
        const auto c = centre(k);
        if (dist(c, m) > 12) continue;
        for (int ch = 0; ch < 3; ++ch) acc[ch] += c[ch] * static_cast<double>(n);
        total += static_cast<double>(n);
      }
      Rgb tone;
      for (int ch = 0; ch < 3; ++ch) {
        tone[ch] = static_cast<std::uint8_t>(std::clamp<long>(std::lround(acc[ch] / total - 1.5), 0, 255));
      }
      out.background.push_back(tone);
    }
  }
  return out;
}

MockPredictor::MockPredictor(const Palette& palette, MockPredictorConfig cfg)
    : params_(palette_parameters(palette)), cfg_(std::move(cfg)) {
  cfg_.validate();
}

void MockPredictor::set_parameters(const ParameterSet& params) {
  palette_from_parameters(params);
  params_ = params;
}

Palette MockPredictor::palette() const { return palette_from_parameters(params_); }

std::vector<Prediction> MockPredictor::predict(const ImageRecord& record, const RgbImage& image,
                                               Rng& rng) {
  (void)record;
  return mock_predict(image, palette(), cfg_, rng);
}

std::optional<std::vector<LossPair>> MockPredictor::dense_pairs(
    const RgbImage& image, std::span<const InstanceAnnotation> labels) const {
  if (labels.empty()) return std::vector<LossPair>{};
  const Palette pal = palette();
  std::array<Lab, kNumClasses> class_lab;
  for (int c = 0; c < kNumClasses; ++c) class_lab[c] = srgb_to_lab(pal.classes[c]);
  const LabImage lab = rgb_to_lab(image);
  std::vector<LossPair> pairs;
  for (const auto& a : labels) {
    if (a.mask.width() != image.width() || a.mask.height() != image.height()) {
      throw DimensionError("label mask does not match the image");
    }
    const Lab& own = class_lab[a.class_id.index()];
    DenseMaskPred pred{image.width(), image.height(), {}};
    pred.probs.reserve(lab.pixels.size());
    for (const Lab& px : lab.pixels) {
      const double z = (delta_e(px, own) - cfg_.accept_radius) / 4.0;
      pred.probs.push_back(1.0 / (1.0 + std::exp(std::clamp(z, -50.0, 50.0))));
    }
    std::array<double, kNumClasses> mean_d{};
    std::size_t n = 0;
    for (std::size_t i = 0; i < lab.pixels.size(); ++i) {
      if (!a.mask.bits()[i]) continue;
      for (int c = 0; c < kNumClasses; ++c) mean_d[c] += delta_e(lab.pixels[i], class_lab[c]);
      ++n;
    }
    std::vector<double> logits(kNumClasses);
    for (int c = 0; c < kNumClasses; ++c) {
      logits[c] = -(n ? mean_d[c] / static_cast<double>(n) : 0.0) / cfg_.class_conf_scale;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (double& l : logits) z += (l = std::exp(l - top));
    for (double& l : logits) l /= z;
    pairs.push_back({std::move(pred), std::move(logits), a.mask, a.class_id});
  }
  return pairs;
}

FilePredictor::FilePredictor(Dataset predictions) : doc_(std::move(predictions)) {
  for (const auto& a : doc_.annotations) from_annotation(a);
}

std::vector<Prediction> FilePredictor::predict(const ImageRecord& record, const RgbImage& image,
                                               Rng& rng) {
  (void)rng;
  std::vector<Prediction> out;
  for (const auto* a : doc_.annotations_for(record.id)) {
    if (a->mask.width() != image.width() || a->mask.height() != image.height()) {
      throw DimensionError("prediction " + std::to_string(a->id) + " does not match image " +
                           std::to_string(record.id));
    }
    out.push_back(from_annotation(*a));
  }
  return out;
}

ParameterSet MockTrainer::train_step(const ParameterSet& student, std::span<const MixedSample> s2t,
                                     std::span<const MixedSample> t2s) {
  std::vector<double> cls = student.get(kClassParam);
  std::array<std::array<double, 3>, kNumClasses> sum{};
  std::array<std::size_t, kNumClasses> count{};
  for (auto batch : {s2t, t2s}) {
    for (const auto& s : batch) {
      for (const auto& a : s.annotations) {
        const int c = static_cast<int>(a.class_id.index());
        for (int y = 0; y < s.image.height(); ++y)
          for (int x = 0; x < s.image.width(); ++x) {
            if (!a.mask.at(x, y)) continue;
            const Rgb px = s.image.at(x, y);
            for (int ch = 0; ch < 3; ++ch) sum[c][ch] += px[ch];
            ++count[c];
          }
      }
    }
  }
  for (int c = 0; c < kNumClasses; ++c) {
    if (count[c] == 0) continue;
    for (int ch = 0; ch < 3; ++ch) {
      double& v = cls[3 * c + ch];
      v += learning_rate_ * (sum[c][ch] / static_cast<double>(count[c]) - v);
    }
  }
  ParameterSet out = student;
  out.set(kClassParam, std::move(cls));
  return out;
}

ShuffledStream::ShuffledStream(std::size_t n, Rng rng) : n_(n), rng_(std::move(rng)), pos_(n) {
  if (n == 0) throw ValidationError("cannot draw from an empty image set");
  order_.resize(n);
}

std::size_t ShuffledStream::next() {
  if (pos_ == n_) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    for (std::size_t i = n_; i > 1; --i) std::swap(order_[i - 1], order_[rng_.uniform_index(i)]);
    pos_ = 0;
  }
  return order_[pos_++];
}

std::vector<Stage1Batch> stage1_emit(const ImageSet& source, const PipelineConfig& cfg,
                                     const Predictor* predictor) {
  cfg.validate();
  if (source.dataset.images.empty()) throw ValidationError("stage 1 needs a non-empty source set");
  validate_dataset(source.dataset);
  std::vector<Stage1Batch> out;
  if (cfg.t_stage1 == 0) return out;
  ShuffledStream stream(source.dataset.images.size(), Rng(mix_seed(cfg.seed, 0x57a6e1)));
  out.reserve(cfg.t_stage1);
  for (std::size_t it = 1; it <= cfg.t_stage1; ++it) {
    Stage1Batch b{it, {}, std::nullopt};
    std::vector<LossPair> pairs;
    bool dense = predictor != nullptr;
    for (std::size_t k = 0; k < cfg.batch_size; ++k) {
      const std::size_t idx = stream.next();
      const long long id = source.dataset.images[idx].id;
      b.image_ids.push_back(id);
      if (!dense) continue;
      std::vector<InstanceAnnotation> labels;
      for (const auto* a : source.dataset.annotations_for(id)) labels.push_back(*a);
      auto p = predictor->dense_pairs(source.images[idx], labels);
      if (!p) {
        dense = false;
        continue;
      }
      for (auto& pair : *p) pairs.push_back(std::move(pair));
    }
    if (dense && !pairs.empty()) b.seg_loss = seg_loss(pairs, cfg.loss);
    out.push_back(std::move(b));
  }
  return out;
}

void EventLog::record(std::size_t iter, std::string event, std::string digest,
                      std::optional<Direction> direction) {
  events_.push_back({iter, std::move(event), std::move(digest), direction});
}

std::string EventLog::to_jsonl() const {
  std::string out;
  for (const auto& e : events_) {
    OrderedJson j;
    j["iter"] = e.iter;
    j["event"] = e.event;
    if (e.direction) j["direction"] = to_string(*e.direction);
    j["digest"] = e.digest;
    out += j.dump() + "\n";
  }
  return out;
}

namespace {

void log_event(EventLog* log, std::size_t iter, const char* event, std::uint64_t digest,
               std::optional<Direction> dir = std::nullopt) {
  if (log) log->record(iter, event, hex_digest(digest), dir);
}

void check_schema(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) throw SchemaError("teacher and student parameter sets differ");
  for (const auto& [name, v] : a.entries()) {
    if (!b.contains(name) || b.get(name).size() != v.size()) {
      throw SchemaError("teacher and student disagree on parameter '" + name + "'");
    }
  }
}

bool has_class(std::span<const InstanceAnnotation> anns, ClassId c) {
  return std::any_of(anns.begin(), anns.end(), [&](const auto& a) { return a.class_id == c; });
}

double direction_loss(const Predictor& student, std::span<const MixedSample> samples,
                      const LossWeights& weights) {
  std::vector<LossPair> pairs;
  for (const auto& s : samples) {
    auto p = student.dense_pairs(s.image, s.annotations);
    if (!p) return 0.0;
    for (auto& pair : *p) pairs.push_back(std::move(pair));
  }
  return pairs.empty() ? 0.0 : seg_loss(pairs, weights);
}

}  // namespace

Stage2Result stage2_step(std::size_t iter, Predictor& teacher, Predictor& student,
                         Trainer& trainer, Stage2State& state,
                         std::span<const SampleRef> source_batch,
                         std::span<const SampleRef> target_batch, const Stage2Context& ctx,
                         Rng& rng, EventLog* log) {
  if (!ctx.cfg) throw ValidationError("stage2_step needs a pipeline config");
  const PipelineConfig& cfg = *ctx.cfg;
  if (source_batch.size() != target_batch.size()) {
    throw ValidationError("source and target batches differ in size");
  }
  check_schema(state.teacher, state.student);
  Rng predict_rng = rng.fork(1);
  Rng inject_rng = rng.fork(2);
  Rng mix_rng = rng.fork(3);
  const std::size_t n = target_batch.size();

  // 1. Teacher inference on the target batch.
  teacher.set_parameters(state.teacher);
  std::vector<std::vector<Prediction>> raw(n);
  std::uint64_t h = fnv1a({});
  for (std::size_t k = 0; k < n; ++k) {
    const auto& t = target_batch[k];
    const ImageRecord rec{t.image_id, t.image->width(), t.image->height(), t.file_name};
    for (auto& p : teacher.predict(rec, *t.image, predict_rng)) {
      if (ctx.group && !ctx.group->contains(p.class_id)) continue;
      h = fold_prediction(h, p);
      raw[k].push_back(std::move(p));
    }
    h = fold(h, k);
  }
  log_event(log, iter, "teacher_inference", h);

  // 2. Confidence filter; survivors become pseudo-labels.
  std::vector<std::vector<InstanceAnnotation>> pseudo(n);
  h = fnv1a({});
  for (std::size_t k = 0; k < n; ++k) {
    long long id = 1;
    for (const auto& p : filter_predictions(raw[k], cfg.filter)) {
      pseudo[k].push_back(to_annotation(p, id++, target_batch[k].image_id));
      h = fold_annotation(h, pseudo[k].back());
    }
    h = fold(h, k);
  }
  log_event(log, iter, "filter", h);

  // 3. Source images take on the appearance of their paired target.
  std::vector<ChannelStats> target_stats(n);
  std::vector<RgbImage> aligned(n);
  h = fnv1a({});
  for (std::size_t k = 0; k < n; ++k) {
    target_stats[k] = channel_stats(rgb_to_lab(*target_batch[k].image));
    aligned[k] = color_transfer_rgb(*source_batch[k].image, target_stats[k]);
    h = fold_image(h, aligned[k]);
  }
  log_event(log, iter, "color_transfer", h);

  // 4. Rare-class pool, S2T only.
  std::vector<std::vector<LabeledImage>> extras(n);
  for (std::size_t k = 0; k < n && ctx.rare; ++k) {
    const auto& s = source_batch[k];
    const bool kept = state.pool.offer(PoolEntry{s.image_id, s.file_name, s.image, s.annotations},
                                       *ctx.rare);
    log_event(log, iter, "pool_offer", fold(fold(fnv1a({}), s.image_id), kept), Direction::kS2T);
    if (has_class(s.annotations, *ctx.rare)) continue;
    const auto injected = state.pool.inject(inject_rng);
    if (injected.empty()) continue;
    h = fnv1a({});
    for (const auto& e : injected) {
      LabeledImage li{e.image_id, color_transfer_rgb(*e.image, target_stats[k]), e.annotations};
      h = fold(h, e.image_id);
      for (const auto& a : e.annotations) h = fold_annotation(h, a);
      extras[k].push_back(std::move(li));
    }
    log_event(log, iter, "rare_inject", h, Direction::kS2T);
  }

  // 5. Bidirectional mixing.
  MixOptions opts = cfg.mix;
  opts.group_filter = ctx.group;
  Stage2Result res;
  for (std::size_t k = 0; k < n; ++k) {
    const LabeledImage src{source_batch[k].image_id, aligned[k], source_batch[k].annotations};
    const LabeledImage tgt{target_batch[k].image_id, *target_batch[k].image, pseudo[k]};
    res.s2t.push_back(mix(src, tgt, Direction::kS2T, opts, mix_rng, extras[k]));
    log_event(log, iter, "mix", digest_sample(res.s2t.back()), Direction::kS2T);
    res.t2s.push_back(mix(tgt, src, Direction::kT2S, opts, mix_rng));
    log_event(log, iter, "mix", digest_sample(res.t2s.back()), Direction::kT2S);
  }

  // 6. Loss on the student, then the external update.
  student.set_parameters(state.student);
  res.loss_s2t = direction_loss(student, res.s2t, cfg.loss);
  res.loss_t2s = direction_loss(student, res.t2s, cfg.loss);
  res.loss = stage2_loss(res.loss_s2t, res.loss_t2s, cfg.loss);
  log_event(log, iter, "loss",
            fold(fold(fold(fnv1a({}), res.loss_s2t), res.loss_t2s), res.loss));
  state.student = trainer.train_step(state.student, res.s2t, res.t2s);
  check_schema(state.teacher, state.student);
  log_event(log, iter, "student_update", fnv1a(encode_parameters(state.student)));

  // 7. EMA teacher update comes last.
  state.teacher = ema_update(state.teacher, state.student, cfg.ema);
  log_event(log, iter, "ema_update", fnv1a(encode_parameters(state.teacher)));
  return res;
}

namespace {

ChannelStats pooled_stats(const ImageSet& set) {
  std::vector<LabImage> labs;
  labs.reserve(set.images.size());
  for (const auto& img : set.images) labs.push_back(rgb_to_lab(img));
  return pooled_channel_stats(labs);
}

}  // namespace

ImageSet align_to_domain(const ImageSet& set, const ImageSet& reference) {
  if (set.images.empty() || reference.images.empty()) {
    throw ValidationError("colour alignment needs images on both sides");
  }
  const ChannelStats from = pooled_stats(set);
  const ChannelStats to = pooled_stats(reference);
  ImageSet out{set.dataset, {}};
  out.images.reserve(set.images.size());
  for (const auto& img : set.images) out.images.push_back(color_transfer_rgb(img, from, to));
  return out;
}

Dataset export_pseudo_dataset(const ImageSet& target, Predictor& group_a_predictor,
                              Predictor& group_b_predictor, const CategoryGroup& group_a,
                              const CategoryGroup& group_b, const PipelineConfig& cfg) {
  validate_grouping({group_a, group_b});
  cfg.filter.validate();
  Dataset out{target.dataset.images, {}, default_categories()};
  Rng rng(mix_seed(cfg.seed, 0xe8a0));
  long long next_id = 1;
  for (std::size_t i = 0; i < target.dataset.images.size(); ++i) {
    const auto& rec = target.dataset.images[i];
    auto pa = filter_predictions(group_a_predictor.predict(rec, target.images[i], rng), cfg.filter);
    auto pb = filter_predictions(group_b_predictor.predict(rec, target.images[i], rng), cfg.filter);
    for (const auto& p : fuse(pa, pb, group_a, group_b, cfg.filter)) {
      out.annotations.push_back(to_annotation(p, next_id++, rec.id));
    }
  }
  validate_dataset(out);
  return out;
}

namespace {

struct MixedSet {
  ImageSet set;
  std::vector<Gray8Image> provenance;
  long long next_ann = 1;

  void add(const MixedSample& s, const std::string& stem) {
    const long long image_id = static_cast<long long>(set.dataset.images.size()) + 1;
    set.dataset.images.push_back(
        {image_id, s.image.width(), s.image.height(), "images/" + stem + ".png"});
    set.images.push_back(s.image);
    for (auto a : s.annotations) {
      a.id = next_ann++;
      a.image_id = image_id;
      set.dataset.annotations.push_back(std::move(a));
    }
    provenance.push_back(s.provenance_image());
  }

  void save(const std::filesystem::path& dir) const {
    save_image_set(dir, set, false);
    std::filesystem::create_directories(dir / "provenance");
    for (std::size_t i = 0; i < provenance.size(); ++i) {
      write_png_gray8(dir / "provenance" /
                          std::filesystem::path(set.dataset.images[i].file_name).filename(),
                      provenance[i]);
    }
  }
};

std::vector<SampleRef> sample_refs(const ImageSet& set) {
  std::vector<SampleRef> refs;
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    const auto& rec = set.dataset.images[i];
    SampleRef r{rec.id, rec.file_name, std::make_shared<const RgbImage>(set.images[i]), {}};
    for (const auto* a : set.dataset.annotations_for(rec.id)) r.annotations.push_back(*a);
    refs.push_back(std::move(r));
  }
  return refs;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace

Stage2SimSummary run_stage2_sim(const ImageSet& source, const ImageSet& target,
                                const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  validate_dataset(source.dataset);
  if (target.dataset.images.empty()) throw ValidationError("stage 2 needs target images");
  std::filesystem::create_directories(out_dir);

  const Palette fitted = fit_palette(source, domain_palette(ToySceneConfig{}, Domain::kSource));
  const MockPredictor base(fitted, cfg.predictor);
  std::string stage1;
  for (const auto& b : stage1_emit(source, cfg, &base)) {
    OrderedJson j;
    j["iter"] = b.iter;
    j["images"] = b.image_ids;
    j["seg_loss"] = b.seg_loss ? OrderedJson(*b.seg_loss) : OrderedJson();
    stage1 += j.dump() + "\n";
  }
  write_text(out_dir / "stage1.jsonl", stage1);

  const auto source_refs = sample_refs(source);
  const auto target_refs = sample_refs(target);
  const auto shares = class_statistics(source.dataset, cfg.grouping);

  Stage2SimSummary summary;
  for (std::size_t gi = 0; gi < cfg.grouping.size(); ++gi) {
    const CategoryGroup& group = cfg.grouping[gi];
    Stage2SimSummary::Stream info;
    info.group = group.name;
    if (shares[gi].shares) info.rare = identify_rare(shares[gi]);

    MockPredictorConfig pc = cfg.predictor;
    pc.group = group;
    MockPredictor teacher(fitted, pc), student(fitted, pc);
    MockTrainer trainer(cfg.learning_rate);
    Stage2State state{init_from(student.parameters()), student.parameters(),
                      RarePool(cfg.pool_capacity)};
    const Stage2Context ctx{&cfg, group, info.rare};
    EventLog log;
    log.record(0, "teacher_init", hex_digest(fnv1a(encode_parameters(state.teacher))));

    const std::uint64_t stream_seed = mix_seed(cfg.seed, gi + 1);
    Rng stream_rng(stream_seed);
    ShuffledStream src_stream(source_refs.size(), stream_rng.fork(1));
    ShuffledStream tgt_stream(target_refs.size(), stream_rng.fork(2));
    MixedSet s2t, t2s;
    std::string losses;
    for (std::size_t it = 1; it <= cfg.t_stage2; ++it) {
      std::vector<SampleRef> sb, tb;
      for (std::size_t k = 0; k < cfg.batch_size; ++k) {
        sb.push_back(source_refs[src_stream.next()]);
        tb.push_back(target_refs[tgt_stream.next()]);
      }
      Rng it_rng(mix_seed(stream_seed, it));
      const auto res = stage2_step(it, teacher, student, trainer, state, sb, tb, ctx, it_rng, &log);
      for (std::size_t k = 0; k < res.s2t.size(); ++k) {
        char stem[48];
        std::snprintf(stem, sizeof(stem), "it%06zu_b%zu", it, k);
        s2t.add(res.s2t[k], stem);
        t2s.add(res.t2s[k], stem);
      }
      OrderedJson j;
      j["iter"] = it;
      j["loss_s2t"] = res.loss_s2t;
      j["loss_t2s"] = res.loss_t2s;
      j["loss"] = res.loss;
      losses += j.dump() + "\n";
      info.final_loss = res.loss;
    }
    for (const auto& e : log.events()) info.injections += e.event == "rare_inject";
    info.s2t_samples = s2t.set.images.size();
    info.t2s_samples = t2s.set.images.size();

    const auto dir = out_dir / group.name;
    std::filesystem::create_directories(dir);
    s2t.set.dataset.classes = t2s.set.dataset.classes = default_categories();
    s2t.save(dir / "s2t");
    t2s.save(dir / "t2s");
    write_text(dir / "events.jsonl", log.to_jsonl());
    write_text(dir / "losses.jsonl", losses);
    save_parameters(dir / "teacher.bin", state.teacher);
    save_parameters(dir / "student.bin", state.student);
    save_dataset(dir / "pool.json", state.pool.dump());
    summary.streams.push_back(std::move(info));
  }
  return summary;
}

}  // namespace instmix
