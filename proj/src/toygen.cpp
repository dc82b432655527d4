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

#include "instmix/toygen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "json.hpp"

namespace instmix {

namespace {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

constexpr std::array<std::pair<Shape, std::string_view>, 4> kShapeNames{{
    {Shape::kCircle, "circle"},
    {Shape::kSquare, "square"},
    {Shape::kTriangle, "triangle"},
    {Shape::kBar, "bar"},
}};

constexpr std::uint64_t kSourceSalt = 0x50c3ull;
constexpr std::uint64_t kTargetSalt = 0x7a46e7ull;

}  // namespace

std::string_view to_string(Shape s) {
  for (const auto& [shape, name] : kShapeNames) {
    if (shape == s) return name;
  }
  return "?";
}

std::string_view to_string(Domain d) { return d == Domain::kSource ? "source" : "target"; }

Shape shape_from_name(std::string_view name) {
  for (const auto& [shape, n] : kShapeNames) {
    if (n == name) return shape;
  }
  throw ValidationError("unknown shape '" + std::string(name) +
                        "' (expected circle, square, triangle or bar)");
}

Domain domain_from_name(std::string_view name) {
  if (name == "source") return Domain::kSource;
  if (name == "target") return Domain::kTarget;
  throw ValidationError("unknown domain '" + std::string(name) + "' (expected source or target)");
}

Lab PaletteShift::apply(const Lab& lab) const {
  Lab out;
  for (int c = 0; c < 3; ++c) out[c] = lab[c] * scale[c] + offset[c];
  return out;
}

Rgb PaletteShift::apply(Rgb color) const { return lab_to_srgb(apply(srgb_to_lab(color))); }

std::array<ClassArchetype, kNumClasses> ToySceneConfig::default_archetypes() {
  // Vehicles are drawn large enough to exceed the 1500 px routing threshold;
  // the human-cycle classes stay well below it.
  return {{
      {Shape::kBar, {220, 20, 60}, 10, 16, 2.6, 4.0},      // person
      {Shape::kTriangle, {255, 140, 0}, 18, 28, 1.3, 1.5},  // rider
      {Shape::kCircle, {0, 60, 200}, 50, 64, 0.8, 4.0},    // car
      {Shape::kSquare, {0, 150, 150}, 42, 52, 1.0, 1.5},   // truck
      {Shape::kBar, {120, 40, 160}, 60, 76, 0.45, 1.0},    // bus
      {Shape::kBar, {90, 200, 40}, 80, 100, 0.3, 0.4},     // train
      {Shape::kCircle, {240, 220, 30}, 16, 24, 1.0, 0.6},  // motorcycle
      {Shape::kTriangle, {230, 110, 200}, 20, 30, 0.8, 1.5},  // bicycle
  }};
}

PaletteShift ToySceneConfig::default_shift() {
  return PaletteShift{{0.85, 0.8, 0.8}, {8.0, 12.0, -14.0}};
}

void ToySceneConfig::validate() const {
  if (width < 32 || height < 32) {
    throw ValidationError("toy images must be at least 32x32, got " + std::to_string(width) + "x" +
                          std::to_string(height));
  }
  if (min_instances < 0 || max_instances < min_instances) {
    throw ValidationError("instance count range must satisfy 0 <= min <= max");
  }
  double total_weight = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& a = archetypes[c];
    const std::string name(kClassNames[c]);
    if (a.min_size < 1 || a.max_size < a.min_size) {
      throw ValidationError(name + ": size range must satisfy 1 <= min_size <= max_size");
    }
    if (a.max_size > width) throw ValidationError(name + ": max_size exceeds the image width");
    if (!(a.aspect > 0) || std::lround(a.max_size * a.aspect) > height) {
      throw ValidationError(name + ": aspect must be positive and fit the image height");
    }
    if (!(a.weight >= 0)) throw ValidationError(name + ": weight must be >= 0");
    total_weight += a.weight;
  }
  if (max_instances > 0 && !(total_weight > 0)) {
    throw ValidationError("at least one class weight must be positive");
  }
  if (!(horizon >= 0 && horizon <= 1)) throw ValidationError("horizon must lie in [0,1]");
  if (!(occlusion_prob >= 0 && occlusion_prob <= 1)) {
    throw ValidationError("occlusion_prob must lie in [0,1]");
  }
  if (pixel_noise < 0 || pixel_noise > 64) throw ValidationError("pixel_noise must lie in [0,64]");
  if (min_visible_area < 1) throw ValidationError("min_visible_area must be >= 1");
  if (max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
  for (int c = 0; c < 3; ++c) {
    if (!std::isfinite(shift.scale[c]) || !std::isfinite(shift.offset[c]) ||
        !(shift.scale[c] > 0)) {
      throw ValidationError("palette shift scale must be positive and finite");
    }
  }
  const double in_gamut = shift_gamut_fraction(*this);
  if (in_gamut < 0.99) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "palette shift leaves only %.1f%% of the palette in gamut",
                  100.0 * in_gamut);
    throw ValidationError(buf);
  }
}

namespace {

[[noreturn]] void config_fail(std::string_view origin, const std::string& msg) {
  throw ParseError(std::string(origin) + ": " + msg);
}

void reject_unknown(const Json& obj, std::initializer_list<std::string_view> keys,
                    std::string_view origin, const std::string& where) {
  for (const auto& [k, v] : obj.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      config_fail(origin, where + ": unknown field '" + k + "'");
    }
  }
}

template <typename T>
T get_as(const Json& v, std::string_view origin, const std::string& where) {
  try {
    return v.get<T>();
  } catch (const Json::exception&) {
    config_fail(origin, where + ": wrong type");
  }
}

Rgb parse_rgb(const Json& v, std::string_view origin, const std::string& where) {
  const auto arr = get_as<std::vector<int>>(v, origin, where);
  if (arr.size() != 3) config_fail(origin, where + ": expected [r,g,b]");
  Rgb c;
  for (int i = 0; i < 3; ++i) {
    if (arr[i] < 0 || arr[i] > 255) config_fail(origin, where + ": channel outside 0..255");
    c[i] = static_cast<std::uint8_t>(arr[i]);
  }
  return c;
}

std::array<double, 3> parse_triple(const Json& v, std::string_view origin,
                                   const std::string& where) {
  const auto arr = get_as<std::vector<double>>(v, origin, where);
  if (arr.size() != 3) config_fail(origin, where + ": expected three numbers");
  return {arr[0], arr[1], arr[2]};
}

}  // namespace

ToySceneConfig parse_toy_config(std::string_view json_text, std::string_view origin) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    config_fail(origin, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) config_fail(origin, "expected a JSON object");
  reject_unknown(j,
                 {"width", "height", "min_instances", "max_instances", "background", "classes",
                  "shift", "occlusion_prob", "pixel_noise", "min_visible_area", "max_attempts",
                  "seed"},
                 origin, "config");

  ToySceneConfig cfg;
  auto read_int = [&](const char* key, int& out) {
    if (j.contains(key)) out = get_as<int>(j[key], origin, key);
  };
  read_int("width", cfg.width);
  read_int("height", cfg.height);
  read_int("min_instances", cfg.min_instances);
  read_int("max_instances", cfg.max_instances);
  read_int("pixel_noise", cfg.pixel_noise);
  read_int("min_visible_area", cfg.min_visible_area);
  read_int("max_attempts", cfg.max_attempts);
  if (j.contains("occlusion_prob")) {
    cfg.occlusion_prob = get_as<double>(j["occlusion_prob"], origin, "occlusion_prob");
  }
  if (j.contains("seed")) cfg.seed = get_as<std::uint64_t>(j["seed"], origin, "seed");

  if (j.contains("background")) {
    const Json& bg = j["background"];
    if (!bg.is_object()) config_fail(origin, "background: expected an object");
    reject_unknown(bg, {"top", "bottom", "horizon"}, origin, "background");
    if (bg.contains("top")) cfg.background_top = parse_rgb(bg["top"], origin, "background.top");
    if (bg.contains("bottom")) {
      cfg.background_bottom = parse_rgb(bg["bottom"], origin, "background.bottom");
    }
    if (bg.contains("horizon")) {
      cfg.horizon = get_as<double>(bg["horizon"], origin, "background.horizon");
    }
  }
  if (j.contains("shift")) {
    const Json& s = j["shift"];
    if (!s.is_object()) config_fail(origin, "shift: expected an object");
    reject_unknown(s, {"scale", "offset"}, origin, "shift");
    if (s.contains("scale")) cfg.shift.scale = parse_triple(s["scale"], origin, "shift.scale");
    if (s.contains("offset")) cfg.shift.offset = parse_triple(s["offset"], origin, "shift.offset");
  }
  if (j.contains("classes")) {
    const Json& cls = j["classes"];
    if (!cls.is_object()) config_fail(origin, "classes: expected an object keyed by class name");
    for (const auto& [name, entry] : cls.items()) {
      const std::string where = "classes." + name;
      const auto found = class_from_name(name);
      if (!found) config_fail(origin, where + ": unknown class");
      const ClassId id = *found;
      if (!entry.is_object()) config_fail(origin, where + ": expected an object");
      reject_unknown(entry, {"shape", "color", "min_size", "max_size", "aspect", "weight"}, origin,
                     where);
      auto& a = cfg.archetypes[id.index()];
      if (entry.contains("shape")) {
        try {
          a.shape = shape_from_name(get_as<std::string>(entry["shape"], origin, where + ".shape"));
        } catch (const ValidationError& e) {
          config_fail(origin, where + ".shape: " + e.what());
        }
      }
      if (entry.contains("color")) a.color = parse_rgb(entry["color"], origin, where + ".color");
      if (entry.contains("min_size")) a.min_size = get_as<int>(entry["min_size"], origin, where);
      if (entry.contains("max_size")) a.max_size = get_as<int>(entry["max_size"], origin, where);
      if (entry.contains("aspect")) a.aspect = get_as<double>(entry["aspect"], origin, where);
      if (entry.contains("weight")) a.weight = get_as<double>(entry["weight"], origin, where);
    }
  }
  cfg.validate();
  return cfg;
}

ToySceneConfig load_toy_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_toy_config(text, path.string());
}

std::string toy_config_to_json(const ToySceneConfig& cfg) {
  OrderedJson j;
  j["width"] = cfg.width;
  j["height"] = cfg.height;
  j["min_instances"] = cfg.min_instances;
  j["max_instances"] = cfg.max_instances;
  j["background"] = {{"top", cfg.background_top},
                     {"bottom", cfg.background_bottom},
                     {"horizon", cfg.horizon}};
  OrderedJson classes = OrderedJson::object();
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& a = cfg.archetypes[c];
    classes[std::string(kClassNames[c])] = {{"shape", to_string(a.shape)},
                                            {"color", a.color},
                                            {"min_size", a.min_size},
                                            {"max_size", a.max_size},
                                            {"aspect", a.aspect},
                                            {"weight", a.weight}};
  }
  j["classes"] = classes;
  j["shift"] = {{"scale", cfg.shift.scale}, {"offset", cfg.shift.offset}};
  j["occlusion_prob"] = cfg.occlusion_prob;
  j["pixel_noise"] = cfg.pixel_noise;
  j["min_visible_area"] = cfg.min_visible_area;
  j["max_attempts"] = cfg.max_attempts;
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

Palette domain_palette(const ToySceneConfig& cfg, Domain domain) {
  Palette p;
  for (int c = 0; c < kNumClasses; ++c) p.classes[c] = cfg.archetypes[c].color;
  p.background = {cfg.background_top, cfg.background_bottom};
  if (domain == Domain::kTarget) {
    for (auto& c : p.classes) c = cfg.shift.apply(c);
    for (auto& c : p.background) c = cfg.shift.apply(c);
  }
  return p;
}

double shift_gamut_fraction(const ToySceneConfig& cfg) {
  std::vector<Rgb> nominal;
  for (const auto& a : cfg.archetypes) nominal.push_back(a.color);
  nominal.push_back(cfg.background_top);
  nominal.push_back(cfg.background_bottom);
  std::size_t inside = 0;
  for (const Rgb& c : nominal) {
    const Lab shifted = cfg.shift.apply(srgb_to_lab(c));
    // Half an 8-bit level of slack: the colour is rendered quantized anyway.
    inside += lab_in_srgb_gamut(shifted, 0.5 / 255.0);
  }
  return static_cast<double>(inside) / static_cast<double>(nominal.size());
}

bool shape_covers(Shape shape, const BBox& box, int x, int y) {
  if (!box.contains(x, y)) return false;
  // Doubled coordinates keep every test in exact integer arithmetic.
  const long long w = box.w, h = box.h;
  const long long dx = 2LL * x + 1 - (2LL * box.x + w);
  switch (shape) {
    case Shape::kSquare:
    case Shape::kBar:
      return true;
    case Shape::kCircle: {
      const long long dy = 2LL * y + 1 - (2LL * box.y + h);
      return dx * dx * h * h + dy * dy * w * w <= w * w * h * h;
    }
    case Shape::kTriangle: {
      // Apex at the top centre, base along the bottom edge.
      const long long down = 2LL * (y - box.y) + 1;
      return 2 * h * std::llabs(dx) <= w * down;
    }
  }
  return false;
}

namespace {

ClassId pick_class(const ToySceneConfig& cfg, Rng& rng) {
  double total = 0;
  for (const auto& a : cfg.archetypes) total += a.weight;
  double r = rng.uniform01() * total;
  for (int c = 0; c < kNumClasses; ++c) {
    r -= cfg.archetypes[c].weight;
    if (r < 0) return ClassId(c + 1);
  }
  for (int c = kNumClasses; c > 0; --c) {
    if (cfg.archetypes[c - 1].weight > 0) return ClassId(c);
  }
  return ClassId(1);
}

// Number of 4-connected components among pixels where keep(i) holds,
// stopping early at two.
template <typename Keep>
int components_up_to_two(int w, int h, Keep keep) {
  std::vector<char> seen(static_cast<std::size_t>(w) * h, 0);
  int found = 0;
  std::vector<int> stack;
  for (int start = 0; start < w * h; ++start) {
    if (seen[start] || !keep(start)) continue;
    if (++found == 2) return 2;
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      const int x = i % w, y = i / w;
      const int nbr[4] = {x > 0 ? i - 1 : -1, x + 1 < w ? i + 1 : -1, y > 0 ? i - w : -1,
                          y + 1 < h ? i + w : -1};
      for (int n : nbr) {
        if (n >= 0 && !seen[n] && keep(n)) {
          seen[n] = 1;
          stack.push_back(n);
        }
      }
    }
  }
  return found;
}

}  // namespace

ToyScene generate_scene(const ToySceneConfig& cfg, Domain domain, std::size_t index) {
  cfg.validate();
  Rng rng(mix_seed(mix_seed(cfg.seed, domain == Domain::kSource ? kSourceSalt : kTargetSalt),
                   index));
  const int W = cfg.width, H = cfg.height;
  ToyScene scene;
  scene.width = W;
  scene.height = H;
  scene.domain = domain;
  scene.horizon_y = static_cast<int>(std::lround(cfg.horizon * H));

  std::vector<int> owner(static_cast<std::size_t>(W) * H, -1);
  const int n = rng.uniform_int(cfg.min_instances, cfg.max_instances);
  std::vector<int> cover;
  for (int k = 0; k < n; ++k) {
    const ClassId cls = pick_class(cfg, rng);
    const ClassArchetype& arch = cfg.archetypes[cls.index()];
    const int w = rng.uniform_int(arch.min_size, arch.max_size);
    const int h = std::clamp(static_cast<int>(std::lround(w * arch.aspect)), 1, H);
    const bool may_occlude = rng.bernoulli(cfg.occlusion_prob);
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
      const BBox box{rng.uniform_int(0, W - w), rng.uniform_int(0, H - h), w, h};
      cover.clear();
      for (int y = box.y; y < box.y + h; ++y)
        for (int x = box.x; x < box.x + w; ++x)
          if (shape_covers(arch.shape, box, x, y)) cover.push_back(y * W + x);
      if (static_cast<int>(cover.size()) < cfg.min_visible_area) continue;

      bool ok = true;
      std::vector<int> hit;
      for (int i : cover) {
        const int x = i % W, y = i / W;
        const int probe[5] = {i, x > 0 ? i - 1 : -1, x + 1 < W ? i + 1 : -1, y > 0 ? i - W : -1,
                              y + 1 < H ? i + W : -1};
        for (int p : probe) {
          if (p < 0 || owner[p] < 0) continue;
          // Same-class instances may neither overlap nor touch.
          if (scene.primitives[owner[p]].class_id == cls) ok = false;
        }
        if (owner[i] >= 0) {
          if (!may_occlude) ok = false;
          if (std::find(hit.begin(), hit.end(), owner[i]) == hit.end()) hit.push_back(owner[i]);
        }
        if (!ok) break;
      }
      if (!ok) continue;

      // Occluded instances must keep enough visible pixels in one piece.
      std::vector<char> covered(owner.size(), 0);
      for (int i : cover) covered[i] = 1;
      for (int j : hit) {
        auto keep = [&](int i) { return owner[i] == j && !covered[i]; };
        int left = 0;
        for (std::size_t i = 0; i < owner.size(); ++i) left += keep(static_cast<int>(i));
        if (left < cfg.min_visible_area || components_up_to_two(W, H, keep) != 1) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;

      const int id = static_cast<int>(scene.primitives.size());
      for (int i : cover) owner[i] = id;
      scene.primitives.push_back({cls, arch.shape, box});
      break;
    }
  }
  scene.noise_seed = rng.next();
  return scene;
}

RgbImage render_scene(const ToyScene& scene, const ToySceneConfig& cfg) {
  const Palette palette = domain_palette(cfg, scene.domain);
  RgbImage img(scene.width, scene.height);
  for (int y = 0; y < scene.height; ++y) {
    const Rgb bg = y < scene.horizon_y ? palette.background[0] : palette.background[1];
    for (int x = 0; x < scene.width; ++x) img.set(x, y, bg);
  }
  for (const auto& p : scene.primitives) {
    const Rgb c = palette.classes[p.class_id.index()];
    for (int y = p.box.y; y < p.box.y + p.box.h; ++y)
      for (int x = p.box.x; x < p.box.x + p.box.w; ++x)
        if (shape_covers(p.shape, p.box, x, y)) img.set(x, y, c);
  }
  if (cfg.pixel_noise > 0) {
    Rng noise(scene.noise_seed);
    for (auto& v : img.data()) {
      const int n = v + noise.uniform_int(-cfg.pixel_noise, cfg.pixel_noise);
      v = static_cast<std::uint8_t>(std::clamp(n, 0, 255));
    }
  }
  return img;
}

std::vector<BinaryMask> visible_masks(const ToyScene& scene) {
  std::vector<BinaryMask> masks(scene.primitives.size(), BinaryMask(scene.width, scene.height));
  for (std::size_t k = 0; k < scene.primitives.size(); ++k) {
    const auto& p = scene.primitives[k];
    for (int y = p.box.y; y < p.box.y + p.box.h; ++y) {
      for (int x = p.box.x; x < p.box.x + p.box.w; ++x) {
        if (!shape_covers(p.shape, p.box, x, y)) continue;
        for (std::size_t j = 0; j < k; ++j) masks[j].set(x, y, false);
        masks[k].set(x, y);
      }
    }
  }
  return masks;
}

ToyDataset generate_dataset(const ToySceneConfig& cfg, std::size_t n, Domain domain) {
  cfg.validate();
  ToyDataset out;
  out.set.dataset.classes = default_categories();
  long long next_ann = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const long long image_id = static_cast<long long>(i) + 1;
    char name[32];
    std::snprintf(name, sizeof(name), "images/%06lld.png", image_id);
    ToyScene scene = generate_scene(cfg, domain, i);
    out.set.dataset.images.push_back({image_id, cfg.width, cfg.height, name});
    out.set.images.push_back(render_scene(scene, cfg));
    auto masks = visible_masks(scene);
    for (std::size_t k = 0; k < masks.size(); ++k) {
      out.set.dataset.annotations.push_back(
          make_annotation(next_ann++, image_id, scene.primitives[k].class_id, std::move(masks[k])));
    }
    out.scenes.push_back(std::move(scene));
  }
  return out;
}

void MockPredictorConfig::validate() const {
  if (!(accept_radius > 0)) throw ValidationError("accept_radius must be positive");
  if (min_component_area < 1) throw ValidationError("min_component_area must be >= 1");
  if (!(mask_conf_scale > 0) || !(class_conf_scale > 0)) {
    throw ValidationError("confidence scales must be positive");
  }
  if (!(noise >= 0 && noise <= 1)) throw ValidationError("noise must lie in [0,1]");
}

namespace {

struct PixelCall {
  int label = 0;  // 0 background, else class id
  double distance = 0;
  double margin = 0;
};

}  // namespace

std::vector<Prediction> mock_predict(const RgbImage& image, const Palette& calibration,
                                     const MockPredictorConfig& cfg, Rng& rng) {
  cfg.validate();
  struct Entry {
    Lab lab;
    int label;
  };
  std::vector<Entry> entries;
  for (int c = 0; c < kNumClasses; ++c) entries.push_back({srgb_to_lab(calibration.classes[c]), c + 1});
  for (const Rgb& bg : calibration.background) entries.push_back({srgb_to_lab(bg), 0});

  std::unordered_map<std::uint32_t, PixelCall> cache;
  auto classify = [&](Rgb px) {
    const std::uint32_t key = (px[0] << 16) | (px[1] << 8) | px[2];
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    const Lab lab = srgb_to_lab(px);
    double best = INFINITY;
    int best_label = 0;
    for (const auto& e : entries) {
      const double d = delta_e(lab, e.lab);
      if (d < best) {
        best = d;
        best_label = e.label;
      }
    }
    double runner_up = INFINITY;
    for (const auto& e : entries) {
      if (e.label != best_label) runner_up = std::min(runner_up, delta_e(lab, e.lab));
    }
    PixelCall call{best_label, best, runner_up - best};
    if (best > cfg.accept_radius) call.label = 0;
    if (call.label != 0 && cfg.group && !cfg.group->contains(ClassId(call.label))) call.label = 0;
    cache.emplace(key, call);
    return call;
  };

  const int W = image.width(), H = image.height();
  std::vector<PixelCall> calls(static_cast<std::size_t>(W) * H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) calls[static_cast<std::size_t>(y) * W + x] = classify(image.at(x, y));

  std::vector<Prediction> preds;
  std::vector<char> seen(calls.size(), 0);
  std::vector<int> stack, component;
  for (int start = 0; start < W * H; ++start) {
    const int label = calls[start].label;
    if (seen[start] || label == 0) continue;
    component.clear();
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      component.push_back(i);
      const int x = i % W, y = i / W;
      const int nbr[4] = {x > 0 ? i - 1 : -1, x + 1 < W ? i + 1 : -1, y > 0 ? i - W : -1,
                          y + 1 < H ? i + W : -1};
      for (int n : nbr) {
        if (n >= 0 && !seen[n] && calls[n].label == label) {
          seen[n] = 1;
          stack.push_back(n);
        }
      }
    }
    if (static_cast<int>(component.size()) < cfg.min_component_area) continue;

    double dist = 0, margin = 0;
    BinaryMask mask(W, H);
    for (int i : component) {
      dist += calls[i].distance;
      margin += calls[i].margin;
      mask.set(i % W, i / W);
    }
    dist /= static_cast<double>(component.size());
    margin /= static_cast<double>(component.size());
    double mask_conf = std::exp(-dist / cfg.mask_conf_scale);
    double class_conf = 1.0 - 0.5 * std::exp(-margin / cfg.class_conf_scale);

    if (cfg.noise > 0) {
      mask_conf *= 1.0 - cfg.noise * rng.uniform01();
      class_conf *= 1.0 - cfg.noise * rng.uniform01();
      if (rng.bernoulli(cfg.noise)) {
        BinaryMask eroded = mask;
        for (int i : component) {
          const int x = i % W, y = i / W;
          const bool edge = x == 0 || y == 0 || x + 1 == W || y + 1 == H || !mask.at(x - 1, y) ||
                            !mask.at(x + 1, y) || !mask.at(x, y - 1) || !mask.at(x, y + 1);
          if (edge) eroded.set(x, y, false);
        }
        if (!eroded.empty()) mask = std::move(eroded);
      }
    }
    preds.push_back(Prediction{ClassId(label), std::move(mask), std::clamp(mask_conf, 0.0, 1.0),
                               std::clamp(class_conf, 0.0, 1.0), {}});
  }
  return preds;
}

}  // namespace instmix
