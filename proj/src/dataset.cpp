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

#include "instmix/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace instmix {

using Json = nlohmann::ordered_json;

InstanceAnnotation make_annotation(long long id, long long image_id, ClassId cls, BinaryMask mask,
                                   std::optional<double> score) {
  const MaskStats st = mask_stats(mask);
  if (!st.bbox) {
    throw ValidationError("annotation " + std::to_string(id) + " has an empty mask");
  }
  InstanceAnnotation a;
  a.id = id;
  a.image_id = image_id;
  a.class_id = cls;
  a.mask = std::move(mask);
  a.bbox = *st.bbox;
  a.area = st.area;
  a.score = score;
  return a;
}

const ImageRecord* Dataset::find_image(long long id) const {
  for (const auto& im : images) {
    if (im.id == id) return &im;
  }
  return nullptr;
}

std::vector<const InstanceAnnotation*> Dataset::annotations_for(long long image_id) const {
  std::vector<const InstanceAnnotation*> out;
  for (const auto& a : annotations) {
    if (a.image_id == image_id) out.push_back(&a);
  }
  return out;
}

std::vector<std::pair<ClassId, std::string>> default_categories() {
  std::vector<std::pair<ClassId, std::string>> cats;
  for (int i = 1; i <= kNumClasses; ++i) {
    cats.emplace_back(ClassId(i), std::string(kClassNames[i - 1]));
  }
  return cats;
}

namespace {

void check_unit_interval(const std::optional<double>& v, const char* field, long long id) {
  if (v && !(*v >= 0.0 && *v <= 1.0)) {
    throw ValidationError("annotation " + std::to_string(id) + ": " + field +
                          " outside [0,1]");
  }
}

}  // namespace

void validate_dataset(const Dataset& dataset) {
  std::unordered_map<long long, const ImageRecord*> by_id;
  for (const auto& im : dataset.images) {
    if (im.id <= 0) throw ValidationError("image id must be positive: " + std::to_string(im.id));
    if (im.width < 1 || im.height < 1) {
      throw ValidationError("image " + std::to_string(im.id) + " has non-positive size");
    }
    if (!by_id.emplace(im.id, &im).second) {
      throw ValidationError("duplicate image id " + std::to_string(im.id));
    }
  }

  std::set<long long> ann_ids;
  for (const auto& a : dataset.annotations) {
    const std::string where = "annotation " + std::to_string(a.id);
    if (a.id <= 0) throw ValidationError(where + ": id must be positive");
    if (!ann_ids.insert(a.id).second) throw ValidationError("duplicate annotation id " +
                                                            std::to_string(a.id));
    auto it = by_id.find(a.image_id);
    if (it == by_id.end()) {
      throw ReferenceError(where + " references missing image " + std::to_string(a.image_id));
    }
    const ImageRecord& im = *it->second;
    if (a.mask.width() != im.width || a.mask.height() != im.height) {
      throw ValidationError(where + ": mask size " + std::to_string(a.mask.height()) + "x" +
                            std::to_string(a.mask.width()) + " differs from image " +
                            std::to_string(im.height) + "x" + std::to_string(im.width));
    }
    const MaskStats st = mask_stats(a.mask);
    if (st.area != a.area) {
      throw ValidationError(where + ": area " + std::to_string(a.area) +
                            " disagrees with mask foreground " + std::to_string(st.area));
    }
    if (!st.bbox) throw ValidationError(where + ": empty mask");
    if (*st.bbox != a.bbox) throw ValidationError(where + ": bbox is not the tight mask bbox");
    check_unit_interval(a.score, "score", a.id);
    check_unit_interval(a.mask_conf, "mask_conf", a.id);
    check_unit_interval(a.class_conf, "class_conf", a.id);
  }

  std::set<int> class_ids;
  for (const auto& [cls, name] : dataset.classes) {
    if (!class_ids.insert(cls.value()).second) {
      throw ValidationError("duplicate category id " + std::to_string(cls.value()));
    }
    if (name != class_name(cls)) {
      throw ValidationError("category " + std::to_string(cls.value()) + " must be named '" +
                            std::string(class_name(cls)) + "', got '" + name + "'");
    }
  }
}

namespace {

[[noreturn]] void fail(std::string_view origin, const std::string& where, const std::string& msg) {
  throw ParseError(std::string(origin) + ": " + where + ": " + msg);
}

const Json& field(const Json& obj, const char* key, std::string_view origin,
                  const std::string& where) {
  if (!obj.is_object()) fail(origin, where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(origin, where, std::string("missing field '") + key + "'");
  return *it;
}

long long as_integer(const Json& v, std::string_view origin, const std::string& where) {
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d)) return static_cast<long long>(d);
  }
  fail(origin, where, "expected an integer");
}

double as_real(const Json& v, std::string_view origin, const std::string& where) {
  if (!v.is_number()) fail(origin, where, "expected a number");
  return v.get<double>();
}

const Json& as_array(const Json& v, std::string_view origin, const std::string& where) {
  if (!v.is_array()) fail(origin, where, "expected an array");
  return v;
}

InstanceAnnotation parse_annotation(const Json& j, std::string_view origin,
                                    const std::string& where) {
  InstanceAnnotation a;
  a.id = as_integer(field(j, "id", origin, where), origin, where + ".id");
  a.image_id = as_integer(field(j, "image_id", origin, where), origin, where + ".image_id");
  const long long cat =
      as_integer(field(j, "category_id", origin, where), origin, where + ".category_id");
  if (!ClassId::valid(cat)) fail(origin, where + ".category_id", "not a class id in 1..8");
  a.class_id = ClassId(static_cast<int>(cat));

  const std::string sw = where + ".segmentation";
  const Json& seg = field(j, "segmentation", origin, where);
  const Json& size = as_array(field(seg, "size", origin, sw), origin, sw + ".size");
  if (size.size() != 2) fail(origin, sw + ".size", "expected [height, width]");
  RleMask rle;
  rle.height = static_cast<int>(as_integer(size[0], origin, sw + ".size[0]"));
  rle.width = static_cast<int>(as_integer(size[1], origin, sw + ".size[1]"));
  const Json& counts = field(seg, "counts", origin, sw);
  if (counts.is_string()) fail(origin, sw + ".counts", "compressed RLE strings are not supported");
  as_array(counts, origin, sw + ".counts");
  rle.counts.reserve(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const long long c = as_integer(counts[i], origin, sw + ".counts[" + std::to_string(i) + "]");
    if (c < 0) fail(origin, sw + ".counts[" + std::to_string(i) + "]", "negative run");
    rle.counts.push_back(static_cast<std::uint64_t>(c));
  }
  try {
    a.mask = rle_decode(rle);
  } catch (const CodecError& e) {
    fail(origin, sw, e.what());
  }

  const Json& bbox = as_array(field(j, "bbox", origin, where), origin, where + ".bbox");
  if (bbox.size() != 4) fail(origin, where + ".bbox", "expected [x, y, w, h]");
  a.bbox.x = static_cast<int>(as_integer(bbox[0], origin, where + ".bbox[0]"));
  a.bbox.y = static_cast<int>(as_integer(bbox[1], origin, where + ".bbox[1]"));
  a.bbox.w = static_cast<int>(as_integer(bbox[2], origin, where + ".bbox[2]"));
  a.bbox.h = static_cast<int>(as_integer(bbox[3], origin, where + ".bbox[3]"));
  const long long area = as_integer(field(j, "area", origin, where), origin, where + ".area");
  if (area < 0) fail(origin, where + ".area", "negative area");
  a.area = static_cast<std::size_t>(area);

  auto optional_real = [&](const char* key) -> std::optional<double> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return as_real(*it, origin, where + "." + key);
  };
  a.score = optional_real("score");
  a.mask_conf = optional_real("mask_conf");
  a.class_conf = optional_real("class_conf");
  if (auto it = j.find("source_group"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) fail(origin, where + ".source_group", "expected a string");
    a.source_group = it->get<std::string>();
  }
  return a;
}

}  // namespace

Dataset parse_dataset(std::string_view json_text, std::string_view origin) {
  Json doc;
  try {
    doc = Json::parse(json_text.begin(), json_text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string(origin) + ": malformed JSON at byte " + std::to_string(e.byte) +
                     ": " + e.what());
  }
  if (!doc.is_object()) fail(origin, "<root>", "expected an object");

  Dataset ds;
  const Json& images = as_array(field(doc, "images", origin, "<root>"), origin, "images");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = "images[" + std::to_string(i) + "]";
    const Json& j = images[i];
    ImageRecord im;
    im.id = as_integer(field(j, "id", origin, where), origin, where + ".id");
    im.width = static_cast<int>(as_integer(field(j, "width", origin, where), origin, where));
    im.height = static_cast<int>(as_integer(field(j, "height", origin, where), origin, where));
    const Json& fn = field(j, "file_name", origin, where);
    if (!fn.is_string()) fail(origin, where + ".file_name", "expected a string");
    im.file_name = fn.get<std::string>();
    ds.images.push_back(std::move(im));
  }

  const Json& anns = as_array(field(doc, "annotations", origin, "<root>"), origin, "annotations");
  for (std::size_t i = 0; i < anns.size(); ++i) {
    ds.annotations.push_back(
        parse_annotation(anns[i], origin, "annotations[" + std::to_string(i) + "]"));
  }

  const Json& cats = as_array(field(doc, "categories", origin, "<root>"), origin, "categories");
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const std::string where = "categories[" + std::to_string(i) + "]";
    const long long id = as_integer(field(cats[i], "id", origin, where), origin, where + ".id");
    if (!ClassId::valid(id)) fail(origin, where + ".id", "not a class id in 1..8");
    const Json& name = field(cats[i], "name", origin, where);
    if (!name.is_string()) fail(origin, where + ".name", "expected a string");
    ds.classes.emplace_back(ClassId(static_cast<int>(id)), name.get<std::string>());
  }

  try {
    validate_dataset(ds);
  } catch (const ReferenceError& e) {
    throw ReferenceError(std::string(origin) + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(origin) + ": " + e.what());
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open annotation document '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), path.string());
}

std::string serialize_dataset(const Dataset& dataset) {
  std::vector<const ImageRecord*> images;
  for (const auto& im : dataset.images) images.push_back(&im);
  std::sort(images.begin(), images.end(),
            [](const ImageRecord* a, const ImageRecord* b) { return a->id < b->id; });
  std::vector<const InstanceAnnotation*> anns;
  for (const auto& a : dataset.annotations) anns.push_back(&a);
  std::sort(anns.begin(), anns.end(),
            [](const InstanceAnnotation* a, const InstanceAnnotation* b) { return a->id < b->id; });
  auto cats = dataset.classes;
  std::sort(cats.begin(), cats.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  Json doc = Json::object();
  Json& jimages = doc["images"] = Json::array();
  for (const auto* im : images) {
    jimages.push_back(Json{{"id", im->id},
                           {"width", im->width},
                           {"height", im->height},
                           {"file_name", im->file_name}});
  }
  Json& janns = doc["annotations"] = Json::array();
  for (const auto* a : anns) {
    const RleMask rle = rle_encode(a->mask);
    Json j = Json::object();
    j["id"] = a->id;
    j["image_id"] = a->image_id;
    j["category_id"] = a->class_id.value();
    j["segmentation"] = Json{{"size", {rle.height, rle.width}}, {"counts", rle.counts}};
    j["bbox"] = {a->bbox.x, a->bbox.y, a->bbox.w, a->bbox.h};
    j["area"] = a->area;
    if (a->score) j["score"] = *a->score;
    if (a->mask_conf) j["mask_conf"] = *a->mask_conf;
    if (a->class_conf) j["class_conf"] = *a->class_conf;
    if (a->source_group) j["source_group"] = *a->source_group;
    janns.push_back(std::move(j));
  }
  Json& jcats = doc["categories"] = Json::array();
  for (const auto& [cls, name] : cats) jcats.push_back(Json{{"id", cls.value()}, {"name", name}});
  return doc.dump() + "\n";
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write annotation document '" + path.string() + "'");
  out << serialize_dataset(dataset);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

namespace {

template <typename Deref>
Gray16Image rasterize_ids(std::size_t n, Deref get, int width, int height) {
  Gray16Image img{width, height, std::vector<std::uint16_t>(static_cast<std::size_t>(width) * height)};
  std::array<int, kNumClasses> per_class{};
  for (std::size_t i = 0; i < n; ++i) {
    const InstanceAnnotation& a = get(i);
    if (a.mask.width() != width || a.mask.height() != height) {
      throw DimensionError("annotation " + std::to_string(a.id) + " mask size differs from " +
                           std::to_string(width) + "x" + std::to_string(height));
    }
    const int k = ++per_class[a.class_id.index()];
    if (k > 999) {
      throw CapacityError("more than 999 instances of class " +
                          std::string(class_name(a.class_id)) + " on one image");
    }
    const auto value = static_cast<std::uint16_t>(a.class_id.value() * 1000 + k);
    const auto& bits = a.mask.bits();
    for (std::size_t p = 0; p < bits.size(); ++p) {
      if (!bits[p]) continue;
      if (img.data[p] != 0) {
        throw RasterizationError("annotation " + std::to_string(a.id) +
                                 " overlaps an earlier instance; cannot rasterize to an ID map");
      }
      img.data[p] = value;
    }
  }
  return img;
}

}  // namespace

Gray16Image write_instance_id_image(std::span<const InstanceAnnotation> annotations, int width,
                                    int height) {
  return rasterize_ids(
      annotations.size(), [&](std::size_t i) -> const InstanceAnnotation& { return annotations[i]; },
      width, height);
}

Gray16Image write_instance_id_image(std::span<const InstanceAnnotation* const> annotations,
                                    int width, int height) {
  return rasterize_ids(
      annotations.size(),
      [&](std::size_t i) -> const InstanceAnnotation& { return *annotations[i]; }, width, height);
}

std::vector<DecodedInstance> read_instance_id_image(const Gray16Image& image) {
  std::map<std::uint16_t, BinaryMask> by_value;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const std::uint16_t v = image.at(x, y);
      if (v == 0) continue;
      const int cls = v / 1000;
      if (!ClassId::valid(cls) || v % 1000 == 0) {
        throw CodecError("instance-ID value " + std::to_string(v) + " at (" + std::to_string(x) +
                         "," + std::to_string(y) + ") is not class*1000+k");
      }
      auto it = by_value.try_emplace(v, image.width, image.height).first;
      it->second.set(x, y);
    }
  }
  std::vector<DecodedInstance> out;
  out.reserve(by_value.size());
  for (auto& [v, mask] : by_value) out.push_back({ClassId(v / 1000), std::move(mask)});
  return out;
}

const RgbImage& ImageSet::image(long long image_id) const {
  for (std::size_t i = 0; i < dataset.images.size(); ++i) {
    if (dataset.images[i].id == image_id) return images.at(i);
  }
  throw ReferenceError("no image with id " + std::to_string(image_id));
}

ImageSet load_image_set(const std::filesystem::path& dir) {
  ImageSet set;
  set.dataset = load_dataset(dir / "annotations.json");
  for (const auto& im : set.dataset.images) {
    RgbImage img = read_png_rgb(dir / im.file_name);
    if (img.width() != im.width || img.height() != im.height) {
      throw DimensionError("image " + std::to_string(im.id) + " ('" + im.file_name + "') is " +
                           std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                           ", record says " + std::to_string(im.width) + "x" +
                           std::to_string(im.height));
    }
    set.images.push_back(std::move(img));
  }
  return set;
}

void save_image_set(const std::filesystem::path& dir, const ImageSet& set, bool instance_ids) {
  if (set.images.size() != set.dataset.images.size()) {
    throw ValidationError("image set holds " + std::to_string(set.images.size()) +
                          " images for " + std::to_string(set.dataset.images.size()) + " records");
  }
  validate_dataset(set.dataset);
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    const auto& rec = set.dataset.images[i];
    const auto path = dir / rec.file_name;
    std::filesystem::create_directories(path.parent_path());
    write_png_rgb(path, set.images[i]);
    if (instance_ids) {
      std::filesystem::create_directories(dir / "instance_ids");
      const auto anns = set.dataset.annotations_for(rec.id);
      write_png_gray16(dir / "instance_ids" / std::filesystem::path(rec.file_name).filename(),
                       write_instance_id_image(anns, rec.width, rec.height));
    }
  }
  save_dataset(dir / "annotations.json", set.dataset);
}

std::vector<GroupShares> class_statistics(const Dataset& dataset,
                                          const std::vector<CategoryGroup>& grouping) {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& a : dataset.annotations) ++counts[a.class_id.index()];

  std::vector<GroupShares> out;
  for (const auto& g : grouping) {
    GroupShares gs{g.name, 0, std::nullopt};
    for (ClassId c : g.classes) gs.instances += counts[c.index()];
    if (gs.instances > 0) {
      std::map<ClassId, double> shares;
      for (ClassId c : g.classes) {
        shares[c] = static_cast<double>(counts[c.index()]) / static_cast<double>(gs.instances);
      }
      gs.shares = std::move(shares);
    }
    out.push_back(std::move(gs));
  }
  return out;
}

}  // namespace instmix
