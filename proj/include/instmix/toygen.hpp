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

#ifndef INSTMIX_TOYGEN_HPP_
#define INSTMIX_TOYGEN_HPP_

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "instmix/colorspace.hpp"
#include "instmix/dataset.hpp"
#include "instmix/pseudo_label.hpp"
#include "instmix/rng.hpp"

namespace instmix {

enum class Shape { kCircle, kSquare, kTriangle, kBar };
enum class Domain { kSource, kTarget };

std::string_view to_string(Shape s);
std::string_view to_string(Domain d);
Shape shape_from_name(std::string_view name);
Domain domain_from_name(std::string_view name);

struct ClassArchetype {
  Shape shape = Shape::kSquare;
  Rgb color{};
  int min_size = 8;  // bounding-box width range in pixels
  int max_size = 16;
  double aspect = 1.0;  // height / width
  double weight = 1.0;  // relative draw frequency
};

/// Per-channel affine map applied in CIELAB: v' = v * scale + offset.
struct PaletteShift {
  std::array<double, 3> scale{1.0, 1.0, 1.0};
  std::array<double, 3> offset{0.0, 0.0, 0.0};

  Lab apply(const Lab& lab) const;
  Rgb apply(Rgb color) const;
};

struct ToySceneConfig {
  int width = 160;
  int height = 160;
  std::array<ClassArchetype, kNumClasses> archetypes = default_archetypes();
  int min_instances = 3;
  int max_instances = 8;
  Rgb background_top{150, 170, 190};
  Rgb background_bottom{96, 96, 96};
  double horizon = 0.45;  // fraction of the height covered by the top tone
  PaletteShift shift = default_shift();
  double occlusion_prob = 0.3;
  int pixel_noise = 2;  // uniform +-noise per channel after rendering
  int min_visible_area = 40;
  int max_attempts = 60;  // placement tries per instance
  std::uint64_t seed = 7;

  void validate() const;

  static std::array<ClassArchetype, kNumClasses> default_archetypes();
  static PaletteShift default_shift();
};

ToySceneConfig parse_toy_config(std::string_view json_text, std::string_view origin = "<memory>");
ToySceneConfig load_toy_config(const std::filesystem::path& path);
std::string toy_config_to_json(const ToySceneConfig& cfg);

/// Flat colours a domain renders with: one per class, then the two
/// background tones. The target domain carries the palette shift.
struct Palette {
  std::array<Rgb, kNumClasses> classes{};
  std::vector<Rgb> background;
};

Palette domain_palette(const ToySceneConfig& cfg, Domain domain);

/// Share of the nominal palette that stays inside the sRGB gamut after the shift.
double shift_gamut_fraction(const ToySceneConfig& cfg);

struct ScenePrimitive {
  ClassId class_id;
  Shape shape;
  BBox box;
};

/// Primitives in draw order; later ones occlude earlier ones.
struct ToyScene {
  int width = 0;
  int height = 0;
  Domain domain = Domain::kSource;
  int horizon_y = 0;  // rows [0, horizon_y) take the top tone
  std::vector<ScenePrimitive> primitives;
  std::uint64_t noise_seed = 0;
};

/// True when the centre of pixel (x, y) lies inside the shape.
bool shape_covers(Shape shape, const BBox& box, int x, int y);

/// Deterministic in (cfg.seed, domain, index).
ToyScene generate_scene(const ToySceneConfig& cfg, Domain domain, std::size_t index);

RgbImage render_scene(const ToyScene& scene, const ToySceneConfig& cfg);

/// Visible-pixel masks of every primitive, in draw order.
std::vector<BinaryMask> visible_masks(const ToyScene& scene);

struct ToyDataset {
  ImageSet set;
  std::vector<ToyScene> scenes;
};

/// Image ids 1..n, file names images/NNNNNN.png, annotation ids 1.. in
/// image then draw order.
ToyDataset generate_dataset(const ToySceneConfig& cfg, std::size_t n, Domain domain);

struct MockPredictorConfig {
  double accept_radius = 20.0;     // delta E beyond which a pixel counts as background
  int min_component_area = 20;
  double mask_conf_scale = 100.0;  // mask_conf = exp(-mean distance / scale)
  double class_conf_scale = 8.0;   // class_conf = 1 - exp(-mean margin / scale) / 2
  double noise = 0.0;              // confidence jitter and boundary erosion, in [0,1]
  std::optional<CategoryGroup> group;

  void validate() const;
};

/// Colour-threshold segmentation against `calibration`: each pixel takes its
/// nearest palette colour in CIELAB, class pixels are split into 4-connected
/// components, and each component above the minimum area is one prediction.
/// Confidences fall as the pixels move away from their palette colour (mask)
/// and toward the runner-up colour (class).
std::vector<Prediction> mock_predict(const RgbImage& image, const Palette& calibration,
                                     const MockPredictorConfig& cfg, Rng& rng);

}  // namespace instmix

#endif  // INSTMIX_TOYGEN_HPP_
