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

#ifndef INSTMIX_PIPELINE_HPP_
#define INSTMIX_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "instmix/dataset.hpp"
#include "instmix/ema.hpp"
#include "instmix/loss.hpp"
#include "instmix/mixing.hpp"
#include "instmix/pseudo_label.hpp"
#include "instmix/rare_pool.hpp"
#include "instmix/toygen.hpp"

namespace instmix {

struct PipelineConfig {
  std::size_t t_stage1 = 40000;
  std::size_t t_stage2 = 40000;
  std::size_t batch_size = 3;
  FilterConfig filter;
  EmaConfig ema;
  MixOptions mix;
  LossWeights loss;
  std::vector<CategoryGroup> grouping{human_cycle_group(), vehicle_group()};
  std::size_t pool_capacity = kDefaultRarePoolCapacity;
  MockPredictorConfig predictor;
  double learning_rate = 0.1;  // mock trainer step toward observed class colours
  std::uint64_t seed = 7;

  void validate() const;
};

PipelineConfig parse_pipeline_config(std::string_view json_text,
                                     std::string_view origin = "<memory>");
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string pipeline_config_to_json(const PipelineConfig& cfg);

inline constexpr const char* kSeedEnvVar = "UDA4INST_SEED";

/// Replaces cfg.seed with $UDA4INST_SEED when set. Returns whether it did.
bool apply_seed_override(PipelineConfig& cfg);

/// 64-bit FNV-1a, printed as 16 hex digits.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex_digest(std::uint64_t h);

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::vector<Prediction> predict(const ImageRecord& record, const RgbImage& image,
                                          Rng& rng) = 0;
  virtual const ParameterSet& parameters() const = 0;
  virtual void set_parameters(const ParameterSet& params) = 0;
  /// Dense per-instance outputs paired with the given labels, when the
  /// predictor can produce them.
  virtual std::optional<std::vector<LossPair>> dense_pairs(
      const RgbImage& image, std::span<const InstanceAnnotation> labels) const {
    (void)image;
    (void)labels;
    return std::nullopt;
  }
};

/// Colour-palette predictor. Its parameters are the palette itself:
/// "palette.classes" (8 x RGB) and "palette.background" (k x RGB).
class MockPredictor : public Predictor {
 public:
  MockPredictor(const Palette& palette, MockPredictorConfig cfg);

  std::vector<Prediction> predict(const ImageRecord& record, const RgbImage& image,
                                  Rng& rng) override;
  const ParameterSet& parameters() const override { return params_; }
  void set_parameters(const ParameterSet& params) override;
  std::optional<std::vector<LossPair>> dense_pairs(
      const RgbImage& image, std::span<const InstanceAnnotation> labels) const override;

  Palette palette() const;
  const MockPredictorConfig& config() const { return cfg_; }

 private:
  ParameterSet params_;
  MockPredictorConfig cfg_;
};

ParameterSet palette_parameters(const Palette& palette);
Palette palette_from_parameters(const ParameterSet& params);

/// Supervised fit of the mock palette on labelled images: class colours are
/// the mean colour under each class's masks, background colours the means of
/// the `background_tones` most frequent unlabelled colour bins. Classes with
/// no pixels keep the colour from `fallback`.
Palette fit_palette(const ImageSet& labelled, const Palette& fallback,
                    std::size_t background_tones = 2);

/// Replays predictions from a document, keyed by image id.
class FilePredictor : public Predictor {
 public:
  explicit FilePredictor(Dataset predictions);

  std::vector<Prediction> predict(const ImageRecord& record, const RgbImage& image,
                                  Rng& rng) override;
  const ParameterSet& parameters() const override { return params_; }
  void set_parameters(const ParameterSet& params) override { params_ = params; }

 private:
  Dataset doc_;
  ParameterSet params_;
};

/// Stands in for the gradient step of an external trainer.
class Trainer {
 public:
  virtual ~Trainer() = default;
  virtual ParameterSet train_step(const ParameterSet& student, std::span<const MixedSample> s2t,
                                  std::span<const MixedSample> t2s) = 0;
};

/// Moves each class colour of a palette parameter set toward the mean colour
/// observed under that class's labels in the mixed batch.
class MockTrainer : public Trainer {
 public:
  explicit MockTrainer(double learning_rate) : learning_rate_(learning_rate) {}
  ParameterSet train_step(const ParameterSet& student, std::span<const MixedSample> s2t,
                          std::span<const MixedSample> t2s) override;

 private:
  double learning_rate_;
};

/// Endless sequence of indices in [0, n): successive shuffled permutations,
/// so every index appears once per pass.
class ShuffledStream {
 public:
  ShuffledStream(std::size_t n, Rng rng);
  std::size_t next();

 private:
  std::size_t n_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_;
};

struct Stage1Batch {
  std::size_t iter = 0;
  std::vector<long long> image_ids;
  std::optional<double> seg_loss;
};

/// Exactly cfg.t_stage1 batches of cfg.batch_size source images, in a fixed
/// order per seed. With a predictor that has dense outputs each batch carries
/// its supervised segmentation loss.
std::vector<Stage1Batch> stage1_emit(const ImageSet& source, const PipelineConfig& cfg,
                                     const Predictor* predictor = nullptr);

struct Event {
  std::size_t iter = 0;
  std::string event;
  std::string digest;
  std::optional<Direction> direction;
};

class EventLog {
 public:
  void record(std::size_t iter, std::string event, std::string digest,
              std::optional<Direction> direction = std::nullopt);
  const std::vector<Event>& events() const { return events_; }
  std::string to_jsonl() const;

 private:
  std::vector<Event> events_;
};

/// One image of a training batch with the labels it carries into mixing.
struct SampleRef {
  long long image_id = 0;
  std::string file_name;
  std::shared_ptr<const RgbImage> image;
  std::vector<InstanceAnnotation> annotations;  // source: GT; target: unused
};

struct Stage2State {
  ParameterSet teacher;
  ParameterSet student;
  RarePool pool;
};

struct Stage2Context {
  const PipelineConfig* cfg = nullptr;
  std::optional<CategoryGroup> group;  // restricts labels and predictions
  std::optional<ClassId> rare;         // rare class of this stream, if any
};

struct Stage2Result {
  std::vector<MixedSample> s2t;
  std::vector<MixedSample> t2s;
  double loss_s2t = 0;
  double loss_t2s = 0;
  double loss = 0;
};

/// One stage-2 iteration, in this order: teacher inference on the target
/// batch, confidence filter, colour transfer of each source image to its
/// paired target, rare-pool offer and (when the source donor lacks the rare
/// class) injection for S2T, S2T and T2S mixing, loss, student update by the
/// trainer, EMA update of the teacher. Throws SchemaError when teacher and
/// student parameter schemas differ.
Stage2Result stage2_step(std::size_t iter, Predictor& teacher, Predictor& student,
                         Trainer& trainer, Stage2State& state,
                         std::span<const SampleRef> source_batch,
                         std::span<const SampleRef> target_batch, const Stage2Context& ctx,
                         Rng& rng, EventLog* log = nullptr);

/// Colour-transfers every image of `set` from the pooled LAB statistics of
/// `set` to the pooled statistics of `reference`. Annotations are unchanged.
ImageSet align_to_domain(const ImageSet& set, const ImageSet& reference);

/// Per image: both predictors, filter at tau, fuse. Throws when the groups overlap.
Dataset export_pseudo_dataset(const ImageSet& target, Predictor& group_a_predictor,
                              Predictor& group_b_predictor, const CategoryGroup& group_a,
                              const CategoryGroup& group_b, const PipelineConfig& cfg);

struct Stage2SimSummary {
  struct Stream {
    std::string group;
    std::optional<ClassId> rare;
    std::size_t s2t_samples = 0;
    std::size_t t2s_samples = 0;
    std::size_t injections = 0;
    double final_loss = 0;
  };
  std::vector<Stream> streams;
};

/// Runs stage 1 (fit + emitted batches) and cfg.t_stage2 stage-2 iterations
/// per group with the mock predictor, writing under out_dir:
///   stage1.jsonl, and per group <name>/events.jsonl, s2t/, t2s/,
///   teacher.bin, student.bin, pool.json, losses.jsonl.
Stage2SimSummary run_stage2_sim(const ImageSet& source, const ImageSet& target,
                                const PipelineConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace instmix

#endif  // INSTMIX_PIPELINE_HPP_
