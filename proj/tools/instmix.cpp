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

// Command-line front end. One subcommand per pipeline stage; every command
// reads and writes the documented file formats only.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "instmix/colorspace.hpp"
#include "instmix/dataset.hpp"
#include "instmix/ema.hpp"
#include "instmix/eval.hpp"
#include "instmix/loss.hpp"
#include "instmix/mixing.hpp"
#include "instmix/pipeline.hpp"
#include "instmix/pseudo_label.hpp"
#include "instmix/toygen.hpp"

namespace fs = std::filesystem;
using namespace instmix;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
}

Direction parse_direction(const std::string& s) {
  if (s == "s2t") return Direction::kS2T;
  if (s == "t2s") return Direction::kT2S;
  throw ValidationError("direction must be s2t or t2s, got '" + s + "'");
}

// gen-toy
struct GenToyArgs {
  std::string config;
  std::size_t n = 200;
  std::string domain = "source";
  std::string out_dir;
};

int run_gen_toy(const GenToyArgs& a) {
  const ToySceneConfig cfg = a.config.empty() ? ToySceneConfig{} : load_toy_config(a.config);
  const Domain domain = domain_from_name(a.domain);
  const ToyDataset toy = generate_dataset(cfg, a.n, domain);
  save_image_set(a.out_dir, toy.set);
  std::printf("wrote %zu %s images, %zu instances to %s\n", toy.set.images.size(),
              std::string(to_string(domain)).c_str(), toy.set.dataset.annotations.size(),
              a.out_dir.c_str());
  return 0;
}

// validate
int run_validate(const std::string& path) {
  const Dataset doc = fs::is_directory(path) ? load_image_set(path).dataset : load_dataset(path);
  std::printf("ok: %zu images, %zu annotations\n", doc.images.size(), doc.annotations.size());
  for (const auto& g : class_statistics(doc, {human_cycle_group(), vehicle_group()})) {
    std::printf("  %-12s %zu instances", g.group.c_str(), g.instances);
    if (g.shares) {
      for (const auto& [cls, share] : *g.shares) {
        std::printf("  %s=%.3f", std::string(class_name(cls)).c_str(), share);
      }
    }
    std::printf("\n");
  }
  return 0;
}

// colortransfer
struct ColorArgs {
  std::string source, target, out;
  std::string source_dir, target_dir, out_dir;
};

int run_colortransfer(const ColorArgs& a) {
  if (!a.source_dir.empty()) {
    if (a.target_dir.empty() || a.out_dir.empty()) {
      throw ValidationError("--source-dir needs --target-dir and --out-dir");
    }
    const ImageSet aligned = align_to_domain(load_image_set(a.source_dir),
                                             load_image_set(a.target_dir));
    save_image_set(a.out_dir, aligned);
    std::printf("transferred %zu images to %s\n", aligned.images.size(), a.out_dir.c_str());
    return 0;
  }
  if (a.source.empty() || a.target.empty() || a.out.empty()) {
    throw ValidationError("need --source, --target and --out (or the --*-dir forms)");
  }
  const RgbImage src = read_png_rgb(a.source);
  const RgbImage tgt = read_png_rgb(a.target);
  write_png_rgb(a.out, color_transfer_rgb(src, channel_stats(rgb_to_lab(tgt))));
  return 0;
}

// mix
struct MixArgs {
  std::string source_dir, target_dir, pseudo, direction = "s2t", out_dir, group = "all";
  std::uint64_t seed = 7;
  std::size_t area_threshold = kDefaultAreaThreshold;
  bool random_half = false;
  bool color_transfer = false;
};

int run_mix(const MixArgs& a) {
  const Direction dir = parse_direction(a.direction);
  const ImageSet src = load_image_set(a.source_dir);
  const ImageSet tgt = load_image_set(a.target_dir);
  Dataset pseudo;
  if (!a.pseudo.empty()) pseudo = load_dataset(a.pseudo);
  MixOptions opts;
  opts.area_threshold = a.area_threshold;
  opts.selection = a.random_half ? DonorSelection::kRandomHalf : DonorSelection::kAllInstances;
  opts.group_filter = group_by_name(a.group);
  opts.validate();

  // Source i pairs with target i.
  const std::size_t n = std::min(src.images.size(), tgt.images.size());
  ImageSet out{{{}, {}, default_categories()}, {}};
  std::vector<Gray8Image> provenance;
  long long next_ann = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& srec = src.dataset.images[i];
    const auto& trec = tgt.dataset.images[i];
    LabeledImage s{srec.id, src.images[i], {}};
    for (const auto* p : src.dataset.annotations_for(srec.id)) s.annotations.push_back(*p);
    if (a.color_transfer) {
      s.image = color_transfer_rgb(s.image, channel_stats(rgb_to_lab(tgt.images[i])));
    }
    LabeledImage t{trec.id, tgt.images[i], {}};
    for (const auto* p : pseudo.annotations_for(trec.id)) t.annotations.push_back(*p);
    Rng rng(mix_seed(a.seed, i));
    const MixedSample m = dir == Direction::kS2T ? mix(s, t, dir, opts, rng)
                                                 : mix(t, s, dir, opts, rng);
    const long long id = static_cast<long long>(i) + 1;
    char name[32];
    std::snprintf(name, sizeof(name), "images/%06lld.png", id);
    out.dataset.images.push_back({id, m.image.width(), m.image.height(), name});
    out.images.push_back(m.image);
    for (auto ann : m.annotations) {
      ann.id = next_ann++;
      ann.image_id = id;
      out.dataset.annotations.push_back(std::move(ann));
    }
    provenance.push_back(m.provenance_image());
  }
  save_image_set(a.out_dir, out, false);
  fs::create_directories(fs::path(a.out_dir) / "provenance");
  for (std::size_t i = 0; i < provenance.size(); ++i) {
    write_png_gray8(fs::path(a.out_dir) / "provenance" /
                        fs::path(out.dataset.images[i].file_name).filename(),
                    provenance[i]);
  }
  std::printf("mixed %zu pairs (%s), %zu annotations\n", n, to_string(dir),
              out.dataset.annotations.size());
  return 0;
}

// losses
int run_losses(const std::string& pairs_path, const std::string& weights_text) {
  LossWeights w;
  std::vector<double> vals;
  std::stringstream ss(weights_text);
  for (std::string item; std::getline(ss, item, ',');) vals.push_back(std::stod(item));
  if (vals.size() != 3) throw ValidationError("--weights expects ce,bce,dice");
  w.ce = vals[0];
  w.bce = vals[1];
  w.dice = vals[2];
  w.validate();
  const auto pairs = parse_loss_pairs(read_file(pairs_path), pairs_path);
  std::printf("%-6s %10s %10s %10s %10s\n", "pair", "ce", "bce", "dice", "total");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const PairLoss l = pair_loss(pairs[i], w);
    std::printf("%-6zu %10.6f %10.6f %10.6f %10.6f\n", i, l.ce, l.bce, l.dice, l.total);
  }
  if (!pairs.empty()) std::printf("seg_loss %.6f\n", seg_loss(pairs, w));
  return 0;
}

// eval
int run_eval(const std::string& pred, const std::string& gt, bool map50_only,
             const std::string& out) {
  const EvalReport report = evaluate(load_dataset(pred), load_dataset(gt));
  std::fputs(format_report_table(report, map50_only).c_str(), stdout);
  if (!out.empty()) write_file(out, report_to_json(report));
  return 0;
}

// stage2-sim
struct SimArgs {
  std::string config, source_dir, target_dir, out_dir;
  std::size_t iters = 50;
  std::optional<std::size_t> stage1_iters;
};

int run_stage2_sim_cmd(const SimArgs& a) {
  PipelineConfig cfg = a.config.empty() ? PipelineConfig{} : load_pipeline_config(a.config);
  if (apply_seed_override(cfg)) std::printf("seed %llu from %s\n",
                                            static_cast<unsigned long long>(cfg.seed), kSeedEnvVar);
  cfg.t_stage2 = a.iters;
  // Stage 1 here only records the batch stream; keep it as short as stage 2
  // unless asked otherwise.
  cfg.t_stage1 = a.stage1_iters.value_or(a.iters);
  const auto summary =
      run_stage2_sim(load_image_set(a.source_dir), load_image_set(a.target_dir), cfg, a.out_dir);
  for (const auto& s : summary.streams) {
    std::printf("%-12s rare=%-10s s2t=%zu t2s=%zu injections=%zu final_loss=%.6f\n",
                s.group.c_str(), s.rare ? std::string(class_name(*s.rare)).c_str() : "-",
                s.s2t_samples, s.t2s_samples, s.injections, s.final_loss);
  }
  return 0;
}

// pseudo-dataset
struct PseudoArgs {
  std::string target_dir, pred_a, pred_b, out, group_a = "human-cycle", group_b = "vehicle";
  std::string mock_source;
  double tau = 0.9;
};

int run_pseudo_dataset(const PseudoArgs& a) {
  PipelineConfig cfg;
  cfg.filter.tau = a.tau;
  cfg.filter.validate();
  const CategoryGroup ga = group_by_name(a.group_a), gb = group_by_name(a.group_b);
  ImageSet target = load_image_set(a.target_dir);
  Dataset doc;
  if (!a.mock_source.empty()) {
    // Mock teachers fitted on the labelled source; the target is aligned to
    // the source colours first.
    const ImageSet source = load_image_set(a.mock_source);
    const Palette fitted = fit_palette(source, domain_palette(ToySceneConfig{}, Domain::kSource));
    MockPredictorConfig ca, cb;
    ca.group = ga;
    cb.group = gb;
    MockPredictor pa(fitted, ca), pb(fitted, cb);
    doc = export_pseudo_dataset(align_to_domain(target, source), pa, pb, ga, gb, cfg);
  } else {
    if (a.pred_a.empty() || a.pred_b.empty()) {
      throw ValidationError("need --pred-a and --pred-b, or --mock-source");
    }
    FilePredictor pa(load_dataset(a.pred_a)), pb(load_dataset(a.pred_b));
    doc = export_pseudo_dataset(target, pa, pb, ga, gb, cfg);
  }
  save_dataset(a.out, doc);
  std::printf("exported %zu pseudo-labels over %zu images\n", doc.annotations.size(),
              doc.images.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"instmix: cross-domain instance mixing and pseudo-label tooling"};
  app.require_subcommand(1);

  GenToyArgs gen;
  auto* c_gen = app.add_subcommand("gen-toy", "Generate a procedural toy-domain image set");
  c_gen->add_option("--config", gen.config, "Toy scene config (JSON)")->check(CLI::ExistingFile);
  c_gen->add_option("--n", gen.n, "Number of images");
  c_gen->add_option("--domain", gen.domain, "source|target")
      ->check(CLI::IsMember({"source", "target"}));
  c_gen->add_option("--out-dir", gen.out_dir)->required();

  std::string validate_path;
  auto* c_val = app.add_subcommand("validate", "Validate an annotation document or image set dir");
  c_val->add_option("path", validate_path)->required()->check(CLI::ExistingPath);

  ColorArgs color;
  auto* c_col = app.add_subcommand("colortransfer", "LAB statistics transfer");
  c_col->add_option("--source", color.source)->check(CLI::ExistingFile);
  c_col->add_option("--target", color.target)->check(CLI::ExistingFile);
  c_col->add_option("--out", color.out);
  c_col->add_option("--source-dir", color.source_dir, "Image set to transfer (pooled stats)")
      ->check(CLI::ExistingDirectory);
  c_col->add_option("--target-dir", color.target_dir, "Reference image set")
      ->check(CLI::ExistingDirectory);
  c_col->add_option("--out-dir", color.out_dir);

  MixArgs mx;
  auto* c_mix = app.add_subcommand("mix", "Cross-domain instance mixing of paired images");
  c_mix->add_option("--source-dir", mx.source_dir)->required()->check(CLI::ExistingDirectory);
  c_mix->add_option("--target-dir", mx.target_dir)->required()->check(CLI::ExistingDirectory);
  c_mix->add_option("--pseudo", mx.pseudo, "Pseudo-label document for the target")
      ->check(CLI::ExistingFile);
  c_mix->add_option("--direction", mx.direction)->check(CLI::IsMember({"s2t", "t2s"}));
  c_mix->add_option("--out-dir", mx.out_dir)->required();
  c_mix->add_option("--seed", mx.seed);
  c_mix->add_option("--area-threshold", mx.area_threshold);
  c_mix->add_option("--group", mx.group)->check(CLI::IsMember({"human-cycle", "vehicle", "all"}));
  c_mix->add_flag("--random-half", mx.random_half, "Paste a random half of the donor instances");
  c_mix->add_flag("--color-transfer", mx.color_transfer,
                  "Transfer each source image to its paired target first");

  std::string filter_pred, filter_out;
  double filter_tau = 0.9;
  auto* c_filter = app.add_subcommand("filter", "Keep predictions with confidence >= tau");
  c_filter->add_option("--pred", filter_pred)->required()->check(CLI::ExistingFile);
  c_filter->add_option("--tau", filter_tau);
  c_filter->add_option("--out", filter_out)->required();

  std::string fuse_a, fuse_b, fuse_out, fuse_ga = "human-cycle", fuse_gb = "vehicle";
  double fuse_iou = 0.5;
  auto* c_fuse = app.add_subcommand("fuse", "Fuse two group prediction documents");
  c_fuse->add_option("--group-a", fuse_a)->required()->check(CLI::ExistingFile);
  c_fuse->add_option("--group-b", fuse_b)->required()->check(CLI::ExistingFile);
  c_fuse->add_option("--name-a", fuse_ga, "Group of --group-a");
  c_fuse->add_option("--name-b", fuse_gb, "Group of --group-b");
  c_fuse->add_option("--iou", fuse_iou);
  c_fuse->add_option("--out", fuse_out)->required();

  std::string ema_t, ema_s, ema_out;
  double ema_alpha = 0.999;
  auto* c_ema = app.add_subcommand("ema", "teacher' = alpha*teacher + (1-alpha)*student");
  c_ema->add_option("--teacher", ema_t)->required()->check(CLI::ExistingFile);
  c_ema->add_option("--student", ema_s)->required()->check(CLI::ExistingFile);
  c_ema->add_option("--alpha", ema_alpha);
  c_ema->add_option("--out", ema_out)->required();

  std::string loss_pairs, loss_weights = "2,5,5";
  auto* c_loss = app.add_subcommand("losses", "Per-pair ce/bce/dice and the weighted total");
  c_loss->add_option("--pairs", loss_pairs)->required()->check(CLI::ExistingFile);
  c_loss->add_option("--weights", loss_weights, "ce,bce,dice");

  std::string ev_pred, ev_gt, ev_out;
  bool ev_map50 = false;
  auto* c_eval = app.add_subcommand("eval", "Mask AP per class, mAP and mAP50");
  c_eval->add_option("--pred", ev_pred)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--gt", ev_gt)->required()->check(CLI::ExistingFile);
  c_eval->add_flag("--map50-only", ev_map50);
  c_eval->add_option("--out", ev_out, "Machine-readable report (JSON)");

  SimArgs sim;
  auto* c_sim = app.add_subcommand("stage2-sim", "Run both stages with the mock predictor");
  c_sim->add_option("--config", sim.config)->check(CLI::ExistingFile);
  c_sim->add_option("--source-dir", sim.source_dir)->required()->check(CLI::ExistingDirectory);
  c_sim->add_option("--target-dir", sim.target_dir)->required()->check(CLI::ExistingDirectory);
  c_sim->add_option("--iters", sim.iters, "Stage-2 iterations");
  c_sim->add_option("--stage1-iters", sim.stage1_iters, "Stage-1 batches (default: --iters)");
  c_sim->add_option("--out-dir", sim.out_dir)->required();

  PseudoArgs pd;
  auto* c_pd = app.add_subcommand("pseudo-dataset", "Filter and fuse two group predictors");
  c_pd->add_option("--target-dir", pd.target_dir)->required()->check(CLI::ExistingDirectory);
  c_pd->add_option("--pred-a", pd.pred_a)->check(CLI::ExistingFile);
  c_pd->add_option("--pred-b", pd.pred_b)->check(CLI::ExistingFile);
  c_pd->add_option("--group-a", pd.group_a);
  c_pd->add_option("--group-b", pd.group_b);
  c_pd->add_option("--mock-source", pd.mock_source,
                   "Labelled source set; predict with fitted mock teachers instead of documents")
      ->check(CLI::ExistingDirectory);
  c_pd->add_option("--tau", pd.tau);
  c_pd->add_option("--out", pd.out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_gen) return run_gen_toy(gen);
    if (*c_val) return run_validate(validate_path);
    if (*c_col) return run_colortransfer(color);
    if (*c_mix) return run_mix(mx);
    if (*c_filter) {
      FilterConfig cfg;
      cfg.tau = filter_tau;
      cfg.validate();
      const Dataset out = filter_document(load_dataset(filter_pred), cfg);
      save_dataset(filter_out, out);
      std::printf("kept %zu predictions\n", out.annotations.size());
      return 0;
    }
    if (*c_fuse) {
      FilterConfig cfg;
      cfg.fuse_iou = fuse_iou;
      cfg.validate();
      const Dataset out = fuse_documents(load_dataset(fuse_a), load_dataset(fuse_b),
                                         group_by_name(fuse_ga), group_by_name(fuse_gb), cfg);
      save_dataset(fuse_out, out);
      std::printf("fused to %zu predictions\n", out.annotations.size());
      return 0;
    }
    if (*c_ema) {
      EmaConfig cfg{ema_alpha};
      cfg.validate();
      save_parameters(ema_out, ema_update(load_parameters(ema_t), load_parameters(ema_s), cfg));
      return 0;
    }
    if (*c_loss) return run_losses(loss_pairs, loss_weights);
    if (*c_eval) return run_eval(ev_pred, ev_gt, ev_map50, ev_out);
    if (*c_sim) return run_stage2_sim_cmd(sim);
    if (*c_pd) return run_pseudo_dataset(pd);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
