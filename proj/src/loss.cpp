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

#include "instmix/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "json.hpp"

namespace instmix {

void DenseMaskPred::validate() const {
  if (width < 1 || height < 1) throw DimensionError("dense prediction dimensions must be >= 1");
  if (probs.size() != static_cast<std::size_t>(width) * height) {
    throw DimensionError("dense prediction holds " + std::to_string(probs.size()) +
                         " values for " + std::to_string(width) + "x" + std::to_string(height));
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) {
      throw ValidationError("probability " + std::to_string(i) + " outside [0,1]");
    }
  }
}

void LossWeights::validate() const {
  for (double w : {ce, bce, dice, mix_s2t, mix_t2s}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("loss weights must be >= 0");
  }
}

namespace {

void check_pair(const DenseMaskPred& pred, const BinaryMask& gt) {
  pred.validate();
  if (pred.width != gt.width() || pred.height != gt.height()) {
    throw DimensionError("prediction is " + std::to_string(pred.width) + "x" +
                         std::to_string(pred.height) + ", mask is " + std::to_string(gt.width()) +
                         "x" + std::to_string(gt.height()));
  }
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

}  // namespace

double bce(const DenseMaskPred& pred, const BinaryMask& gt) {
  check_pair(pred, gt);
  const auto& g = gt.bits();
  double sum = 0;
  for (std::size_t i = 0; i < pred.probs.size(); ++i) {
    const double p = clamp_prob(pred.probs[i]);
    sum -= g[i] ? std::log(p) : std::log1p(-p);
  }
  return sum / static_cast<double>(pred.probs.size());
}

std::vector<double> bce_grad(const DenseMaskPred& pred, const BinaryMask& gt) {
  check_pair(pred, gt);
  const auto& g = gt.bits();
  const double n = static_cast<double>(pred.probs.size());
  std::vector<double> grad(pred.probs.size(), 0.0);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double p = pred.probs[i];
    if (p < kProbClamp || p > 1.0 - kProbClamp) continue;
    grad[i] = (g[i] ? -1.0 / p : 1.0 / (1.0 - p)) / n;
  }
  return grad;
}

double dice(const DenseMaskPred& pred, const BinaryMask& gt, double epsilon) {
  check_pair(pred, gt);
  const auto& g = gt.bits();
  double inter = 0, sp = 0, sg = 0;
  for (std::size_t i = 0; i < pred.probs.size(); ++i) {
    inter += pred.probs[i] * g[i];
    sp += pred.probs[i];
    sg += g[i];
  }
  return 1.0 - (2.0 * inter + epsilon) / (sp + sg + epsilon);
}

std::vector<double> dice_grad(const DenseMaskPred& pred, const BinaryMask& gt, double epsilon) {
  check_pair(pred, gt);
  const auto& g = gt.bits();
  double inter = 0, sp = 0, sg = 0;
  for (std::size_t i = 0; i < pred.probs.size(); ++i) {
    inter += pred.probs[i] * g[i];
    sp += pred.probs[i];
    sg += g[i];
  }
  const double num = 2.0 * inter + epsilon;
  const double den = sp + sg + epsilon;
  std::vector<double> grad(pred.probs.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad[i] = -(2.0 * g[i] * den - num) / (den * den);
  }
  return grad;
}

double ce(std::span<const double> class_probs, ClassId gt_class) {
  if (gt_class.index() >= class_probs.size()) {
    throw ValidationError("class " + std::to_string(gt_class.value()) +
                          " is outside a probability vector of length " +
                          std::to_string(class_probs.size()));
  }
  double sum = 0;
  for (double p : class_probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("class probability outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ValidationError("class probabilities sum to " + std::to_string(sum));
  }
  return -std::log(std::max(class_probs[gt_class.index()], kProbClamp));
}

PairLoss pair_loss(const LossPair& pair, const LossWeights& weights) {
  weights.validate();
  PairLoss l;
  l.ce = ce(pair.class_probs, pair.gt_class);
  l.bce = bce(pair.pred, pair.gt_mask);
  l.dice = dice(pair.pred, pair.gt_mask);
  l.total = weights.ce * l.ce + weights.bce * l.bce + weights.dice * l.dice;
  return l;
}

double seg_loss(std::span<const LossPair> pairs, const LossWeights& weights) {
  if (pairs.empty()) throw ValidationError("seg_loss needs at least one pair");
  double sum = 0;
  for (const auto& p : pairs) sum += pair_loss(p, weights).total;
  return sum / static_cast<double>(pairs.size());
}

double stage2_loss(double loss_s2t, double loss_t2s, const LossWeights& weights) {
  weights.validate();
  if (loss_s2t < 0 || loss_t2s < 0) throw ValidationError("losses must be >= 0");
  return weights.mix_s2t * loss_s2t + weights.mix_t2s * loss_t2s;
}

namespace {

[[noreturn]] void pairs_fail(std::string_view origin, const std::string& msg) {
  throw ParseError(std::string(origin) + ": " + msg);
}

}  // namespace

std::vector<LossPair> parse_loss_pairs(std::string_view json_text, std::string_view origin) {
  using Json = nlohmann::json;
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    pairs_fail(origin, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("pairs") || !j["pairs"].is_array()) {
    pairs_fail(origin, "expected an object with a 'pairs' array");
  }
  std::vector<LossPair> out;
  for (std::size_t i = 0; i < j["pairs"].size(); ++i) {
    const Json& p = j["pairs"][i];
    const std::string where = "pairs[" + std::to_string(i) + "]";
    try {
      for (const char* key : {"width", "height", "probs", "gt_mask", "class_probs", "gt_class"}) {
        if (!p.contains(key)) pairs_fail(origin, where + ": missing '" + key + "'");
      }
      DenseMaskPred pred{p["width"].get<int>(), p["height"].get<int>(),
                         p["probs"].get<std::vector<double>>()};
      pred.validate();
      const auto bits = p["gt_mask"].get<std::vector<int>>();
      if (bits.size() != pred.probs.size()) {
        throw DimensionError(where + ": gt_mask length differs from probs");
      }
      BinaryMask gt(pred.width, pred.height);
      for (std::size_t k = 0; k < bits.size(); ++k) {
        if (bits[k] != 0 && bits[k] != 1) throw ValidationError(where + ": gt_mask must be 0/1");
        gt.bits()[k] = static_cast<std::uint8_t>(bits[k]);
      }
      ClassId cls;
      if (p["gt_class"].is_string()) {
        const auto found = class_from_name(p["gt_class"].get<std::string>());
        if (!found) throw ValidationError(where + ": unknown class name");
        cls = *found;
      } else {
        cls = ClassId(p["gt_class"].get<int>());
      }
      out.push_back({std::move(pred), p["class_probs"].get<std::vector<double>>(), std::move(gt),
                     cls});
    } catch (const Json::exception& e) {
      pairs_fail(origin, where + ": " + e.what());
    }
  }
  return out;
}

}  // namespace instmix
