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

#ifndef INSTMIX_LOSS_HPP_
#define INSTMIX_LOSS_HPP_

#include <span>
#include <string_view>
#include <vector>

#include "instmix/common.hpp"
#include "instmix/mask.hpp"

namespace instmix {

/// Per-pixel foreground probabilities, row-major.
struct DenseMaskPred {
  int width = 0;
  int height = 0;
  std::vector<double> probs;

  void validate() const;
};

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kDiceEpsilon = 1.0;

struct LossWeights {
  double ce = 2.0;
  double bce = 5.0;
  double dice = 5.0;
  double mix_s2t = 1.0;
  double mix_t2s = 1.0;

  void validate() const;
};

double bce(const DenseMaskPred& pred, const BinaryMask& gt);
double dice(const DenseMaskPred& pred, const BinaryMask& gt, double epsilon = kDiceEpsilon);
/// -log p[gt], class index gt.value()-1. Throws when the vector is too short
/// or does not sum to 1 within 1e-6.
double ce(std::span<const double> class_probs, ClassId gt_class);

/// d bce / d p_i for every pixel (zero where the clamp is active).
std::vector<double> bce_grad(const DenseMaskPred& pred, const BinaryMask& gt);
std::vector<double> dice_grad(const DenseMaskPred& pred, const BinaryMask& gt,
                              double epsilon = kDiceEpsilon);

struct LossPair {
  DenseMaskPred pred;
  std::vector<double> class_probs;
  BinaryMask gt_mask;
  ClassId gt_class;
};

struct PairLoss {
  double ce = 0;
  double bce = 0;
  double dice = 0;
  double total = 0;
};

PairLoss pair_loss(const LossPair& pair, const LossWeights& weights);

/// Mean over pairs of ce*w.ce + bce*w.bce + dice*w.dice. Throws on an empty list.
double seg_loss(std::span<const LossPair> pairs, const LossWeights& weights);

double stage2_loss(double loss_s2t, double loss_t2s, const LossWeights& weights);

/// Loss-pair document:
///   {"pairs": [{"width", "height", "probs": [w*h], "gt_mask": [w*h of 0/1],
///               "class_probs": [8], "gt_class": <id or name>}]}
/// Arrays are row-major. Throws ParseError on structure, ValidationError on values.
std::vector<LossPair> parse_loss_pairs(std::string_view json_text,
                                       std::string_view origin = "<memory>");

}  // namespace instmix

#endif  // INSTMIX_LOSS_HPP_
