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

#ifndef INSTMIX_TESTS_ORACLES_COMPOSITOR_ORACLE_HPP_
#define INSTMIX_TESTS_ORACLES_COMPOSITOR_ORACLE_HPP_

// Brute-force sequential cut-and-paste compositor. Deliberately written with
// flat arrays and explicit loops, sharing no code with the mixing engine.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace instmix::oracle {

struct Inst {
  int cls = 1;
  std::vector<char> mask;  // row-major
};

struct Scene {
  int w = 0, h = 0;
  std::vector<std::uint8_t> rgb;  // interleaved
  std::vector<Inst> insts;
};

struct Composite {
  std::vector<std::uint8_t> rgb;
  std::vector<std::uint8_t> provenance;
  std::vector<Inst> labels;
  std::vector<bool> donor_origin;
};

inline int count(const std::vector<char>& m) {
  int n = 0;
  for (char c : m) n += c != 0;
  return n;
}

inline Composite composite(const Scene& donor, const Scene& recipient, int area_threshold,
                           double margin, int min_remnant) {
  const int w = recipient.w, h = recipient.h;
  Composite out;
  out.rgb = recipient.rgb;
  out.provenance.assign(w * h, 0);
  std::vector<Inst> labels = recipient.insts;
  std::vector<bool> origin(labels.size(), false);

  for (std::size_t k = 0; k < donor.insts.size(); ++k) {
    const Inst& inst = donor.insts[k];
    std::vector<char> region(w * h, 0);
    const bool instance_wise = count(inst.mask) > area_threshold;
    if (instance_wise) {
      region = inst.mask;
    } else {
      int x0 = w, y0 = h, x1 = -1, y1 = -1;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (inst.mask[y * w + x]) {
            if (x < x0) x0 = x;
            if (y < y0) y0 = y;
            if (x > x1) x1 = x;
            if (y > y1) y1 = y;
          }
      const int bw = x1 - x0 + 1, bh = y1 - y0 + 1;
      const int dx = static_cast<int>(std::ceil(margin * bw - 1e-9));
      const int dy = static_cast<int>(std::ceil(margin * bh - 1e-9));
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (x >= x0 - dx && x <= x1 + dx && y >= y0 - dy && y <= y1 + dy) region[y * w + x] = 1;
    }

    for (int p = 0; p < w * h; ++p)
      if (region[p]) {
        for (int c = 0; c < 3; ++c) out.rgb[3 * p + c] = donor.rgb[3 * p + c];
        out.provenance[p] = 1;
      }

    std::vector<Inst> next;
    std::vector<bool> next_origin;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      bool touched = false;
      for (int p = 0; p < w * h; ++p) touched = touched || (labels[i].mask[p] && region[p]);
      Inst l = labels[i];
      if (touched) {
        for (int p = 0; p < w * h; ++p)
          if (region[p]) l.mask[p] = 0;
        if (count(l.mask) < min_remnant || count(l.mask) == 0) continue;
      }
      next.push_back(l);
      next_origin.push_back(origin[i]);
    }
    next.push_back(inst);
    next_origin.push_back(true);
    if (!instance_wise) {
      for (std::size_t j = 0; j < donor.insts.size(); ++j) {
        if (j == k) continue;
        Inst clip{donor.insts[j].cls, std::vector<char>(w * h, 0)};
        for (int p = 0; p < w * h; ++p) clip.mask[p] = donor.insts[j].mask[p] && region[p];
        const int a = count(clip.mask);
        if (a >= min_remnant && a > 0) {
          next.push_back(clip);
          next_origin.push_back(true);
        }
      }
    }
    labels = std::move(next);
    origin = std::move(next_origin);
  }

  for (std::size_t i = 0; i < labels.size(); ++i)
    if (!origin[i]) {
      out.labels.push_back(labels[i]);
      out.donor_origin.push_back(false);
    }
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (origin[i]) {
      out.labels.push_back(labels[i]);
      out.donor_origin.push_back(true);
    }
  return out;
}

// Random scene with up to `max_insts` non-empty rectangular or blob
// instances; instances may overlap.
inline Scene random_scene(std::mt19937_64& gen, int w, int h, int max_insts) {
  Scene s{w, h, std::vector<std::uint8_t>(w * h * 3), {}};
  std::uniform_int_distribution<int> byte(0, 255), cls(1, 8), n(0, max_insts), coin(0, 1);
  for (auto& b : s.rgb) b = static_cast<std::uint8_t>(byte(gen));
  const int k = n(gen);
  for (int i = 0; i < k; ++i) {
    Inst inst{cls(gen), std::vector<char>(w * h, 0)};
    if (coin(gen)) {
      std::uniform_int_distribution<int> ux(0, w - 1), uy(0, h - 1);
      int x0 = ux(gen), x1 = ux(gen), y0 = uy(gen), y1 = uy(gen);
      if (x0 > x1) std::swap(x0, x1);
      if (y0 > y1) std::swap(y0, y1);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) inst.mask[y * w + x] = 1;
    } else {
      std::bernoulli_distribution fg(0.3);
      for (auto& c : inst.mask) c = fg(gen);
    }
    if (count(inst.mask) > 0) s.insts.push_back(std::move(inst));
  }
  return s;
}

}  // namespace instmix::oracle

#endif  // INSTMIX_TESTS_ORACLES_COMPOSITOR_ORACLE_HPP_
