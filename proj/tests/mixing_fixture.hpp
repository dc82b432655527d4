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

#ifndef INSTMIX_TESTS_MIXING_FIXTURE_HPP_
#define INSTMIX_TESTS_MIXING_FIXTURE_HPP_

#include <string>

#include "instmix/mixing.hpp"
#include "oracles/compositor_oracle.hpp"

namespace instmix::testing {

inline LabeledImage to_labeled(const oracle::Scene& s, long long image_id) {
  LabeledImage li;
  li.image_id = image_id;
  li.image = RgbImage(s.w, s.h);
  li.image.data() = s.rgb;
  long long id = 1;
  for (const auto& inst : s.insts) {
    BinaryMask m(s.w, s.h);
    for (int p = 0; p < s.w * s.h; ++p)
      if (inst.mask[p]) m.set(p % s.w, p / s.w);
    li.annotations.push_back(make_annotation(id++, image_id, ClassId(inst.cls), std::move(m)));
  }
  return li;
}

// Empty string when the sample equals the oracle composite, else a reason.
inline std::string compare_to_oracle(const MixedSample& got, const oracle::Composite& want,
                                     int w) {
  if (got.image.data() != want.rgb) return "pixels differ";
  if (got.provenance != want.provenance) return "provenance differs";
  if (got.annotations.size() != want.labels.size()) {
    return "label count " + std::to_string(got.annotations.size()) + " vs " +
           std::to_string(want.labels.size());
  }
  for (std::size_t i = 0; i < want.labels.size(); ++i) {
    const auto& a = got.annotations[i];
    if (a.class_id.value() != want.labels[i].cls) return "class differs at " + std::to_string(i);
    if ((got.origins[i] == LabelOrigin::kDonor) != want.donor_origin[i]) {
      return "origin differs at " + std::to_string(i);
    }
    for (std::size_t p = 0; p < want.labels[i].mask.size(); ++p) {
      if (a.mask.at(static_cast<int>(p) % w, static_cast<int>(p) / w) !=
          (want.labels[i].mask[p] != 0)) {
        return "mask differs at label " + std::to_string(i);
      }
    }
  }
  return {};
}

// Invariants every mixed sample must satisfy: donor labels lie inside donor
// provenance; recipient labels avoid it.
inline std::string check_mix_invariants(const MixedSample& s) {
  for (std::size_t i = 0; i < s.annotations.size(); ++i) {
    const auto& bits = s.annotations[i].mask.bits();
    for (std::size_t p = 0; p < bits.size(); ++p) {
      if (!bits[p]) continue;
      const bool donor_px = s.provenance[p] != 0;
      if (s.origins[i] == LabelOrigin::kDonor && !donor_px) return "donor label outside donor pixels";
      if (s.origins[i] == LabelOrigin::kRecipient && donor_px) return "recipient label on pasted pixels";
    }
  }
  return {};
}

}  // namespace instmix::testing

#endif  // INSTMIX_TESTS_MIXING_FIXTURE_HPP_
