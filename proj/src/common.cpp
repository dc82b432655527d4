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

#include "instmix/common.hpp"

#include <algorithm>

namespace instmix {

std::optional<ClassId> class_from_name(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (kClassNames[i] == name) return ClassId(i + 1);
  }
  return std::nullopt;
}

bool CategoryGroup::contains(ClassId c) const {
  return std::find(classes.begin(), classes.end(), c) != classes.end();
}

CategoryGroup human_cycle_group() {
  return {"human-cycle", {ClassId(1), ClassId(2), ClassId(7), ClassId(8)}};
}

CategoryGroup vehicle_group() {
  return {"vehicle", {ClassId(3), ClassId(4), ClassId(5), ClassId(6)}};
}

CategoryGroup all_classes_group() {
  CategoryGroup g{"all", {}};
  for (int i = 1; i <= kNumClasses; ++i) g.classes.emplace_back(i);
  return g;
}

CategoryGroup group_by_name(std::string_view name) {
  if (name == "human-cycle") return human_cycle_group();
  if (name == "vehicle") return vehicle_group();
  if (name == "all") return all_classes_group();
  throw ValidationError("unknown category group: " + std::string(name));
}

void validate_grouping(const std::vector<CategoryGroup>& grouping) {
  std::array<const CategoryGroup*, kNumClasses> owner{};
  for (const auto& g : grouping) {
    if (g.classes.empty()) {
      throw ValidationError("category group '" + g.name + "' is empty");
    }
    for (ClassId c : g.classes) {
      if (owner[c.index()] != nullptr) {
        throw ValidationError("class " + std::string(class_name(c)) +
                              " appears in groups '" + owner[c.index()]->name +
                              "' and '" + g.name + "'");
      }
      owner[c.index()] = &g;
    }
  }
}

}  // namespace instmix
