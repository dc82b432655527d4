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

#include "instmix/rare_pool.hpp"

namespace instmix {

ClassId identify_rare(const std::map<ClassId, double>& shares) {
  if (shares.empty()) throw Error("identify_rare: group has no classes");
  // std::map iterates by ascending id, so strict '<' keeps the lowest on ties.
  auto best = shares.begin();
  for (auto it = shares.begin(); it != shares.end(); ++it) {
    if (it->second < best->second) best = it;
  }
  return best->first;
}

ClassId identify_rare(const GroupShares& group) {
  if (!group.shares) throw Error("identify_rare: group '" + group.group + "' has no instances");
  return identify_rare(*group.shares);
}

RarePool::RarePool(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ValidationError("rare pool capacity must be positive");
}

bool RarePool::offer(const PoolEntry& sample, ClassId rare) {
  PoolEntry kept{sample.image_id, sample.file_name, sample.image, {}};
  for (const auto& a : sample.annotations) {
    if (a.class_id == rare) kept.annotations.push_back(a);
  }
  if (kept.annotations.empty()) return false;
  entries_.push_back(std::move(kept));
  while (entries_.size() > capacity_) entries_.pop_front();
  return true;
}

std::vector<PoolEntry> RarePool::inject(Rng& rng) const {
  std::vector<PoolEntry> out;
  for (std::size_t i : rng.sample_without_replacement(entries_.size(), entries_.size() / 2)) {
    out.push_back(entries_[i]);
  }
  return out;
}

Dataset RarePool::dump() const {
  Dataset ds;
  ds.classes = default_categories();
  long long image_id = 1;
  long long ann_id = 1;
  for (const auto& e : entries_) {
    ImageRecord rec{image_id, 0, 0, e.file_name};
    if (e.image) {
      rec.width = e.image->width();
      rec.height = e.image->height();
    } else if (!e.annotations.empty()) {
      rec.width = e.annotations.front().mask.width();
      rec.height = e.annotations.front().mask.height();
    }
    ds.images.push_back(rec);
    for (auto a : e.annotations) {
      a.id = ann_id++;
      a.image_id = image_id;
      ds.annotations.push_back(std::move(a));
    }
    ++image_id;
  }
  return ds;
}

}  // namespace instmix
