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

#ifndef INSTMIX_RARE_POOL_HPP_
#define INSTMIX_RARE_POOL_HPP_

#include <deque>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "instmix/dataset.hpp"
#include "instmix/rng.hpp"

namespace instmix {

/// Class with the smallest share; ties go to the lowest class id.
ClassId identify_rare(const std::map<ClassId, double>& shares);
ClassId identify_rare(const GroupShares& group);

struct PoolEntry {
  long long image_id = 0;
  std::string file_name;
  std::shared_ptr<const RgbImage> image;
  std::vector<InstanceAnnotation> annotations;
};

inline constexpr std::size_t kDefaultRarePoolCapacity = 10;

// FIFO pool of donor samples holding rare-class instances. Single writer.
class RarePool {
 public:
  explicit RarePool(std::size_t capacity = kDefaultRarePoolCapacity);

  /// Appends the sample with only its `rare` annotations when it has any,
  /// evicting the oldest entry beyond capacity. Returns whether it was kept.
  bool offer(const PoolEntry& sample, ClassId rare);

  /// floor(size/2) distinct entries drawn uniformly, oldest first.
  std::vector<PoolEntry> inject(Rng& rng) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  const std::deque<PoolEntry>& entries() const { return entries_; }

  /// Current entries as an annotation document (one image record per entry,
  /// ids renumbered in pool order).
  Dataset dump() const;

 private:
  std::size_t capacity_;
  std::deque<PoolEntry> entries_;
};

}  // namespace instmix

#endif  // INSTMIX_RARE_POOL_HPP_
