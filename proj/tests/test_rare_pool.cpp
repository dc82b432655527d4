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

#include <set>

#include "doctest.h"
#include "instmix/rare_pool.hpp"

using namespace instmix;

namespace {

PoolEntry sample(long long image_id, std::vector<int> classes) {
  PoolEntry e{image_id, "img" + std::to_string(image_id) + ".png",
              std::make_shared<RgbImage>(4, 4), {}};
  long long id = image_id * 100;
  int x = 0;
  for (int c : classes) {
    BinaryMask m(4, 4);
    m.set(x++ % 4, 0);
    e.annotations.push_back(make_annotation(id++, image_id, ClassId(c), std::move(m)));
  }
  return e;
}

}  // namespace

TEST_CASE("identify_rare") {
  CHECK(identify_rare({{ClassId(3), 0.8}, {ClassId(4), 0.1}, {ClassId(5), 0.0963},
                       {ClassId(6), 0.0037}}) == ClassId(6));
  CHECK(identify_rare({{ClassId(2), 1.0}}) == ClassId(2));
  CHECK(identify_rare({{ClassId(1), 0.6}, {ClassId(7), 0.2}, {ClassId(8), 0.2}}) == ClassId(7));
  CHECK_THROWS(identify_rare(std::map<ClassId, double>{}));
  CHECK_THROWS(identify_rare(GroupShares{"vehicle", 0, std::nullopt}));
}

TEST_CASE("offer keeps only rare annotations and evicts FIFO") {
  RarePool pool;
  CHECK(pool.capacity() == 10);
  CHECK(pool.offer(sample(1, {6, 3, 6}), ClassId(6)));
  REQUIRE(pool.size() == 1);
  CHECK(pool.entries()[0].annotations.size() == 2);
  CHECK_FALSE(pool.offer(sample(2, {3, 4}), ClassId(6)));
  CHECK(pool.size() == 1);

  for (int i = 2; i <= 25; ++i) pool.offer(sample(i, {6}), ClassId(6));
  REQUIRE(pool.size() == 10);
  for (int k = 0; k < 10; ++k) CHECK(pool.entries()[k].image_id == 16 + k);
}

TEST_CASE("after k offers the pool holds the last min(k, N)") {
  for (std::size_t cap : {1u, 3u, 10u}) {
    for (int k = 0; k < 15; ++k) {
      RarePool pool(cap);
      for (int i = 1; i <= k; ++i) pool.offer(sample(i, {8}), ClassId(8));
      const std::size_t n = std::min<std::size_t>(k, cap);
      REQUIRE(pool.size() == n);
      for (std::size_t j = 0; j < n; ++j) REQUIRE(pool.entries()[j].image_id == long(k - n + j + 1));
    }
  }
}

TEST_CASE("inject sizes and uniqueness") {
  Rng rng(5);
  RarePool pool;
  CHECK(pool.inject(rng).empty());
  for (int i = 1; i <= 4; ++i) pool.offer(sample(i, {6}), ClassId(6));
  CHECK(pool.inject(rng).size() == 2);
  pool.offer(sample(5, {6}), ClassId(6));
  for (int t = 0; t < 100; ++t) {
    const auto got = pool.inject(rng);
    REQUIRE(got.size() == 2);
    std::set<long long> ids;
    for (const auto& e : got) ids.insert(e.image_id);
    REQUIRE(ids.size() == 2);
  }
  CHECK(pool.size() == 5);
}

TEST_CASE("inject selection frequency is one half per entry") {
  RarePool pool;
  for (int i = 1; i <= 4; ++i) pool.offer(sample(i, {6}), ClassId(6));
  std::map<long long, int> hits;
  Rng rng(2024);
  const int trials = 10000;
  for (int t = 0; t < trials; ++t)
    for (const auto& e : pool.inject(rng)) ++hits[e.image_id];
  for (int i = 1; i <= 4; ++i) CHECK(std::abs(hits[i] / double(trials) - 0.5) <= 0.05);
}

TEST_CASE("dump is a valid annotation document") {
  RarePool pool(3);
  pool.offer(sample(7, {7, 7}), ClassId(7));
  pool.offer(sample(7, {7}), ClassId(7));
  const Dataset ds = pool.dump();
  CHECK_NOTHROW(validate_dataset(ds));
  CHECK(ds.images.size() == 2);
  CHECK(ds.annotations.size() == 3);
}
