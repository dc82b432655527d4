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

#include <random>

#include "doctest.h"
#include "instmix/mask.hpp"
#include "test_util.hpp"

using namespace instmix;
using instmix::testing::mask_from_rows;
using instmix::testing::random_mask;

namespace {

// Naive pixel-loop oracles.
double naive_iou(const BinaryMask& a, const BinaryMask& b) {
  int inter = 0, uni = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      if (a.at(x, y) && b.at(x, y)) ++inter;
      if (a.at(x, y) || b.at(x, y)) ++uni;
    }
  return static_cast<double>(inter) / uni;
}

}  // namespace

TEST_CASE("rle_encode hand-enumerated cases") {
  CHECK(rle_encode(BinaryMask(2, 2)).counts == std::vector<std::uint64_t>{4});
  CHECK(rle_encode(mask_from_rows({"##", "##"})).counts == std::vector<std::uint64_t>{0, 4});
  // Column-major order visits (r0,c0),(r1,c0),(r0,c1),(r1,c1).
  const RleMask r = rle_encode(mask_from_rows({".#", ".."}));
  CHECK(r.counts == std::vector<std::uint64_t>{2, 1, 1});
  CHECK(r.height == 2);
  CHECK(r.width == 2);
}

TEST_CASE("rle_decode rejects malformed runs") {
  CHECK_THROWS_AS(rle_decode(RleMask{2, 2, {3}}), CodecError);
  CHECK_THROWS_AS(rle_decode(RleMask{2, 2, {2, 3}}), CodecError);
  CHECK_THROWS_AS(rle_decode(RleMask{2, 2, {2, 0, 2}}), CodecError);
  CHECK_THROWS_AS(rle_decode(RleMask{0, 2, {0}}), CodecError);
  CHECK(rle_decode(RleMask{2, 2, {0, 4}}).area() == 4);
}

TEST_CASE("rle round trip over random masks") {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<int> dim(1, 64);
  std::uniform_real_distribution<double> dens(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const BinaryMask m = random_mask(gen, dim(gen), dim(gen), dens(gen));
    const RleMask r = rle_encode(m);
    std::uint64_t sum = 0;
    for (std::size_t k = 0; k < r.counts.size(); ++k) {
      if (k > 0) REQUIRE(r.counts[k] > 0);
      sum += r.counts[k];
    }
    REQUIRE(sum == static_cast<std::uint64_t>(m.width()) * m.height());
    REQUIRE(rle_decode(r) == m);
  }
}

TEST_CASE("mask_iou") {
  const BinaryMask a = mask_from_rows({"##.", "..."});
  const BinaryMask b = mask_from_rows({".##", "..."});
  CHECK(mask_iou(a, a) == 1.0);
  CHECK(mask_iou(a, mask_from_rows({"...", "###"})) == 0.0);
  CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(mask_iou(a, BinaryMask(2, 2)), DimensionError);
  CHECK_THROWS_AS(mask_iou(BinaryMask(2, 2), BinaryMask(2, 2)), Error);

  std::mt19937_64 gen(5);
  for (int i = 0; i < 300; ++i) {
    const BinaryMask x = random_mask(gen, 9, 7, 0.4);
    const BinaryMask y = random_mask(gen, 9, 7, 0.4);
    if (x.empty() && y.empty()) continue;
    REQUIRE(mask_iou(x, y) == naive_iou(x, y));
    REQUIRE(mask_iou(x, y) == mask_iou(y, x));
  }
}

TEST_CASE("erase_overlap") {
  const BinaryMask rec = mask_from_rows({"##..", "##.."});
  SUBCASE("disjoint paste leaves recipient unchanged") {
    auto out = erase_overlap(rec, mask_from_rows({"...#", "...#"}), 1);
    REQUIRE(out);
    CHECK(*out == rec);
  }
  SUBCASE("covering paste drops") {
    CHECK_FALSE(erase_overlap(rec, mask_from_rows({"###.", "###."}), 1));
  }
  SUBCASE("partial overlap keeps the set difference") {
    auto out = erase_overlap(rec, mask_from_rows({".#..", ".#.."}), 1);
    REQUIRE(out);
    CHECK(*out == mask_from_rows({"#...", "#..."}));
    CHECK(out->area() == 2);
  }
  SUBCASE("remnant below threshold drops") {
    CHECK_FALSE(erase_overlap(rec, mask_from_rows({".#..", ".#.."}), 3));
  }
  CHECK_THROWS_AS(erase_overlap(rec, BinaryMask(3, 2), 1), DimensionError);
}

TEST_CASE("mask_stats") {
  BinaryMask m(8, 8);
  m.set(4, 3);
  auto s = mask_stats(m);
  CHECK(s.area == 1);
  REQUIRE(s.bbox);
  CHECK(*s.bbox == BBox{4, 3, 1, 1});

  s = mask_stats(BinaryMask(5, 5));
  CHECK(s.area == 0);
  CHECK_FALSE(s.bbox);

  s = mask_stats(box_mask(6, 6, BBox{1, 1, 3, 2}));
  CHECK(s.area == 6);
  CHECK(*s.bbox == BBox{1, 1, 3, 2});
}

TEST_CASE("resize_nearest keeps identity and scales blocks") {
  const BinaryMask m = mask_from_rows({"#.", ".#"});
  CHECK(resize_nearest(m, 2, 2) == m);
  const BinaryMask big = resize_nearest(m, 4, 4);
  CHECK(big == mask_from_rows({"##..", "##..", "..##", "..##"}));
}
