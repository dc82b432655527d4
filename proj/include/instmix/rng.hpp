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

#ifndef INSTMIX_RNG_HPP_
#define INSTMIX_RNG_HPP_

#include <cstdint>
#include <random>
#include <vector>

namespace instmix {

// Seeded generator whose derived draws are identical on every standard
// library: only the raw mt19937_64 stream is used, never the
// implementation-defined std:: distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Uniform real in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Inclusive integer range.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(uniform_index(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// k distinct indices from [0, n), uniformly, returned in ascending order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  /// Independent child stream, e.g. for one iteration or one image.
  Rng fork(std::uint64_t salt);

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finaliser; used to derive well-mixed seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace instmix

#endif  // INSTMIX_RNG_HPP_
