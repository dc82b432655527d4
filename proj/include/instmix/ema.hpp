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

#ifndef INSTMIX_EMA_HPP_
#define INSTMIX_EMA_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "instmix/common.hpp"

namespace instmix {

/// Named real-valued parameter arrays. Names are unique by construction.
class ParameterSet {
 public:
  void set(const std::string& name, std::vector<double> values);
  const std::vector<double>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const std::map<std::string, std::vector<double>>& entries() const { return entries_; }

  bool operator==(const ParameterSet&) const = default;

 private:
  std::map<std::string, std::vector<double>> entries_;
};

inline constexpr double kDefaultEmaAlpha = 0.999;

struct EmaConfig {
  double alpha = kDefaultEmaAlpha;

  void validate() const;
};

ParameterSet init_from(const ParameterSet& student);

/// t' = alpha*t + (1-alpha)*s per value. Throws SchemaError when names or
/// lengths differ.
ParameterSet ema_update(const ParameterSet& teacher, const ParameterSet& student,
                        const EmaConfig& cfg);

/// Binary container: per entry, in name order, a u32 name length, the name
/// bytes, a u64 value count and the values as f64, all little-endian.
std::string encode_parameters(const ParameterSet& params);
ParameterSet decode_parameters(const std::string& bytes);
void save_parameters(const std::filesystem::path& path, const ParameterSet& params);
ParameterSet load_parameters(const std::filesystem::path& path);

}  // namespace instmix

#endif  // INSTMIX_EMA_HPP_
