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

#ifndef INSTMIX_COMMON_HPP_
#define INSTMIX_COMMON_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace instmix {

// Error hierarchy. Every failure in the library is reported by throwing one
// of these; callers that need to distinguish categories catch the subclass.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ReferenceError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class CodecError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class RasterizationError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kNumClasses = 8;

// One of the eight instance classes. Values are fixed:
// 1=person 2=rider 3=car 4=truck 5=bus 6=train 7=motorcycle 8=bicycle.
class ClassId {
 public:
  constexpr ClassId() = default;
  constexpr explicit ClassId(int v) : value_(v) {
    if (v < 1 || v > kNumClasses) {
      throw ValidationError("class id out of range 1..8: " + std::to_string(v));
    }
  }

  constexpr int value() const { return value_; }
  constexpr std::size_t index() const { return static_cast<std::size_t>(value_ - 1); }

  friend constexpr auto operator<=>(ClassId, ClassId) = default;

  static constexpr bool valid(long long v) { return v >= 1 && v <= kNumClasses; }

 private:
  int value_ = 1;
};

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "person", "rider", "car", "truck", "bus", "train", "motorcycle", "bicycle"};

inline std::string_view class_name(ClassId c) { return kClassNames[c.index()]; }

std::optional<ClassId> class_from_name(std::string_view name);

// Named subset of classes trained by one mixing module.
struct CategoryGroup {
  std::string name;
  std::vector<ClassId> classes;

  bool contains(ClassId c) const;
  bool operator==(const CategoryGroup&) const = default;
};

CategoryGroup human_cycle_group();
CategoryGroup vehicle_group();
CategoryGroup all_classes_group();

// Resolves "human-cycle", "vehicle" or "all".
CategoryGroup group_by_name(std::string_view name);

// Throws ValidationError if a group is empty or two groups share a class.
void validate_grouping(const std::vector<CategoryGroup>& grouping);

}  // namespace instmix

#endif  // INSTMIX_COMMON_HPP_
