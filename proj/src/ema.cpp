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

#include "instmix/ema.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace instmix {

void ParameterSet::set(const std::string& name, std::vector<double> values) {
  if (name.empty()) throw ValidationError("parameter name must be non-empty");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ValidationError("parameter '" + name + "'[" + std::to_string(i) + "] is not finite");
    }
  }
  entries_[name] = std::move(values);
}

const std::vector<double>& ParameterSet::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw SchemaError("no parameter named '" + name + "'");
  return it->second;
}

void EmaConfig::validate() const {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw ValidationError("EMA alpha must lie in [0,1), got " + std::to_string(alpha));
  }
}

ParameterSet init_from(const ParameterSet& student) { return student; }

ParameterSet ema_update(const ParameterSet& teacher, const ParameterSet& student,
                        const EmaConfig& cfg) {
  cfg.validate();
  if (teacher.size() != student.size()) {
    throw SchemaError("teacher has " + std::to_string(teacher.size()) + " entries, student " +
                      std::to_string(student.size()));
  }
  ParameterSet out;
  for (const auto& [name, t] : teacher.entries()) {
    if (!student.contains(name)) throw SchemaError("student lacks parameter '" + name + "'");
    const auto& s = student.get(name);
    if (s.size() != t.size()) {
      throw SchemaError("parameter '" + name + "' has length " + std::to_string(t.size()) +
                        " in teacher, " + std::to_string(s.size()) + " in student");
    }
    std::vector<double> v(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) v[i] = cfg.alpha * t[i] + (1.0 - cfg.alpha) * s[i];
    out.set(name, std::move(v));
  }
  return out;
}

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (in.size() - pos < sizeof(T)) {
    throw ParseError("parameter file truncated at byte " + std::to_string(pos));
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string encode_parameters(const ParameterSet& params) {
  std::string out;
  for (const auto& [name, values] : params.entries()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint64_t>(out, values.size());
    for (double v : values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ParameterSet decode_parameters(const std::string& bytes) {
  ParameterSet params;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto name_len = get_le<std::uint32_t>(bytes, pos);
    if (bytes.size() - pos < name_len) {
      throw ParseError("parameter file truncated in a name at byte " + std::to_string(pos));
    }
    std::string name = bytes.substr(pos, name_len);
    pos += name_len;
    if (params.contains(name)) throw ParseError("duplicate parameter '" + name + "'");
    const auto count = get_le<std::uint64_t>(bytes, pos);
    if ((bytes.size() - pos) / 8 < count) {
      throw ParseError("parameter '" + name + "' claims " + std::to_string(count) +
                       " values beyond the end of the file");
    }
    std::vector<double> values(count);
    for (auto& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
    params.set(name, std::move(values));
  }
  return params;
}

void save_parameters(const std::filesystem::path& path, const ParameterSet& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::string bytes = encode_parameters(params);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

ParameterSet load_parameters(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_parameters(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace instmix
