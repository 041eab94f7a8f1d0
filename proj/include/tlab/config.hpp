// Copyright 2026 The tlab Authors.
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

// Line-oriented configuration files:
//
//   # comment
//   [train]
//   lr = 0.001
//   epochs = 30
//
// Keys are addressed as "section.key" (bare "key" before any section).
// Consumers bind every key they understand; anything left over is an error.

#ifndef TLAB_CONFIG_HPP_
#define TLAB_CONFIG_HPP_

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "tlab/common.hpp"

namespace tlab {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& is, const std::string& origin = "<config>") {
    KeyValueConfig c;
    std::string section;
    std::string raw;
    int line_no = 0;
    while (std::getline(is, raw)) {
      ++line_no;
      const auto hash = raw.find('#');
      const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      const std::string where = origin + ":" + std::to_string(line_no);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
        section = detail::trim(line.substr(1, line.size() - 2));
        if (section.empty()) throw ConfigError(where + ": empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
      const std::string key = detail::trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError(where + ": empty key");
      const std::string full = section.empty() ? key : section + "." + key;
      if (c.values_.count(full) != 0) throw ConfigError(where + ": duplicate key '" + full + "'");
      c.values_[full] = detail::trim(line.substr(eq + 1));
    }
    return c;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    return parse(is, path);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Applies f to the value of `key` when present and marks it consumed.
  void bind(const std::string& key, const std::function<void(const std::string&)>& f) {
    auto it = values_.find(key);
    if (it == values_.end()) return;
    consumed_.insert(key);
    try {
      f(it->second);
    } catch (const ConfigError& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }

  /// Throws if any key was never bound.
  void reject_unknown() const {
    std::string bad;
    for (const auto& [k, v] : values_) {
      if (consumed_.count(k) == 0) bad += (bad.empty() ? "" : ", ") + k;
    }
    if (!bad.empty()) throw ConfigError("unknown config key(s): " + bad);
  }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
};

template <class T>
T parse_number(const std::string& s) {
  T v{};
  const std::string t = detail::trim(s);
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw ConfigError("cannot parse '" + s + "' as a number");
  }
  return v;
}

inline bool parse_bool(const std::string& s) {
  const std::string t = detail::trim(s);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("cannot parse '" + s + "' as a boolean");
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) {
    item = detail::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace tlab

#endif  // TLAB_CONFIG_HPP_
