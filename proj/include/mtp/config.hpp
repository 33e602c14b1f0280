// Copyright 2026 The mtpsim Authors
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

#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mtp/common.hpp"

namespace mtp {

struct ConfigError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

/**
 * Minimal TOML-subset reader: [sections], [[arrays of tables]], and
 * key = value lines with strings, booleans, numbers, and flat arrays.
 * Keys flatten to "section.key" ("section.<index>.key" for table arrays).
 */
class ConfigFile
{
public:
  struct Value
  {
    enum class Kind { Boolean, Number, String, Array };
    Kind kind = Kind::String;
    bool boolean = false;
    double number = 0.0;
    std::string text;
    std::vector<Value> items;
  };

  static ConfigFile parse_file(const std::string & path)
  {
    return parse_string(read_file(path), path);
  }

  static ConfigFile parse_string(const std::string & text, const std::string & name = "<config>")
  {
    ConfigFile cfg;
    cfg.name_ = name;
    cfg.digest_ = fnv1a_hex(text);

    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string stripped = strip(line);
      if (stripped.empty()) continue;
      if (stripped.front() == '[') {
        if (stripped.size() > 3 && stripped.substr(0, 2) == "[[" &&
            stripped.substr(stripped.size() - 2) == "]]") {
          const std::string base = trim(stripped.substr(2, stripped.size() - 4));
          if (base.empty()) cfg.fail(line_no, "empty table-array name");
          const int index = cfg.table_counts_[base]++;
          section = base + "." + std::to_string(index);
        } else if (stripped.back() == ']') {
          section = trim(stripped.substr(1, stripped.size() - 2));
          if (section.empty()) cfg.fail(line_no, "empty section name");
        } else {
          cfg.fail(line_no, "malformed section header");
        }
        continue;
      }
      const auto eq = stripped.find('=');
      if (eq == std::string::npos) cfg.fail(line_no, "expected key = value");
      const std::string key = trim(stripped.substr(0, eq));
      const std::string value_text = trim(stripped.substr(eq + 1));
      if (key.empty()) cfg.fail(line_no, "empty key");
      if (value_text.empty()) cfg.fail(line_no, "empty value for key '" + key + "'");
      const std::string full_key = section.empty() ? key : section + "." + key;
      if (cfg.values_.count(full_key)) cfg.fail(line_no, "duplicate key '" + full_key + "'");
      cfg.values_[full_key] = cfg.parse_value(value_text, line_no);
    }
    return cfg;
  }

  bool has(const std::string & key) const { return values_.count(key) > 0; }

  int table_count(const std::string & base) const
  {
    const auto it = table_counts_.find(base);
    return it == table_counts_.end() ? 0 : it->second;
  }

  double get_double(const std::string & key, double fallback) const
  {
    const Value * v = find(key);
    if (v == nullptr) return fallback;
    return as_number(*v, key);
  }

  std::int64_t get_int(const std::string & key, std::int64_t fallback) const
  {
    const Value * v = find(key);
    if (v == nullptr) return fallback;
    const double d = as_number(*v, key);
    const auto i = static_cast<std::int64_t>(d);
    if (static_cast<double>(i) != d) {
      throw ConfigError(name_ + ": key '" + key + "' is not an integer");
    }
    return i;
  }

  bool get_bool(const std::string & key, bool fallback) const
  {
    const Value * v = find(key);
    if (v == nullptr) return fallback;
    if (v->kind != Value::Kind::Boolean) {
      throw ConfigError(name_ + ": key '" + key + "' is not a boolean");
    }
    return v->boolean;
  }

  std::string get_string(const std::string & key, const std::string & fallback) const
  {
    const Value * v = find(key);
    if (v == nullptr) return fallback;
    if (v->kind != Value::Kind::String) {
      throw ConfigError(name_ + ": key '" + key + "' is not a string");
    }
    return v->text;
  }

  std::string require_string(const std::string & key) const
  {
    if (!has(key)) throw ConfigError(name_ + ": missing required key '" + key + "'");
    return get_string(key, "");
  }

  double require_double(const std::string & key) const
  {
    if (!has(key)) throw ConfigError(name_ + ": missing required key '" + key + "'");
    return get_double(key, 0.0);
  }

  std::vector<std::string> get_string_array(const std::string & key,
                                            const std::vector<std::string> & fallback) const
  {
    const Value * v = find(key);
    if (v == nullptr) return fallback;
    if (v->kind != Value::Kind::Array) {
      throw ConfigError(name_ + ": key '" + key + "' is not an array");
    }
    std::vector<std::string> out;
    for (const auto & item : v->items) {
      if (item.kind != Value::Kind::String) {
        throw ConfigError(name_ + ": key '" + key + "' must hold strings");
      }
      out.push_back(item.text);
    }
    return out;
  }

  std::vector<int> get_int_array(const std::string & key, const std::vector<int> & fallback) const
  {
    const Value * v = find(key);
    if (v == nullptr) return fallback;
    if (v->kind != Value::Kind::Array) {
      throw ConfigError(name_ + ": key '" + key + "' is not an array");
    }
    std::vector<int> out;
    for (const auto & item : v->items) out.push_back(static_cast<int>(as_number(item, key)));
    return out;
  }

  const std::string & digest() const { return digest_; }
  const std::string & name() const { return name_; }

private:
  [[noreturn]] void fail(int line_no, const std::string & message) const
  {
    throw ConfigError(name_ + " line " + std::to_string(line_no) + ": " + message);
  }

  const Value * find(const std::string & key) const
  {
    const auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
  }

  double as_number(const Value & v, const std::string & key) const
  {
    if (v.kind != Value::Kind::Number) {
      throw ConfigError(name_ + ": key '" + key + "' is not a number");
    }
    return v.number;
  }

  static std::string trim(const std::string & s)
  {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
  }

  /// Trim and drop a trailing comment (a '#' outside quotes).
  static std::string strip(const std::string & line)
  {
    std::string out;
    bool in_string = false;
    for (char c : line) {
      if (c == '"') in_string = !in_string;
      if (c == '#' && !in_string) break;
      out.push_back(c);
    }
    return trim(out);
  }

  Value parse_value(const std::string & text, int line_no) const
  {
    Value v;
    if (text.front() == '"') {
      if (text.size() < 2 || text.back() != '"') fail(line_no, "unterminated string");
      v.kind = Value::Kind::String;
      v.text = text.substr(1, text.size() - 2);
      return v;
    }
    if (text == "true" || text == "false") {
      v.kind = Value::Kind::Boolean;
      v.boolean = text == "true";
      return v;
    }
    if (text.front() == '[') {
      if (text.back() != ']') fail(line_no, "unterminated array");
      v.kind = Value::Kind::Array;
      const std::string body = trim(text.substr(1, text.size() - 2));
      if (body.empty()) return v;
      std::string item;
      bool in_string = false;
      for (char c : body) {
        if (c == '"') in_string = !in_string;
        if (c == ',' && !in_string) {
          v.items.push_back(parse_value(trim(item), line_no));
          item.clear();
        } else {
          item.push_back(c);
        }
      }
      v.items.push_back(parse_value(trim(item), line_no));
      return v;
    }
    try {
      std::size_t used = 0;
      v.number = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing characters");
      v.kind = Value::Kind::Number;
      return v;
    } catch (const std::exception &) {
      fail(line_no, "cannot parse value '" + text + "'");
    }
  }

  std::string name_;
  std::string digest_;
  std::map<std::string, Value> values_;
  std::map<std::string, int> table_counts_;
};

}  // namespace mtp
