/* Copyright 2026 The tdsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tdsim/errors.hpp"
#include "tdsim/workload.hpp"

namespace tdsim {

// Values of the TOML subset used by run configs: strings, integers, floats,
// booleans and single-line arrays of those.
struct ConfigValue {
  using Array = std::vector<ConfigValue>;
  std::variant<bool, int64_t, double, std::string, Array> v;
  int line = 0;

  bool is_string() const { return std::holds_alternative<std::string>(v); }
  bool is_int() const { return std::holds_alternative<int64_t>(v); }
  bool is_number() const { return is_int() || std::holds_alternative<double>(v); }
  bool is_bool() const { return std::holds_alternative<bool>(v); }
  bool is_array() const { return std::holds_alternative<Array>(v); }
};

// Flat map from "section.key" to value; keys outside any section have no
// prefix.
class ConfigDoc {
 public:
  void set(const std::string& key, ConfigValue value) {
    const int line = value.line;
    if (!values_.emplace(key, std::move(value)).second) {
      throw ParseError("duplicate key '" + key + "'", line);
    }
  }

  // Overwrites silently; used for command-line overrides.
  void assign(const std::string& key, ConfigValue value) { values_[key] = std::move(value); }
  void erase(const std::string& key) { values_.erase(key); }
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, ConfigValue>& values() const { return values_; }

  const ConfigValue* find(const std::string& key) const {
    auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto* v = find(key);
    if (!v) return fallback;
    if (!v->is_string()) throw type_error(key, *v, "a string");
    return std::get<std::string>(v->v);
  }

  int64_t get_int(const std::string& key, int64_t fallback) const {
    const auto* v = find(key);
    if (!v) return fallback;
    if (!v->is_int()) throw type_error(key, *v, "an integer");
    return std::get<int64_t>(v->v);
  }

  double get_double(const std::string& key, double fallback) const {
    const auto* v = find(key);
    if (!v) return fallback;
    if (v->is_int()) return static_cast<double>(std::get<int64_t>(v->v));
    if (!v->is_number()) throw type_error(key, *v, "a number");
    return std::get<double>(v->v);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto* v = find(key);
    if (!v) return fallback;
    if (!v->is_bool()) throw type_error(key, *v, "a boolean");
    return std::get<bool>(v->v);
  }

  std::vector<int64_t> get_int_array(const std::string& key,
                                     std::vector<int64_t> fallback) const {
    const auto* v = find(key);
    if (!v) return fallback;
    if (!v->is_array()) throw type_error(key, *v, "an array of integers");
    std::vector<int64_t> out;
    for (const auto& e : std::get<ConfigValue::Array>(v->v)) {
      if (!e.is_int()) throw type_error(key, *v, "an array of integers");
      out.push_back(std::get<int64_t>(e.v));
    }
    return out;
  }

 private:
  static ConfigError type_error(const std::string& key, const ConfigValue& v, const char* want) {
    return ConfigError("line " + std::to_string(v.line) + ": '" + key + "' must be " + want);
  }

  std::map<std::string, ConfigValue> values_;
};

namespace detail {

class TomlLineParser {
 public:
  TomlLineParser(std::string_view text, int line) : s_(text), line_(line) {}

  ConfigValue value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    ConfigValue out;
    out.line = line_;
    const char c = s_[pos_];
    if (c == '"') {
      out.v = string();
    } else if (c == '[') {
      ++pos_;
      ConfigValue::Array arr;
      skip_ws();
      if (peek() == ']') {
        ++pos_;
      } else {
        for (;;) {
          arr.push_back(value());
          skip_ws();
          if (peek() == ',') {
            ++pos_;
            skip_ws();
            if (peek() == ']') {
              ++pos_;
              break;
            }
            continue;
          }
          if (peek() == ']') {
            ++pos_;
            break;
          }
          fail("expected ',' or ']' in array");
        }
      }
      out.v = std::move(arr);
    } else {
      out.v = scalar();
    }
    return out;
  }

  void expect_end() {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] != '#') fail("unexpected trailing text");
  }

 private:
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, line_); }

  std::string string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) fail("unterminated escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(std::string("unknown escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  std::variant<bool, int64_t, double, std::string, ConfigValue::Array> scalar() {
    size_t end = pos_;
    while (end < s_.size() && s_[end] != ',' && s_[end] != ']' && s_[end] != ' ' &&
           s_[end] != '\t' && s_[end] != '#') {
      ++end;
    }
    std::string tok(s_.substr(pos_, end - pos_));
    pos_ = end;
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string digits;
    for (char c : tok) {
      if (c != '_') digits.push_back(c);
    }
    const bool is_float = digits.find_first_of(".eE") != std::string::npos ||
                          digits == "inf" || digits == "nan";
    const char* b = digits.data() + (!digits.empty() && digits[0] == '+' ? 1 : 0);
    const char* e = digits.data() + digits.size();
    if (!is_float) {
      int64_t v = 0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec == std::errc() && p == e && b != e) return v;
    } else {
      double v = 0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec == std::errc() && p == e && b != e) return v;
    }
    fail("cannot parse value '" + tok + "'");
  }

  std::string_view s_;
  int line_;
  size_t pos_ = 0;
};

inline bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) {
      return false;
    }
  }
  return true;
}

}  // namespace detail

inline ConfigDoc parse_config(std::istream& in) {
  ConfigDoc doc;
  std::string section;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = detail::trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '[') {
      const auto close = line.find(']');
      if (close == std::string_view::npos) throw ParseError("unterminated section header", line_no);
      section = std::string(detail::trim(line.substr(1, close - 1)));
      if (!detail::valid_key(section)) throw ParseError("bad section name", line_no);
      std::string_view rest = line.substr(close + 1);
      rest.remove_prefix(std::min(rest.find_first_not_of(" \t"), rest.size()));
      if (!rest.empty() && rest[0] != '#') throw ParseError("text after section header", line_no);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no);
    std::string key(detail::trim(line.substr(0, eq)));
    if (!detail::valid_key(key)) throw ParseError("bad key '" + key + "'", line_no);
    detail::TomlLineParser p(line.substr(eq + 1), line_no);
    ConfigValue v = p.value();
    p.expect_end();
    doc.set(section.empty() ? key : section + "." + key, std::move(v));
  }
  return doc;
}

inline ConfigDoc parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ConfigDoc load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in);
}

inline std::string quote_toml(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out.push_back(c);
    }
  }
  return out + "\"";
}

}  // namespace tdsim
