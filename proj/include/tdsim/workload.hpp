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
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "tdsim/errors.hpp"
#include "tdsim/rng.hpp"

namespace tdsim {

// One offline inference job. Arrival is always 0 for generated workloads.
struct Request {
  int64_t id = 0;
  int32_t input_len = 1;
  int32_t true_output_len = 1;
  int64_t arrival = 0;

  friend bool operator==(const Request&, const Request&) = default;
};

// Requests in submission order. Every policy consumes this order unchanged.
struct RequestSet {
  std::vector<Request> requests;
  std::optional<uint64_t> seed;  // absent for ingested traces

  size_t size() const { return requests.size(); }
  bool empty() const { return requests.empty(); }

  // Identity is the request list; the seed is provenance only.
  friend bool operator==(const RequestSet& a, const RequestSet& b) {
    return a.requests == b.requests;
  }
};

inline void validate(const RequestSet& set) {
  std::unordered_set<int64_t> seen;
  seen.reserve(set.size());
  for (const auto& r : set.requests) {
    if (r.input_len < 1) {
      throw ValidationError("request " + std::to_string(r.id) +
                            ": input_len must be >= 1");
    }
    if (r.true_output_len < 1) {
      throw ValidationError("request " + std::to_string(r.id) +
                            ": output_len must be >= 1");
    }
    if (!seen.insert(r.id).second) {
      throw ValidationError("duplicate request id " + std::to_string(r.id));
    }
  }
}

// Length distribution. Samples outside [1, max_len] are clamped, never
// rejected, so a fixed seed always yields exactly `count` draws.
struct LengthDist {
  enum class Kind { kConstant, kUniform, kLogNormal };

  Kind kind = Kind::kConstant;
  double a = 1;  // constant value | uniform lo | lognormal mu
  double b = 0;  // uniform hi | lognormal sigma
  int32_t max_len = 1024;

  static LengthDist constant(int32_t value, int32_t max_len = 1024) {
    return {Kind::kConstant, static_cast<double>(value), 0, max_len};
  }
  static LengthDist uniform(int32_t lo, int32_t hi, int32_t max_len = 1024) {
    return {Kind::kUniform, static_cast<double>(lo), static_cast<double>(hi),
            max_len};
  }
  static LengthDist lognormal(double mu, double sigma, int32_t max_len = 1024) {
    return {Kind::kLogNormal, mu, sigma, max_len};
  }

  void validate() const {
    if (max_len < 1) throw ConfigError("length distribution: max_len must be >= 1");
    switch (kind) {
      case Kind::kConstant:
        if (a < 1) throw ConfigError("constant length must be >= 1");
        break;
      case Kind::kUniform:
        if (a < 1 || b < a) {
          throw ConfigError("uniform(lo,hi) requires 1 <= lo <= hi");
        }
        break;
      case Kind::kLogNormal:
        if (!(b > 0) || !std::isfinite(a) || !std::isfinite(b)) {
          throw ConfigError("lognormal(mu,sigma) requires finite mu and sigma > 0");
        }
        break;
    }
  }

  int32_t sample(Rng& rng) const {
    double v = 0;
    switch (kind) {
      case Kind::kConstant:
        v = a;
        break;
      case Kind::kUniform:
        v = static_cast<double>(rng.uniform_int(static_cast<int64_t>(a),
                                                static_cast<int64_t>(b)));
        break;
      case Kind::kLogNormal:
        v = std::exp(a + b * rng.normal());
        break;
    }
    v = std::clamp(v, 1.0, static_cast<double>(max_len));
    return static_cast<int32_t>(std::llround(v));
  }

  // "constant(8)", "uniform(1,1024)", "lognormal(5.0,1.0)".
  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind) {
      case Kind::kConstant:
        os << "constant(" << a << ")";
        break;
      case Kind::kUniform:
        os << "uniform(" << a << "," << b << ")";
        break;
      case Kind::kLogNormal:
        os << "lognormal(" << a << "," << b << ")";
        break;
    }
    return os.str();
  }

  static LengthDist parse(std::string_view text, int32_t max_len = 1024) {
    const auto open = text.find('(');
    const auto close = text.rfind(')');
    if (open == std::string_view::npos || close == std::string_view::npos ||
        close < open) {
      throw ConfigError("bad length distribution '" + std::string(text) + "'");
    }
    const std::string name(text.substr(0, open));
    std::vector<double> args;
    std::string inner(text.substr(open + 1, close - open - 1));
    std::stringstream ss(inner);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        size_t used = 0;
        args.push_back(std::stod(item, &used));
      } catch (const std::exception&) {
        throw ConfigError("bad length distribution argument '" + item + "'");
      }
    }
    LengthDist d;
    if (name == "constant" && args.size() == 1) {
      d = constant(static_cast<int32_t>(args[0]), max_len);
    } else if (name == "uniform" && args.size() == 2) {
      d = uniform(static_cast<int32_t>(args[0]), static_cast<int32_t>(args[1]),
                  max_len);
    } else if (name == "lognormal" && args.size() == 2) {
      d = lognormal(args[0], args[1], max_len);
    } else {
      throw ConfigError("unknown length distribution '" + std::string(text) + "'");
    }
    d.validate();
    return d;
  }
};

inline RequestSet generate_workload(int64_t count, const LengthDist& input,
                                    const LengthDist& output, uint64_t seed) {
  if (count < 1) throw ConfigError("workload count must be >= 1");
  input.validate();
  output.validate();
  Rng rng(seed);
  RequestSet set;
  set.seed = seed;
  set.requests.reserve(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    Request r;
    r.id = i;
    r.input_len = input.sample(rng);
    r.true_output_len = output.sample(rng);
    set.requests.push_back(r);
  }
  return set;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline int64_t parse_int_field(std::string_view field, const char* name, int line) {
  field = trim(field);
  int64_t value = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (field.empty() || ec != std::errc() || ptr != end) {
    throw ParseError(std::string("bad ") + name + " '" + std::string(field) + "'",
                     line);
  }
  return value;
}

}  // namespace detail

// Parses `id,input_len,output_len` records; `#` lines and blank lines are
// skipped.
inline RequestSet parse_trace(std::istream& in) {
  RequestSet set;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string_view> fields;
    size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 3) {
      throw ParseError("expected 3 fields (id,input_len,output_len), got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    Request r;
    r.id = detail::parse_int_field(fields[0], "id", line_no);
    const auto in_len = detail::parse_int_field(fields[1], "input_len", line_no);
    const auto out_len = detail::parse_int_field(fields[2], "output_len", line_no);
    if (in_len > INT32_MAX || out_len > INT32_MAX) {
      throw ParseError("length out of range", line_no);
    }
    r.input_len = static_cast<int32_t>(in_len);
    r.true_output_len = static_cast<int32_t>(out_len);
    set.requests.push_back(r);
  }
  validate(set);
  return set;
}

inline RequestSet load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace '" + path + "'");
  return parse_trace(in);
}

inline void write_trace(const RequestSet& set, std::ostream& out) {
  out << "# id,input_len,output_len\n";
  if (set.seed) out << "# seed=" << *set.seed << "\n";
  for (const auto& r : set.requests) {
    out << r.id << ',' << r.input_len << ',' << r.true_output_len << '\n';
  }
}

inline void save_trace(const RequestSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write trace '" + path + "'");
  write_trace(set, out);
}

}  // namespace tdsim
