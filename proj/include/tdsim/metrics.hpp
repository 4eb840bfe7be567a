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
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "tdsim/engine.hpp"
#include "tdsim/errors.hpp"

namespace tdsim {

inline std::string format_fixed(double v, int decimals = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

inline void write_summary(const RunResult& r, std::ostream& out) {
  out << "policy=" << to_string(r.policy) << '\n'
      << "devices=" << r.num_devices << '\n'
      << "stages=" << r.num_stages << '\n'
      << "requests=" << r.num_requests << '\n'
      << "makespan_ns=" << r.makespan_ns << '\n'
      << "throughput_tok_s=" << format_fixed(r.throughput) << '\n'
      << "bubble_ratio=" << format_fixed(r.bubble_ratio) << '\n'
      << "input_tokens=" << r.total_input_tokens << '\n'
      << "generated_tokens=" << r.total_generated_tokens << '\n'
      << "kv_capacity_tokens=" << r.kv_capacity_tokens << '\n'
      << "prefill_batches=" << r.counters.prefill_batches << '\n'
      << "decode_steps=" << r.counters.decode_steps << '\n'
      << "hybrid_batches=" << r.counters.hybrid_batches << '\n'
      << "evictions=" << r.counters.evictions << '\n'
      << "recomputed_tokens=" << r.counters.recomputed_tokens << '\n'
      << "withheld=" << r.counters.withheld << '\n'
      << "refilled=" << r.counters.refilled << '\n'
      << "phase_switches=" << r.counters.phase_switches << '\n'
      << "peak_kv_tokens=" << r.counters.peak_kv_tokens << '\n';
  for (size_t s = 0; s < r.stage_busy_ns.size(); ++s) {
    out << "stage" << s << "_busy_ns=" << r.stage_busy_ns[s] << '\n'
        << "stage" << s << "_idle_ns=" << r.stage_idle_ns[s] << '\n';
  }
}

// Chrome trace mapping: "X" duration events, ts/dur in microseconds,
// pid = stage, tid 0 = compute, tid 1 = link to the next stage. Exact
// nanosecond values ride along in args.
inline nlohmann::json trace_json(const RunResult& r) {
  using nlohmann::json;
  json events = json::array();
  for (const auto& e : r.trace) {
    events.push_back({
        {"name", std::string(to_string(e.batch_kind)) + " b" + std::to_string(e.batch_id)},
        {"cat", e.lane == 0 ? "compute" : "transfer"},
        {"ph", "X"},
        {"ts", static_cast<double>(e.start_ns) / 1000.0},
        {"dur", static_cast<double>(e.dur_ns) / 1000.0},
        {"pid", e.stage},
        {"tid", e.lane},
        {"args",
         {{"batch", e.batch_id},
          {"kind", to_string(e.batch_kind)},
          {"phase", to_string(e.phase)},
          {"start_ns", e.start_ns},
          {"dur_ns", e.dur_ns},
          {"tokens", e.tokens}}},
    });
  }
  json phases = json::array();
  for (const auto& p : r.phases) {
    phases.push_back({{"phase", to_string(p.phase)}, {"start_ns", p.start_ns}, {"end_ns", p.end_ns}});
  }
  return json{{"traceEvents", events},
              {"displayTimeUnit", "ms"},
              {"otherData",
               {{"policy", to_string(r.policy)},
                {"num_stages", r.num_stages},
                {"makespan_ns", r.makespan_ns},
                {"phases", phases}}}};
}

inline void export_trace(const RunResult& r, std::ostream& out) { out << trace_json(r).dump(1) << '\n'; }

inline void export_trace(const RunResult& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write trace '" + path + "'");
  export_trace(r, out);
  if (!out) throw ConfigError("failed writing trace '" + path + "'");
}

struct TraceDoc {
  std::vector<TraceEvent> events;
  int num_stages = 0;
  int64_t makespan_ns = 0;
};

inline Phase parse_phase(const std::string& s) {
  if (s == "prefill") return Phase::kPrefill;
  if (s == "decode") return Phase::kDecode;
  if (s == "mixed") return Phase::kMixed;
  throw ParseError("unknown phase '" + s + "'", 0);
}

inline BatchKind parse_batch_kind(const std::string& s) {
  if (s == "prefill") return BatchKind::kPrefill;
  if (s == "decode") return BatchKind::kDecodeStep;
  if (s == "hybrid") return BatchKind::kHybridChunk;
  throw ParseError("unknown batch kind '" + s + "'", 0);
}

inline TraceDoc import_trace(std::istream& in) {
  TraceDoc doc;
  try {
    const auto j = nlohmann::json::parse(in);
    doc.num_stages = j.at("otherData").at("num_stages").get<int>();
    doc.makespan_ns = j.at("otherData").at("makespan_ns").get<int64_t>();
    for (const auto& e : j.at("traceEvents")) {
      const auto& a = e.at("args");
      doc.events.push_back(TraceEvent{e.at("pid").get<int>(), e.at("tid").get<int>(),
                                      a.at("batch").get<int64_t>(),
                                      parse_batch_kind(a.at("kind").get<std::string>()),
                                      parse_phase(a.at("phase").get<std::string>()),
                                      a.at("start_ns").get<int64_t>(),
                                      a.at("dur_ns").get<int64_t>(),
                                      a.at("tokens").get<int64_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad trace document: ") + e.what(), 0);
  }
  return doc;
}

// Idle compute time over W x makespan, from trace events alone.
inline double bubble_ratio(const TraceDoc& doc) {
  if (doc.makespan_ns <= 0 || doc.num_stages <= 0) return 0;
  int64_t busy = 0;
  for (const auto& e : doc.events) {
    if (e.lane == 0) busy += e.dur_ns;
  }
  const int64_t idle = static_cast<int64_t>(doc.num_stages) * doc.makespan_ns - busy;
  return static_cast<double>(idle) /
         (static_cast<double>(doc.num_stages) * static_cast<double>(doc.makespan_ns));
}

struct TimelinePoint {
  int64_t time_ns = 0;
  double ratio = 0;
  Phase phase = Phase::kPrefill;
};

// KV occupancy sampled every interval (default makespan / 1000) as a step
// function of the ledger samples.
inline std::vector<TimelinePoint> kv_timeline(const RunResult& r, int64_t interval_ns = 0) {
  std::vector<TimelinePoint> out;
  if (r.makespan_ns <= 0 || r.kv_capacity_tokens <= 0) return out;
  if (interval_ns <= 0) interval_ns = std::max<int64_t>(1, r.makespan_ns / 1000);
  size_t si = 0;
  size_t pi = 0;
  int64_t tokens = 0;
  for (int64_t t = 0; t <= r.makespan_ns; t += interval_ns) {
    while (si < r.kv_samples.size() && r.kv_samples[si].time_ns <= t) tokens = r.kv_samples[si++].tokens;
    while (pi + 1 < r.phases.size() && r.phases[pi].end_ns <= t) ++pi;
    const Phase phase = r.phases.empty() ? Phase::kMixed : r.phases[pi].phase;
    out.push_back({t, static_cast<double>(tokens) / static_cast<double>(r.kv_capacity_tokens), phase});
  }
  return out;
}

inline void write_timeline_csv(const std::vector<TimelinePoint>& pts, std::ostream& out) {
  out << "time_ns,ratio,phase\n";
  for (const auto& p : pts) out << p.time_ns << ',' << format_fixed(p.ratio) << ',' << to_string(p.phase) << '\n';
}

struct ComparisonRow {
  std::string policy;
  int devices = 1;
  double throughput = 0;
  double bubble_ratio = 0;
  int64_t makespan_ns = 0;
  double speedup = 1;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
};

inline const char* comparison_header() {
  return "policy,devices,throughput_tok_s,bubble_ratio,makespan_ns,speedup";
}

// Rows sorted by policy then device count; speedup is relative to the same
// policy at the smallest device count present.
inline ComparisonTable make_comparison(const std::vector<RunResult>& runs) {
  ComparisonTable t;
  for (const auto& r : runs) {
    t.rows.push_back({to_string(r.policy), r.num_devices, r.throughput, r.bubble_ratio,
                      r.makespan_ns, 1.0});
  }
  std::sort(t.rows.begin(), t.rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.policy, a.devices) < std::tie(b.policy, b.devices);
  });
  std::map<std::string, double> base;
  for (const auto& row : t.rows) base.try_emplace(row.policy, row.throughput);
  for (auto& row : t.rows) {
    const double b = base[row.policy];
    row.speedup = b > 0 ? row.throughput / b : 0;
  }
  return t;
}

inline void write_comparison_csv(const ComparisonTable& t, std::ostream& out) {
  out << comparison_header() << '\n';
  for (const auto& r : t.rows) {
    out << r.policy << ',' << r.devices << ',' << format_fixed(r.throughput) << ','
        << format_fixed(r.bubble_ratio) << ',' << r.makespan_ns << ',' << format_fixed(r.speedup)
        << '\n';
  }
}

inline ComparisonTable read_comparison_csv(std::istream& in) {
  ComparisonTable t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != comparison_header()) throw ParseError("unexpected table header", line_no);
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 6) throw ParseError("expected 6 fields", line_no);
    try {
      t.rows.push_back({f[0], std::stoi(f[1]), std::stod(f[2]), std::stod(f[3]),
                        std::stoll(f[4]), std::stod(f[5])});
    } catch (const std::exception&) {
      throw ParseError("bad table row '" + line + "'", line_no);
    }
  }
  return t;
}

}  // namespace tdsim
