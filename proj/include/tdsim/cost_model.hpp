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
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "tdsim/errors.hpp"
#include "tdsim/specs.hpp"
#include "tdsim/workload.hpp"

namespace tdsim {

struct CostOptions {
  double launch_overhead_s = 50e-6;  // per stage-step
  bool attention_flops = false;      // add 4*hidden*ctx FLOPs per token-layer
};

// One executor's share of the model. For tensor parallelism the whole
// cluster is a single logical stage with aggregated compute and bandwidth.
struct StageSpec {
  int layer_count = 1;
  int64_t weight_bytes = 0;
  HardwareSpec device;

  int model_layers = 1;
  int dtype_bytes = 2;
  int hidden_size = 1;
  int64_t model_kv_bytes_per_token = 0;
  int allreduce_ranks = 1;  // > 1 only for the tensor-parallel logical stage
  CostOptions options;

  double kv_bytes_per_token() const {
    return static_cast<double>(model_kv_bytes_per_token) * layer_count / model_layers;
  }
};

inline std::vector<StageSpec> make_stages(const ModelSpec& m, const ClusterSpec& c,
                                          const CostOptions& options = {}) {
  std::vector<StageSpec> stages;
  auto base = [&](int layers) {
    StageSpec s;
    s.layer_count = layers;
    s.weight_bytes = static_cast<int64_t>(static_cast<double>(m.param_bytes) *
                                          layers / m.num_layers);
    s.device = c.device;
    s.model_layers = m.num_layers;
    s.dtype_bytes = m.dtype_bytes;
    s.hidden_size = m.hidden_size;
    s.model_kv_bytes_per_token = kv_bytes_per_token(m);
    s.options = options;
    return s;
  };
  if (c.parallelism == Parallelism::kTensor) {
    StageSpec s = base(m.num_layers);
    s.device.flops_per_s *= c.num_devices;
    s.device.mem_bw *= c.num_devices;
    s.allreduce_ranks = c.num_devices;
    stages.push_back(s);
  } else {
    for (int layers : partition_model(m, c.num_devices)) stages.push_back(base(layers));
  }
  return stages;
}

inline double compute_seconds(double tokens, const StageSpec& s,
                              double attention_ctx_tokens = 0) {
  const double params = static_cast<double>(s.weight_bytes) / s.dtype_bytes;
  double flops = 2.0 * params * tokens;
  if (s.options.attention_flops) {
    flops += 4.0 * s.hidden_size * s.layer_count * attention_ctx_tokens;
  }
  return flops / s.device.flops_per_s;
}

// Roofline step: max(compute, weight + KV reads) plus launch overhead.
inline double roofline_time(double tokens, double kv_read_tokens, const StageSpec& s,
                            double attention_ctx_tokens = 0) {
  const double compute = compute_seconds(tokens, s, attention_ctx_tokens);
  const double memory =
      (static_cast<double>(s.weight_bytes) + s.kv_bytes_per_token() * kv_read_tokens) /
      s.device.mem_bw;
  return std::max(compute, memory) + s.options.launch_overhead_s;
}

inline double prefill_time(int64_t total_tokens, const StageSpec& s) {
  const double t = static_cast<double>(total_tokens);
  return roofline_time(t, 0, s, s.options.attention_flops ? t * (t + 1) / 2 : 0);
}

inline double decode_step_time(int64_t batch_size, int64_t total_kv_tokens,
                               const StageSpec& s) {
  return roofline_time(static_cast<double>(batch_size),
                       static_cast<double>(total_kv_tokens), s,
                       static_cast<double>(total_kv_tokens));
}

inline double p2p_time(double bytes, const HardwareSpec& d) {
  return d.p2p_latency + bytes / d.p2p_bw;
}

// Ring all-reduce; the per-collective latency reuses p2p_latency.
inline double allreduce_time(double bytes, int num_ranks, const HardwareSpec& d) {
  if (num_ranks < 2) return 0;
  return 2.0 * bytes * (num_ranks - 1) / num_ranks / d.allreduce_bw + d.p2p_latency;
}

// Two all-reduces per layer over the batch activations. Zero outside TP.
inline double collective_time(double tokens, const StageSpec& s) {
  if (s.allreduce_ranks < 2) return 0;
  const double bytes = tokens * s.hidden_size * s.dtype_bytes;
  // allreduce_time is defined on the per-device link; the logical stage keeps
  // the single-device link rates.
  return 2.0 * s.layer_count * allreduce_time(bytes, s.allreduce_ranks, s.device);
}

inline double activation_bytes(int64_t tokens, const StageSpec& s) {
  return static_cast<double>(tokens) * s.hidden_size * s.dtype_bytes;
}

// Achieved decode rate per batch size, used by the spatial intensity.
struct ProfileTable {
  std::vector<std::pair<int, double>> entries;  // (batch_size, requests/s)
  double peak_rate = 0;

  bool empty() const { return entries.empty(); }

  // Linear interpolation between profiled sizes, clamped at both ends.
  double rate_at(double batch_size) const {
    if (entries.empty()) throw ConfigError("profile table is empty");
    if (batch_size <= entries.front().first) return entries.front().second;
    if (batch_size >= entries.back().first) return entries.back().second;
    auto hi = std::lower_bound(entries.begin(), entries.end(), batch_size,
                               [](const auto& e, double b) { return e.first < b; });
    auto lo = hi - 1;
    const double f = (batch_size - lo->first) / (hi->first - lo->first);
    return lo->second + f * (hi->second - lo->second);
  }

  static ProfileTable from_entries(std::vector<std::pair<int, double>> entries) {
    if (entries.empty()) throw ConfigError("profile table needs at least one entry");
    std::sort(entries.begin(), entries.end());
    ProfileTable t;
    double running = 0;
    for (auto [b, rate] : entries) {
      if (b < 1 || !(rate > 0)) throw ConfigError("profile entries must be positive");
      if (!t.entries.empty() && t.entries.back().first == b) {
        throw ConfigError("duplicate profile batch size " + std::to_string(b));
      }
      // Non-decreasing by construction.
      running = std::max(running, rate);
      t.entries.emplace_back(b, running);
    }
    t.peak_rate = t.entries.back().second;
    return t;
  }
};

inline std::vector<int> default_profile_grid() {
  std::vector<int> grid;
  for (int b = 1; b <= 1024; b *= 2) grid.push_back(b);
  return grid;
}

// Time for one decode step of a batch through every stage, including the
// inter-stage transfers.
inline double pipeline_decode_time(int64_t batch_size, int64_t kv_tokens,
                                   const std::vector<StageSpec>& stages) {
  double t = 0;
  for (const auto& s : stages) {
    t += decode_step_time(batch_size, kv_tokens, s) +
         collective_time(static_cast<double>(batch_size), s);
  }
  if (stages.size() > 1) {
    t += static_cast<double>(stages.size() - 1) *
         p2p_time(activation_bytes(batch_size, stages.front()), stages.front().device);
  }
  return t;
}

inline ProfileTable build_profile_table(const std::vector<StageSpec>& stages,
                                        const std::vector<int>& batch_sizes,
                                        double representative_kv_len) {
  if (batch_sizes.empty()) throw ConfigError("profile grid is empty");
  if (!std::is_sorted(batch_sizes.begin(), batch_sizes.end())) {
    throw ConfigError("profile grid must be ascending");
  }
  std::vector<std::pair<int, double>> entries;
  for (int b : batch_sizes) {
    const auto kv = static_cast<int64_t>(std::llround(b * representative_kv_len));
    entries.emplace_back(b, b / pipeline_decode_time(b, std::max<int64_t>(kv, b), stages));
  }
  return ProfileTable::from_entries(std::move(entries));
}

inline ProfileTable build_profile_table(const ModelSpec& m, const ClusterSpec& c,
                                        const std::vector<int>& batch_sizes,
                                        double representative_kv_len,
                                        const CostOptions& options = {}) {
  return build_profile_table(make_stages(m, c, options), batch_sizes,
                             representative_kv_len);
}

// Mean input plus half the mean output: the context a decode batch carries
// halfway through generation.
inline double representative_kv_len(const RequestSet& set) {
  if (set.empty()) return 1;
  double in = 0;
  double out = 0;
  for (const auto& r : set.requests) {
    in += r.input_len;
    out += r.true_output_len;
  }
  const auto n = static_cast<double>(set.size());
  return in / n + 0.5 * out / n;
}

inline void write_profile_csv(const ProfileTable& t, std::ostream& out) {
  out << "batch_size,achieved_rate\n";
  char buf[64];
  for (auto [b, rate] : t.entries) {
    std::snprintf(buf, sizeof(buf), "%.17g", rate);
    out << b << ',' << buf << '\n';
  }
}

inline ProfileTable read_profile_csv(std::istream& in) {
  std::vector<std::pair<int, double>> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#' || line.rfind("batch_size", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("expected batch_size,achieved_rate", line_no);
    try {
      size_t used = 0;
      const int b = std::stoi(line.substr(0, comma), &used);
      const double rate = std::stod(line.substr(comma + 1));
      entries.emplace_back(b, rate);
    } catch (const std::exception&) {
      throw ParseError("bad profile row '" + line + "'", line_no);
    }
  }
  return ProfileTable::from_entries(std::move(entries));
}

}  // namespace tdsim
