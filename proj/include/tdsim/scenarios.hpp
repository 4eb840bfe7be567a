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
#include <cstdio>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "tdsim/errors.hpp"
#include "tdsim/run_config.hpp"

namespace tdsim {

struct Scenario {
  std::string name;
  std::string description;
};

namespace detail {

inline RunConfig base_run(const std::string& name, const std::string& hw,
                          const std::string& model, Policy policy, int devices) {
  RunConfig c;
  c.name = name;
  c.policy = policy;
  c.devices = devices;
  c.hardware_preset = hw;
  c.hardware = presets::hardware(hw);
  c.model_preset = model;
  c.model = presets::model(model);
  return c;
}

}  // namespace detail

inline std::vector<Scenario> run_presets() {
  return {
      {"a100-32b-4gpu-tdpipe", "TD-Pipe, Qwen2.5-32B on 4x A100"},
      {"a100-32b-4gpu-pp-sb", "pipeline, separate batching, Qwen2.5-32B on 4x A100"},
      {"a100-32b-4gpu-pp-hb", "pipeline, hybrid batching, Qwen2.5-32B on 4x A100"},
      {"a100-32b-4gpu-tp-sb", "tensor parallel, separate batching, Qwen2.5-32B on 4x A100"},
      {"a100-32b-4gpu-tp-hb", "tensor parallel, hybrid batching, Qwen2.5-32B on 4x A100"},
      {"l20-13b-4gpu-tdpipe", "TD-Pipe, Llama2-13B on 4x L20"},
      {"l20-32b-4gpu-tdpipe", "TD-Pipe, Qwen2.5-32B on 4x L20"},
      {"a100-70b-4gpu-tdpipe", "TD-Pipe, Llama2-70B on 4x A100"},
      {"toy", "TD-Pipe, 200 requests, Llama2-13B on 2x L20"},
  };
}

inline RunConfig run_preset(const std::string& name) {
  for (Policy p : all_policies()) {
    if (name == std::string("a100-32b-4gpu-") + to_string(p)) {
      return detail::base_run(name, "a100", "qwen2.5-32b", p, 4);
    }
  }
  if (name == "l20-13b-4gpu-tdpipe") {
    return detail::base_run(name, "l20", "llama2-13b", Policy::kTdPipe, 4);
  }
  if (name == "l20-32b-4gpu-tdpipe") {
    return detail::base_run(name, "l20", "qwen2.5-32b", Policy::kTdPipe, 4);
  }
  if (name == "a100-70b-4gpu-tdpipe") {
    return detail::base_run(name, "a100", "llama2-70b", Policy::kTdPipe, 4);
  }
  if (name == "toy") {
    RunConfig c = detail::base_run(name, "l20", "llama2-13b", Policy::kTdPipe, 2);
    c.workload.count = 200;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

inline std::vector<Scenario> compare_scenarios() {
  return {
      {"fig5-analog", "all policies on Qwen2.5-32B, 1/2/4x A100"},
      {"l20-32b-scaling", "all policies on Qwen2.5-32B, 2/4x L20"},
  };
}

inline std::vector<RunConfig> compare_scenario(const std::string& name) {
  std::string hw;
  std::vector<int> devices;
  if (name == "fig5-analog") {
    hw = "a100";
    devices = {1, 2, 4};
  } else if (name == "l20-32b-scaling") {
    hw = "l20";
    devices = {2, 4};
  } else {
    throw ConfigError("unknown compare scenario '" + name + "'");
  }
  std::vector<RunConfig> runs;
  for (Policy p : all_policies()) {
    for (int d : devices) {
      RunConfig c = detail::base_run(name, hw, "qwen2.5-32b", p, d);
      c.record_trace = false;
      runs.push_back(std::move(c));
    }
  }
  return runs;
}

struct SweepPoint {
  std::string label;
  RunConfig config;
};

inline std::vector<Scenario> sweep_scenarios() {
  return {
      {"ablation-prefill-switch", "Algorithm 1 vs KV-ratio prefill switch, 4x L20, 32B"},
      {"ablation-decode-switch", "intensity vs finish-ratio decode switch, 4x L20, 32B"},
      {"ablation-stealing", "work stealing on/off, imbalance-heavy output lengths, 4x L20, 32B"},
  };
}

inline std::vector<SweepPoint> sweep_scenario(const std::string& name) {
  std::vector<SweepPoint> points;
  auto base = [&] {
    RunConfig c = detail::base_run(name, "l20", "qwen2.5-32b", Policy::kTdPipe, 4);
    c.record_trace = false;
    return c;
  };
  char label[64];
  if (name == "ablation-prefill-switch") {
    points.push_back({"algorithm1", base()});
    for (double r : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      RunConfig c = base();
      c.td.prefill_switch = PrefillSwitch::kKvRatio;
      c.td.kv_ratio = r;
      std::snprintf(label, sizeof(label), "kv-ratio-%.1f", r);
      points.push_back({label, c});
    }
  } else if (name == "ablation-decode-switch") {
    points.push_back({"intensity", base()});
    for (double r : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      RunConfig c = base();
      c.td.decode_switch = DecodeSwitch::kFinishRatio;
      c.td.finish_ratio = r;
      std::snprintf(label, sizeof(label), "finish-ratio-%.1f", r);
      points.push_back({label, c});
    }
  } else if (name == "ablation-stealing") {
    RunConfig on = base();
    on.workload.output = "lognormal(4.5,2.0)";
    RunConfig off = on;
    off.td.work_stealing = false;
    points.push_back({"stealing-on", on});
    points.push_back({"stealing-off", off});
  } else {
    throw ConfigError("unknown sweep scenario '" + name + "'");
  }
  return points;
}

struct SweepRow {
  std::string label;
  double throughput = 0;
  double bubble_ratio = 0;
  int64_t makespan_ns = 0;
  double relative = 0;  // throughput / best throughput in the sweep
};

inline std::vector<SweepRow> make_sweep_rows(const std::vector<SweepPoint>& points,
                                             const std::vector<RunResult>& results) {
  std::vector<SweepRow> rows;
  double best = 0;
  for (size_t i = 0; i < points.size(); ++i) {
    rows.push_back({points[i].label, results[i].throughput, results[i].bubble_ratio,
                    results[i].makespan_ns, 0});
    best = std::max(best, results[i].throughput);
  }
  for (auto& r : rows) r.relative = best > 0 ? r.throughput / best : 0;
  return rows;
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "label,throughput_tok_s,bubble_ratio,makespan_ns,relative\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%lld,%.6f\n", r.label.c_str(), r.throughput,
                  r.bubble_ratio, static_cast<long long>(r.makespan_ns), r.relative);
    out << buf;
  }
}

}  // namespace tdsim
