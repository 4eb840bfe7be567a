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

#include <atomic>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tdsim/engine.hpp"
#include "tdsim/errors.hpp"
#include "tdsim/predictor.hpp"
#include "tdsim/specs.hpp"
#include "tdsim/toml.hpp"
#include "tdsim/workload.hpp"

namespace tdsim {

struct WorkloadConfig {
  std::string source = "synthetic";  // synthetic | trace
  std::string trace_path;
  int64_t count = 5000;
  std::string input = "lognormal(5.0,1.0)";
  std::string output = "lognormal(4.5,1.0)";
  int32_t max_len = 1024;
};

struct PredictorSection {
  PredictorKind kind = PredictorKind::kBucket;
  double misclassification_rate = 0.45;
  double noise_sigma = 0.5;
  // synthetic: fit buckets on a fresh sample drawn with seed + 1
  // workload: fit on the workload itself
  std::string training = "synthetic";
};

struct RunConfig {
  std::string name = "custom";
  Policy policy = Policy::kTdPipe;
  int devices = 4;
  uint64_t seed = 42;
  WorkloadConfig workload;
  std::string model_preset = "qwen2.5-32b";
  ModelSpec model = presets::qwen25_32b();
  std::string hardware_preset = "a100";
  HardwareSpec hardware = presets::a100();
  double activation_reserve = 0.05;
  CostOptions cost;
  TdPipeParams td;
  BaselineParams baseline;
  PredictorSection predictor;
  bool record_trace = true;
  std::string output_dir;  // empty: chosen by the caller

  void validate() const {
    if (devices < 1) throw ConfigError("[run] devices: must be >= 1");
    if (workload.source != "synthetic" && workload.source != "trace") {
      throw ConfigError("[workload] source: must be \"synthetic\" or \"trace\"");
    }
    if (workload.source == "trace" && workload.trace_path.empty()) {
      throw ConfigError("[workload] trace_path: required when source = \"trace\"");
    }
    if (workload.count < 1) throw ConfigError("[workload] count: must be >= 1");
    try {
      LengthDist::parse(workload.input, workload.max_len);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("[workload] input: ") + e.what());
    }
    try {
      LengthDist::parse(workload.output, workload.max_len);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("[workload] output: ") + e.what());
    }
    try {
      model.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("[model] ") + e.what());
    }
    try {
      hardware.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("[hardware] ") + e.what());
    }
    if (devices > model.num_layers) {
      throw ConfigError("[run] devices: partition: num_stages (" + std::to_string(devices) +
                        ") exceeds num_layers (" + std::to_string(model.num_layers) + ")");
    }
    if (activation_reserve < 0 || activation_reserve >= 1) {
      throw ConfigError("[cluster] activation_reserve: must be in [0, 1)");
    }
    if (cost.launch_overhead_s < 0) throw ConfigError("[cost] launch_overhead_us: must be >= 0");
    try {
      td.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("[tdpipe] ") + e.what());
    }
    try {
      baseline.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("[baseline] ") + e.what());
    }
    if (predictor.misclassification_rate < 0 || predictor.misclassification_rate > 1) {
      throw ConfigError("[predictor] misclassification_rate: must be in [0, 1]");
    }
    if (predictor.noise_sigma < 0) throw ConfigError("[predictor] noise_sigma: must be >= 0");
    if (predictor.training != "synthetic" && predictor.training != "workload") {
      throw ConfigError("[predictor] training: must be \"synthetic\" or \"workload\"");
    }
  }
};

namespace detail {

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "run.name", "run.policy", "run.devices", "run.seed", "run.record_trace", "run.output_dir",
      "workload.source", "workload.trace_path", "workload.count", "workload.input",
      "workload.output", "workload.max_len",
      "model.preset", "model.name", "model.num_layers", "model.num_heads",
      "model.num_kv_heads", "model.hidden_size", "model.dtype_bytes", "model.param_bytes",
      "hardware.preset", "hardware.name", "hardware.flops_per_s", "hardware.mem_bw",
      "hardware.mem_capacity", "hardware.p2p_bw", "hardware.p2p_latency_us",
      "hardware.allreduce_bw",
      "cluster.activation_reserve",
      "cost.launch_overhead_us", "cost.attention_flops",
      "tdpipe.point_spacing", "tdpipe.point_horizon", "tdpipe.sample_first_step",
      "tdpipe.token_budget", "tdpipe.prefill_switch", "tdpipe.kv_ratio",
      "tdpipe.decode_switch", "tdpipe.finish_ratio", "tdpipe.work_stealing",
      "tdpipe.profile_grid",
      "baseline.prefill_token_budget", "baseline.chunk_size",
      "baseline.decode_steps_per_prefill", "baseline.max_batch_requests",
      "baseline.admission_watermark",
      "predictor.kind", "predictor.misclassification_rate", "predictor.noise_sigma",
      "predictor.training"};
  return keys;
}

// Shortest decimal text d with strtod(d) / scale == v, so values stored in
// scaled units (microseconds) survive a write/read cycle bit for bit.
inline std::string toml_double(double v, double scale = 1.0) {
  char buf[64];
  *std::to_chars(buf, buf + sizeof(buf) - 1, v * scale).ptr = '\0';
  // The shortest text for v * scale may not divide back to v; widen it.
  for (int precision = 1; std::strtod(buf, nullptr) / scale != v && precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*e", precision, v * scale);
  }
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

template <typename Fn>
auto in_field(const std::string& field, Fn fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

}  // namespace detail

inline const char* to_string(PrefillSwitch p) {
  return p == PrefillSwitch::kAlgorithm1 ? "algorithm1" : "kv-ratio";
}

inline const char* to_string(DecodeSwitch d) {
  return d == DecodeSwitch::kIntensity ? "intensity" : "finish-ratio";
}

inline RunConfig run_config_from(const ConfigDoc& doc) {
  for (const auto& [key, value] : doc.values()) {
    if (!detail::known_keys().count(key)) {
      const std::string where = value.line > 0 ? "line " + std::to_string(value.line) + ": " : "";
      throw ConfigError(where + "unknown key '" + key + "'");
    }
  }
  RunConfig c;
  c.name = doc.get_string("run.name", c.name);
  c.policy = detail::in_field("[run] policy",
                              [&] { return parse_policy(doc.get_string("run.policy", "tdpipe")); });
  c.devices = static_cast<int>(doc.get_int("run.devices", c.devices));
  const int64_t seed = doc.get_int("run.seed", static_cast<int64_t>(c.seed));
  if (seed < 0) throw ConfigError("[run] seed: must be >= 0");
  c.seed = static_cast<uint64_t>(seed);
  c.record_trace = doc.get_bool("run.record_trace", c.record_trace);
  c.output_dir = doc.get_string("run.output_dir", c.output_dir);

  auto& w = c.workload;
  w.source = doc.get_string("workload.source", w.source);
  w.trace_path = doc.get_string("workload.trace_path", w.trace_path);
  w.count = doc.get_int("workload.count", w.count);
  w.input = doc.get_string("workload.input", w.input);
  w.output = doc.get_string("workload.output", w.output);
  w.max_len = static_cast<int32_t>(doc.get_int("workload.max_len", w.max_len));

  c.model_preset = doc.get_string("model.preset", c.model_preset);
  c.model = c.model_preset.empty()
                ? ModelSpec{}
                : detail::in_field("[model] preset", [&] { return presets::model(c.model_preset); });
  auto& m = c.model;
  m.name = doc.get_string("model.name", m.name);
  m.num_layers = static_cast<int>(doc.get_int("model.num_layers", m.num_layers));
  m.num_heads = static_cast<int>(doc.get_int("model.num_heads", m.num_heads));
  m.num_kv_heads = static_cast<int>(doc.get_int("model.num_kv_heads", m.num_kv_heads));
  m.hidden_size = static_cast<int>(doc.get_int("model.hidden_size", m.hidden_size));
  m.dtype_bytes = static_cast<int>(doc.get_int("model.dtype_bytes", m.dtype_bytes));
  m.param_bytes = doc.get_int("model.param_bytes", m.param_bytes);

  c.hardware_preset = doc.get_string("hardware.preset", c.hardware_preset);
  c.hardware = c.hardware_preset.empty()
                   ? HardwareSpec{}
                   : detail::in_field("[hardware] preset",
                                      [&] { return presets::hardware(c.hardware_preset); });
  auto& h = c.hardware;
  h.name = doc.get_string("hardware.name", h.name);
  h.flops_per_s = doc.get_double("hardware.flops_per_s", h.flops_per_s);
  h.mem_bw = doc.get_double("hardware.mem_bw", h.mem_bw);
  h.mem_capacity = doc.get_int("hardware.mem_capacity", h.mem_capacity);
  h.p2p_bw = doc.get_double("hardware.p2p_bw", h.p2p_bw);
  h.p2p_latency = doc.get_double("hardware.p2p_latency_us", h.p2p_latency * 1e6) / 1e6;
  h.allreduce_bw = doc.get_double("hardware.allreduce_bw", h.allreduce_bw);

  c.activation_reserve = doc.get_double("cluster.activation_reserve", c.activation_reserve);
  c.cost.launch_overhead_s =
      doc.get_double("cost.launch_overhead_us", c.cost.launch_overhead_s * 1e6) / 1e6;
  c.cost.attention_flops = doc.get_bool("cost.attention_flops", c.cost.attention_flops);

  auto& t = c.td;
  t.point_spacing = static_cast<int32_t>(doc.get_int("tdpipe.point_spacing", t.point_spacing));
  t.point_horizon = static_cast<int32_t>(doc.get_int("tdpipe.point_horizon", t.point_horizon));
  t.sample_first_step = doc.get_bool("tdpipe.sample_first_step", t.sample_first_step);
  t.token_budget = doc.get_int("tdpipe.token_budget", t.token_budget);
  const std::string ps = doc.get_string("tdpipe.prefill_switch", to_string(t.prefill_switch));
  if (ps == "algorithm1") {
    t.prefill_switch = PrefillSwitch::kAlgorithm1;
  } else if (ps == "kv-ratio") {
    t.prefill_switch = PrefillSwitch::kKvRatio;
  } else {
    throw ConfigError("[tdpipe] prefill_switch: must be \"algorithm1\" or \"kv-ratio\"");
  }
  t.kv_ratio = doc.get_double("tdpipe.kv_ratio", t.kv_ratio);
  const std::string ds = doc.get_string("tdpipe.decode_switch", to_string(t.decode_switch));
  if (ds == "intensity") {
    t.decode_switch = DecodeSwitch::kIntensity;
  } else if (ds == "finish-ratio") {
    t.decode_switch = DecodeSwitch::kFinishRatio;
  } else {
    throw ConfigError("[tdpipe] decode_switch: must be \"intensity\" or \"finish-ratio\"");
  }
  t.finish_ratio = doc.get_double("tdpipe.finish_ratio", t.finish_ratio);
  t.work_stealing = doc.get_bool("tdpipe.work_stealing", t.work_stealing);
  std::vector<int64_t> grid(t.profile_grid.begin(), t.profile_grid.end());
  grid = doc.get_int_array("tdpipe.profile_grid", grid);
  t.profile_grid.assign(grid.begin(), grid.end());

  auto& b = c.baseline;
  b.prefill_token_budget = doc.get_int("baseline.prefill_token_budget", b.prefill_token_budget);
  b.hybrid_token_budget = doc.get_int("baseline.chunk_size", b.hybrid_token_budget);
  b.decode_steps_per_prefill = static_cast<int>(
      doc.get_int("baseline.decode_steps_per_prefill", b.decode_steps_per_prefill));
  b.max_batch_requests = doc.get_int("baseline.max_batch_requests", b.max_batch_requests);
  b.admission_watermark = doc.get_double("baseline.admission_watermark", b.admission_watermark);

  auto& p = c.predictor;
  p.kind = detail::in_field("[predictor] kind", [&] {
    return parse_predictor_kind(doc.get_string("predictor.kind", to_string(p.kind)));
  });
  p.misclassification_rate =
      doc.get_double("predictor.misclassification_rate", p.misclassification_rate);
  p.noise_sigma = doc.get_double("predictor.noise_sigma", p.noise_sigma);
  p.training = doc.get_string("predictor.training", p.training);

  c.validate();
  return c;
}

// Every field spelled out, so the file alone reproduces the run.
inline void write_run_config(const RunConfig& c, std::ostream& out) {
  using detail::toml_double;
  out << "[run]\n"
      << "name = " << quote_toml(c.name) << '\n'
      << "policy = " << quote_toml(to_string(c.policy)) << '\n'
      << "devices = " << c.devices << '\n'
      << "seed = " << c.seed << '\n'
      << "record_trace = " << (c.record_trace ? "true" : "false") << '\n'
      << "output_dir = " << quote_toml(c.output_dir) << "\n\n"
      << "[workload]\n"
      << "source = " << quote_toml(c.workload.source) << '\n'
      << "trace_path = " << quote_toml(c.workload.trace_path) << '\n'
      << "count = " << c.workload.count << '\n'
      << "input = " << quote_toml(c.workload.input) << '\n'
      << "output = " << quote_toml(c.workload.output) << '\n'
      << "max_len = " << c.workload.max_len << "\n\n"
      << "[model]\n"
      << "preset = " << quote_toml(c.model_preset) << '\n'
      << "name = " << quote_toml(c.model.name) << '\n'
      << "num_layers = " << c.model.num_layers << '\n'
      << "num_heads = " << c.model.num_heads << '\n'
      << "num_kv_heads = " << c.model.num_kv_heads << '\n'
      << "hidden_size = " << c.model.hidden_size << '\n'
      << "dtype_bytes = " << c.model.dtype_bytes << '\n'
      << "param_bytes = " << c.model.param_bytes << "\n\n"
      << "[hardware]\n"
      << "preset = " << quote_toml(c.hardware_preset) << '\n'
      << "name = " << quote_toml(c.hardware.name) << '\n'
      << "flops_per_s = " << toml_double(c.hardware.flops_per_s) << '\n'
      << "mem_bw = " << toml_double(c.hardware.mem_bw) << '\n'
      << "mem_capacity = " << c.hardware.mem_capacity << '\n'
      << "p2p_bw = " << toml_double(c.hardware.p2p_bw) << '\n'
      << "p2p_latency_us = " << toml_double(c.hardware.p2p_latency, 1e6) << '\n'
      << "allreduce_bw = " << toml_double(c.hardware.allreduce_bw) << "\n\n"
      << "[cluster]\n"
      << "activation_reserve = " << toml_double(c.activation_reserve) << "\n\n"
      << "[cost]\n"
      << "launch_overhead_us = " << toml_double(c.cost.launch_overhead_s, 1e6) << '\n'
      << "attention_flops = " << (c.cost.attention_flops ? "true" : "false") << "\n\n"
      << "[tdpipe]\n"
      << "point_spacing = " << c.td.point_spacing << '\n'
      << "point_horizon = " << c.td.point_horizon << '\n'
      << "sample_first_step = " << (c.td.sample_first_step ? "true" : "false") << '\n'
      << "token_budget = " << c.td.token_budget << '\n'
      << "prefill_switch = " << quote_toml(to_string(c.td.prefill_switch)) << '\n'
      << "kv_ratio = " << toml_double(c.td.kv_ratio) << '\n'
      << "decode_switch = " << quote_toml(to_string(c.td.decode_switch)) << '\n'
      << "finish_ratio = " << toml_double(c.td.finish_ratio) << '\n'
      << "work_stealing = " << (c.td.work_stealing ? "true" : "false") << '\n'
      << "profile_grid = [";
  for (size_t i = 0; i < c.td.profile_grid.size(); ++i) {
    out << (i ? ", " : "") << c.td.profile_grid[i];
  }
  out << "]\n\n"
      << "[baseline]\n"
      << "prefill_token_budget = " << c.baseline.prefill_token_budget << '\n'
      << "chunk_size = " << c.baseline.hybrid_token_budget << '\n'
      << "decode_steps_per_prefill = " << c.baseline.decode_steps_per_prefill << '\n'
      << "max_batch_requests = " << c.baseline.max_batch_requests << '\n'
      << "admission_watermark = " << toml_double(c.baseline.admission_watermark) << "\n\n"
      << "[predictor]\n"
      << "kind = " << quote_toml(to_string(c.predictor.kind)) << '\n'
      << "misclassification_rate = " << toml_double(c.predictor.misclassification_rate) << '\n'
      << "noise_sigma = " << toml_double(c.predictor.noise_sigma) << '\n'
      << "training = " << quote_toml(c.predictor.training) << '\n';
}

inline std::string run_config_text(const RunConfig& c) {
  std::ostringstream out;
  write_run_config(c, out);
  return out.str();
}

inline RequestSet build_workload(const RunConfig& c) {
  if (c.workload.source == "trace") return load_trace(c.workload.trace_path);
  return generate_workload(c.workload.count, LengthDist::parse(c.workload.input, c.workload.max_len),
                           LengthDist::parse(c.workload.output, c.workload.max_len), c.seed);
}

inline EngineConfig engine_config(const RunConfig& c, const RequestSet& workload) {
  EngineConfig e;
  e.policy = c.policy;
  e.model = c.model;
  e.hardware = c.hardware;
  e.num_devices = c.devices;
  e.activation_reserve = c.activation_reserve;
  e.cost = c.cost;
  e.td = c.td;
  e.baseline = c.baseline;
  e.predictor.kind = c.predictor.kind;
  e.predictor.misclassification_rate = c.predictor.misclassification_rate;
  e.predictor.noise_sigma = c.predictor.noise_sigma;
  e.predictor.seed = c.seed;
  e.record_trace = c.record_trace;
  if (c.policy == Policy::kTdPipe && c.predictor.kind == PredictorKind::kBucket) {
    if (c.predictor.training == "workload" || c.workload.source == "trace") {
      e.buckets = fit_buckets(workload, default_percentiles());
    } else {
      const auto training = generate_workload(
          c.workload.count, LengthDist::parse(c.workload.input, c.workload.max_len),
          LengthDist::parse(c.workload.output, c.workload.max_len), c.seed + 1);
      e.buckets = fit_buckets(training, default_percentiles());
    }
  }
  return e;
}

inline RunResult execute(const RunConfig& c) {
  c.validate();
  const RequestSet workload = build_workload(c);
  const EngineConfig e = engine_config(c, workload);
  return run(workload, e);
}

// Runs independent configs on up to `jobs` threads; results keep input order.
inline std::vector<RunResult> execute_all(const std::vector<RunConfig>& configs, int jobs) {
  std::vector<RunResult> results(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < configs.size(); i = next++) {
      try {
        results[i] = execute(configs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const size_t n = std::max<size_t>(1, std::min<size_t>(static_cast<size_t>(std::max(1, jobs)),
                                                        configs.size()));
  std::vector<std::thread> pool;
  for (size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace tdsim
