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
#include <string>
#include <vector>

#include "tdsim/errors.hpp"

namespace tdsim {

// Transformer dimensions. num_kv_heads < num_heads means grouped-query
// attention.
struct ModelSpec {
  std::string name;
  int num_layers = 1;
  int num_heads = 1;
  int num_kv_heads = 1;
  int hidden_size = 1;
  int dtype_bytes = 2;
  int64_t param_bytes = 0;

  int64_t param_count() const { return param_bytes / dtype_bytes; }

  void validate() const {
    if (num_layers < 1 || num_heads < 1 || num_kv_heads < 1 || hidden_size < 1) {
      throw ConfigError("model '" + name + "': dimensions must be >= 1");
    }
    if (num_heads % num_kv_heads != 0) {
      throw ConfigError("model '" + name + "': num_kv_heads must divide num_heads");
    }
    if (hidden_size % num_heads != 0) {
      throw ConfigError("model '" + name +
                        "': hidden_size must be divisible by num_heads");
    }
    if (dtype_bytes < 1) throw ConfigError("model '" + name + "': dtype_bytes must be >= 1");
    if (param_bytes < 0) throw ConfigError("model '" + name + "': param_bytes must be >= 0");
  }
};

// Device roofline parameters. Rates are per second; capacities in bytes
// (decimal GB for the built-in presets).
struct HardwareSpec {
  std::string name;
  double flops_per_s = 1;
  double mem_bw = 1;
  int64_t mem_capacity = 1;
  double p2p_bw = 1;
  double p2p_latency = 0;
  double allreduce_bw = 1;

  void validate() const {
    if (!(flops_per_s > 0) || !(mem_bw > 0) || mem_capacity <= 0 ||
        !(p2p_bw > 0) || !(allreduce_bw > 0) || p2p_latency < 0) {
      throw ConfigError("hardware '" + name + "': rates and capacities must be > 0");
    }
  }
};

enum class Parallelism { kPipeline, kTensor };

struct ClusterSpec {
  HardwareSpec device;
  int num_devices = 1;
  int64_t kv_capacity_per_device = 0;  // bytes left for KV on the fullest device
  double activation_reserve = 0.05;    // fraction of mem_capacity
  Parallelism parallelism = Parallelism::kPipeline;
};

// 2 (K and V) x layers x kv width x dtype bytes.
inline int64_t kv_bytes_per_token(const ModelSpec& m) {
  const int64_t kv_width =
      static_cast<int64_t>(m.hidden_size) * m.num_kv_heads / m.num_heads;
  return 2LL * m.num_layers * kv_width * m.dtype_bytes;
}

inline int64_t total_kv_bytes(const ModelSpec& m, int64_t num_requests,
                              int64_t avg_len) {
  return num_requests * avg_len * kv_bytes_per_token(m);
}

// Balanced layer split; earlier stages take the extra layer.
inline std::vector<int> partition_model(const ModelSpec& m, int num_stages) {
  if (num_stages < 1) throw ConfigError("partition: num_stages must be >= 1");
  if (num_stages > m.num_layers) {
    throw ConfigError("partition: num_stages (" + std::to_string(num_stages) +
                      ") exceeds num_layers (" + std::to_string(m.num_layers) +
                      ") of model '" + m.name + "'");
  }
  const int base = m.num_layers / num_stages;
  const int extra = m.num_layers % num_stages;
  std::vector<int> counts(static_cast<size_t>(num_stages), base);
  for (int s = 0; s < extra; ++s) ++counts[static_cast<size_t>(s)];
  return counts;
}

// Fraction of the model's weights and per-token KV held by the fullest
// device.
inline double device_share(const ModelSpec& m, int num_devices, Parallelism p) {
  if (p == Parallelism::kTensor) return 1.0 / num_devices;
  const auto counts = partition_model(m, num_devices);
  return static_cast<double>(counts.front()) / m.num_layers;
}

inline ClusterSpec make_cluster(const ModelSpec& m, const HardwareSpec& device,
                                int num_devices,
                                Parallelism p = Parallelism::kPipeline,
                                double activation_reserve = 0.05) {
  m.validate();
  device.validate();
  if (num_devices < 1) throw ConfigError("cluster: num_devices must be >= 1");
  if (activation_reserve < 0 || activation_reserve >= 1) {
    throw ConfigError("cluster: activation_reserve must be in [0, 1)");
  }
  const double share = device_share(m, num_devices, p);
  const auto weight_bytes =
      static_cast<int64_t>(static_cast<double>(m.param_bytes) * share);
  const auto reserve = static_cast<int64_t>(
      static_cast<double>(device.mem_capacity) * activation_reserve);
  ClusterSpec c;
  c.device = device;
  c.num_devices = num_devices;
  c.activation_reserve = activation_reserve;
  c.parallelism = p;
  c.kv_capacity_per_device = device.mem_capacity - weight_bytes - reserve;
  if (c.kv_capacity_per_device <= 0) {
    throw ConfigError("model '" + m.name + "' (" + std::to_string(weight_bytes) +
                      " weight bytes per device) does not fit on " +
                      std::to_string(num_devices) + " x " + device.name +
                      " with a " + std::to_string(activation_reserve) +
                      " activation reserve");
  }
  return c;
}

// KV capacity of the whole cluster expressed in tokens.
inline int64_t kv_capacity_tokens(const ModelSpec& m, const ClusterSpec& c) {
  const double per_device_token_bytes =
      static_cast<double>(kv_bytes_per_token(m)) *
      device_share(m, c.num_devices, c.parallelism);
  return static_cast<int64_t>(static_cast<double>(c.kv_capacity_per_device) /
                              per_device_token_bytes);
}

namespace presets {

inline constexpr double kGB = 1e9;

inline HardwareSpec l20() {
  return {"l20", 119.5e12, 864 * kGB, static_cast<int64_t>(48 * kGB), 14.65 * kGB,
          20e-6, 14.65 * kGB};
}

inline HardwareSpec a100() {
  return {"a100", 312e12, 1935 * kGB, static_cast<int64_t>(80 * kGB), 14.82 * kGB,
          20e-6, 14.82 * kGB};
}

inline ModelSpec llama_30b() {
  return {"llama-30b", 60, 52, 52, 6656, 2, static_cast<int64_t>(65.2 * kGB)};
}

inline ModelSpec llama2_13b() {
  return {"llama2-13b", 40, 40, 40, 5120, 2, static_cast<int64_t>(26 * kGB)};
}

inline ModelSpec qwen25_32b() {
  return {"qwen2.5-32b", 64, 40, 8, 5120, 2, static_cast<int64_t>(64 * kGB)};
}

inline ModelSpec llama2_70b() {
  return {"llama2-70b", 80, 64, 8, 8192, 2, static_cast<int64_t>(140 * kGB)};
}

inline std::vector<std::string> hardware_names() { return {"l20", "a100"}; }

inline std::vector<std::string> model_names() {
  return {"llama-30b", "llama2-13b", "qwen2.5-32b", "llama2-70b"};
}

inline HardwareSpec hardware(const std::string& name) {
  if (name == "l20") return l20();
  if (name == "a100") return a100();
  throw ConfigError("unknown hardware preset '" + name + "'");
}

inline ModelSpec model(const std::string& name) {
  if (name == "llama-30b") return llama_30b();
  if (name == "llama2-13b" || name == "13b") return llama2_13b();
  if (name == "qwen2.5-32b" || name == "32b") return qwen25_32b();
  if (name == "llama2-70b" || name == "70b") return llama2_70b();
  throw ConfigError("unknown model preset '" + name + "'");
}

}  // namespace presets

}  // namespace tdsim
