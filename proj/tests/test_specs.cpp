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

#include <gtest/gtest.h>

#include <numeric>

#include "tdsim/specs.hpp"

namespace tdsim {
namespace {

constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;

ModelSpec unit_model() { return {"unit", 1, 1, 1, 1, 1, 0}; }

TEST(KvBytesPerToken, Llama30B) {
  const auto m = presets::llama_30b();
  EXPECT_EQ(kv_bytes_per_token(m), 1597440);
  EXPECT_NEAR(kv_bytes_per_token(m) / 1048576.0, 1.52, 0.0152);
}

TEST(KvBytesPerToken, UnitModel) { EXPECT_EQ(kv_bytes_per_token(unit_model()), 2); }

TEST(KvBytesPerToken, Llama70BWithGqa) {
  const auto gqa = presets::llama2_70b();
  EXPECT_EQ(kv_bytes_per_token(gqa), 327680);
  ModelSpec mha = gqa;
  mha.num_kv_heads = mha.num_heads;
  EXPECT_EQ(kv_bytes_per_token(mha), 8 * kv_bytes_per_token(gqa));
}

TEST(KvBytesPerToken, LinearInLayersAndDtype) {
  ModelSpec m = presets::llama2_13b();
  const int64_t base = kv_bytes_per_token(m);
  m.num_layers *= 3;
  EXPECT_EQ(kv_bytes_per_token(m), 3 * base);
  m.dtype_bytes = 4;
  EXPECT_EQ(kv_bytes_per_token(m), 6 * base);
}

TEST(TotalKvBytes, Llama30BBatch) {
  const double gib = static_cast<double>(total_kv_bytes(presets::llama_30b(), 400, 300)) / kGiB;
  EXPECT_NEAR(gib, 178.0, 1.78);
}

TEST(TotalKvBytes, Trivial) {
  EXPECT_EQ(total_kv_bytes(presets::llama2_70b(), 0, 12345), 0);
  EXPECT_EQ(total_kv_bytes(unit_model(), 10, 10), 200);
}

TEST(PartitionModel, Examples) {
  ModelSpec m = presets::llama2_13b();
  EXPECT_EQ(partition_model(m, 4), (std::vector<int>{10, 10, 10, 10}));
  m.num_layers = 80;
  EXPECT_EQ(partition_model(m, 3), (std::vector<int>{27, 27, 26}));
  m.num_layers = 8;
  EXPECT_EQ(partition_model(m, 1), (std::vector<int>{8}));
}

TEST(PartitionModel, BalancedForAllSplits) {
  ModelSpec m = presets::llama2_70b();
  for (int s = 1; s <= m.num_layers; ++s) {
    const auto c = partition_model(m, s);
    ASSERT_EQ(static_cast<int>(c.size()), s);
    EXPECT_EQ(std::accumulate(c.begin(), c.end(), 0), m.num_layers);
    const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
    EXPECT_LE(*hi - *lo, 1);
    EXPECT_TRUE(std::is_sorted(c.rbegin(), c.rend()));
  }
}

TEST(PartitionModel, TooManyStages) {
  try {
    partition_model(presets::llama2_13b(), 41);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("partition"), std::string::npos);
  }
  EXPECT_THROW(partition_model(presets::llama2_13b(), 0), ConfigError);
}

TEST(ModelSpec, Validation) {
  ModelSpec m = presets::qwen25_32b();
  EXPECT_NO_THROW(m.validate());
  m.num_kv_heads = 7;
  EXPECT_THROW(m.validate(), ConfigError);
  m = presets::qwen25_32b();
  m.hidden_size = 5121;
  EXPECT_THROW(m.validate(), ConfigError);
  m = presets::qwen25_32b();
  m.num_layers = 0;
  EXPECT_THROW(m.validate(), ConfigError);
}

TEST(HardwareSpec, PresetsMatchTables) {
  const auto l20 = presets::l20();
  EXPECT_DOUBLE_EQ(l20.flops_per_s, 119.5e12);
  EXPECT_DOUBLE_EQ(l20.mem_bw, 864e9);
  EXPECT_EQ(l20.mem_capacity, 48'000'000'000);
  EXPECT_DOUBLE_EQ(l20.allreduce_bw, 14.65e9);
  const auto a100 = presets::a100();
  EXPECT_DOUBLE_EQ(a100.flops_per_s, 312e12);
  EXPECT_DOUBLE_EQ(a100.mem_bw, 1935e9);
  EXPECT_EQ(a100.mem_capacity, 80'000'000'000);
  EXPECT_DOUBLE_EQ(a100.allreduce_bw, 14.82e9);
  EXPECT_DOUBLE_EQ(a100.p2p_latency, 20e-6);
  HardwareSpec bad = a100;
  bad.mem_bw = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Presets, LookupByName) {
  for (const auto& n : presets::model_names()) EXPECT_EQ(presets::model(n).name, n);
  for (const auto& n : presets::hardware_names()) EXPECT_EQ(presets::hardware(n).name, n);
  EXPECT_THROW(presets::model("gpt-5"), ConfigError);
  EXPECT_THROW(presets::hardware("h100"), ConfigError);
}

TEST(MakeCluster, KvCapacitySubtractsWeightsAndReserve) {
  const auto m = presets::llama2_13b();
  const auto c = make_cluster(m, presets::l20(), 4);
  // 48 GB - 26/4 GB weights - 5% reserve.
  EXPECT_EQ(c.kv_capacity_per_device, 48'000'000'000 - 6'500'000'000 - 2'400'000'000);
  const int64_t per_device_token = kv_bytes_per_token(m) / 4;
  EXPECT_EQ(kv_capacity_tokens(m, c), c.kv_capacity_per_device / per_device_token);
}

TEST(MakeCluster, TensorParallelSharesEvenly) {
  const auto m = presets::qwen25_32b();
  const auto pp = make_cluster(m, presets::a100(), 4, Parallelism::kPipeline);
  const auto tp = make_cluster(m, presets::a100(), 4, Parallelism::kTensor);
  EXPECT_EQ(pp.kv_capacity_per_device, tp.kv_capacity_per_device);  // 64 layers split evenly
  EXPECT_EQ(kv_capacity_tokens(m, pp), kv_capacity_tokens(m, tp));
}

TEST(MakeCluster, ModelTooLarge) {
  EXPECT_THROW(make_cluster(presets::llama2_70b(), presets::a100(), 1), ConfigError);
  EXPECT_THROW(make_cluster(presets::qwen25_32b(), presets::l20(), 1), ConfigError);
  EXPECT_THROW(make_cluster(presets::llama2_13b(), presets::l20(), 1, Parallelism::kPipeline, 1.0),
               ConfigError);
}

}  // namespace
}  // namespace tdsim
