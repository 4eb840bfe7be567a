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

#include <map>

#include "tdsim/pipeline.hpp"

namespace tdsim {
namespace {

ExecutionPlane::Job job(int64_t id, std::vector<int64_t> compute, int64_t transfer) {
  ExecutionPlane::Job j;
  j.batch_id = id;
  j.tokens = 10;
  j.compute_ns = std::move(compute);
  j.transfer_ns = transfer;
  return j;
}

std::vector<std::pair<int64_t, int64_t>> drain(ExecutionPlane& plane) {
  std::vector<std::pair<int64_t, int64_t>> out;
  while (auto r = plane.next_return()) out.push_back(*r);
  return out;
}

TEST(ExecutionPlane, SingleBatchHasNoOverlap) {
  ExecutionPlane plane(4, true);
  plane.submit(job(0, {100, 200, 300, 400}, 7), 0);
  const auto ret = drain(plane);
  ASSERT_EQ(ret.size(), 1u);
  EXPECT_EQ(ret[0].first, 100 + 200 + 300 + 400 + 3 * 7);
  EXPECT_EQ(plane.trace().size(), 7u);
  EXPECT_TRUE(plane.idle());
}

TEST(ExecutionPlane, TwoEqualBatchesOverlap) {
  ExecutionPlane plane(2, true);
  plane.submit(job(0, {100, 100}, 5), 0);
  plane.submit(job(1, {100, 100}, 5), 0);
  const auto ret = drain(plane);
  ASSERT_EQ(ret.size(), 2u);
  EXPECT_EQ(ret[0], (std::pair<int64_t, int64_t>{205, 0}));
  EXPECT_EQ(ret[1], (std::pair<int64_t, int64_t>{305, 1}));
  EXPECT_EQ(plane.busy_ns(), (std::vector<int64_t>{200, 200}));
}

TEST(ExecutionPlane, SlowestStageGatesThroughput) {
  ExecutionPlane plane(3, false);
  for (int64_t i = 0; i < 10; ++i) plane.submit(job(i, {10, 50, 10}, 0), 0);
  const auto ret = drain(plane);
  ASSERT_EQ(ret.size(), 10u);
  for (size_t i = 1; i < ret.size(); ++i) EXPECT_EQ(ret[i].first - ret[i - 1].first, 50);
  EXPECT_TRUE(plane.trace().empty());
}

TEST(ExecutionPlane, FifoAndNoOverlapPerResource) {
  ExecutionPlane plane(3, true);
  int64_t id = 0;
  for (int round = 0; round < 5; ++round) {
    plane.submit(job(id++, {30, 10, 20}, 3), round * 15);
    plane.submit(job(id++, {5, 40, 5}, 4), round * 15);
  }
  const auto ret = drain(plane);
  EXPECT_EQ(ret.size(), 10u);
  std::map<std::pair<int, int>, int64_t> free_at;
  std::map<int64_t, int64_t> done_at;  // batch -> end of its previous op
  for (const auto& e : plane.trace()) {
    auto& f = free_at[{e.stage, e.lane}];
    EXPECT_GE(e.start_ns, f);
    f = e.start_ns + e.dur_ns;
    EXPECT_GE(e.start_ns, done_at[e.batch_id]);
    done_at[e.batch_id] = e.start_ns + e.dur_ns;
  }
}

TEST(ExecutionPlane, EqualTimesReturnInBatchOrder) {
  ExecutionPlane plane(1, true);
  plane.submit(job(3, {0}, 0), 10);
  plane.submit(job(1, {0}, 0), 10);
  const auto ret = drain(plane);
  ASSERT_EQ(ret.size(), 2u);
  EXPECT_EQ(ret[0].second, 3);
  EXPECT_EQ(ret[1].second, 1);
}

TEST(ExecutionPlane, RejectsBadJobs) {
  ExecutionPlane plane(2, false);
  EXPECT_THROW(plane.submit(job(0, {1}, 0), 0), std::invalid_argument);
  plane.submit(job(0, {1, 1}, 0), 0);
  EXPECT_THROW(plane.submit(job(0, {1, 1}, 0), 0), std::logic_error);
  EXPECT_THROW(ExecutionPlane(0, false), std::invalid_argument);
}

TEST(Pipeline, Names) {
  EXPECT_STREQ(to_string(Phase::kPrefill), "prefill");
  EXPECT_STREQ(to_string(Phase::kDecode), "decode");
  EXPECT_STREQ(to_string(BatchKind::kHybridChunk), "hybrid");
  EXPECT_EQ(to_ns(1.5e-6), 1500);
}

}  // namespace
}  // namespace tdsim
