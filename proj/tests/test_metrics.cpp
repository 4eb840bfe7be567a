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

#include <sstream>

#include "tdsim/metrics.hpp"

namespace tdsim {
namespace {

EngineConfig config(Policy p, int devices) {
  EngineConfig c;
  c.policy = p;
  c.hardware = presets::l20();
  c.model = presets::llama2_13b();
  c.num_devices = devices;
  return c;
}

RequestSet sharegpt_like(int64_t n, uint64_t seed) {
  return generate_workload(n, LengthDist::lognormal(5.0, 1.0), LengthDist::lognormal(4.5, 1.0),
                           seed);
}

TEST(ExportTrace, EmptyRun) {
  std::stringstream buf;
  export_trace(RunResult{}, buf);
  const auto j = nlohmann::json::parse(buf.str());
  ASSERT_TRUE(j.at("traceEvents").is_array());
  EXPECT_TRUE(j.at("traceEvents").empty());
  buf.seekg(0);
  const auto doc = import_trace(buf);
  EXPECT_TRUE(doc.events.empty());
  EXPECT_EQ(bubble_ratio(doc), 0.0);
}

TEST(ExportTrace, EventCountIsExecutionsPlusTransfers) {
  const auto set = sharegpt_like(120, 1);
  const auto r = run(set, config(Policy::kTdPipe, 2));
  const int64_t batches =
      r.counters.prefill_batches + r.counters.decode_steps + r.counters.hybrid_batches;
  std::stringstream buf;
  export_trace(r, buf);
  const auto j = nlohmann::json::parse(buf.str());
  EXPECT_EQ(static_cast<int64_t>(j.at("traceEvents").size()), batches * 3);
  int64_t transfers = 0;
  for (const auto& e : j.at("traceEvents")) {
    EXPECT_EQ(e.at("ph"), "X");
    transfers += e.at("tid").get<int>() == 1;
  }
  EXPECT_EQ(transfers, batches);
}

TEST(ExportTrace, RoundTripBubbleRatio) {
  const auto set = sharegpt_like(400, 2);
  for (Policy p : all_policies()) {
    const auto r = run(set, config(p, 4));
    std::stringstream buf;
    export_trace(r, buf);
    const auto doc = import_trace(buf);
    EXPECT_EQ(doc.events, r.trace);
    EXPECT_EQ(doc.makespan_ns, r.makespan_ns);
    EXPECT_EQ(bubble_ratio(doc), r.bubble_ratio) << to_string(p);
  }
}

TEST(ExportTrace, BitStable) {
  const auto set = sharegpt_like(200, 3);
  std::stringstream a, b;
  export_trace(run(set, config(Policy::kPpHb, 4)), a);
  export_trace(run(set, config(Policy::kPpHb, 4)), b);
  EXPECT_EQ(a.str(), b.str());
}

TEST(ImportTrace, RejectsGarbage) {
  std::stringstream bad("{\"traceEvents\": 3}");
  EXPECT_THROW(import_trace(bad), ParseError);
  std::stringstream worse("not json");
  EXPECT_THROW(import_trace(worse), ParseError);
}

TEST(KvTimeline, SingleRequestRisesThenDrops) {
  const auto set = generate_workload(1, LengthDist::constant(300), LengthDist::constant(20), 1);
  const auto r = run(set, config(Policy::kTdPipe, 1));
  const auto tl = kv_timeline(r, std::max<int64_t>(1, r.makespan_ns / 200));
  ASSERT_GT(tl.size(), 10u);
  EXPECT_EQ(tl.front().ratio, 0.0);
  for (size_t k = 1; k < tl.size(); ++k) EXPECT_GE(tl[k].ratio, tl[k - 1].ratio);
  // The request holds its prompt plus 19 stored tokens before the 20th
  // token completes it and frees everything.
  const double cap = static_cast<double>(r.kv_capacity_tokens);
  EXPECT_DOUBLE_EQ(tl.back().ratio, 319 / cap);
  EXPECT_EQ(r.kv_samples.back().time_ns, r.makespan_ns);
  EXPECT_EQ(r.kv_samples.back().tokens, 0);
  const auto edge = kv_timeline(r, r.makespan_ns);
  ASSERT_EQ(edge.size(), 2u);
  EXPECT_EQ(edge.back().ratio, 0.0);
}

TEST(KvTimeline, DefaultIntervalAndCsv) {
  const auto set = sharegpt_like(300, 4);
  const auto r = run(set, config(Policy::kTdPipe, 4));
  const auto tl = kv_timeline(r);
  EXPECT_EQ(tl.size(), 1001u);
  EXPECT_EQ(tl[1].time_ns, r.makespan_ns / 1000);
  std::stringstream buf;
  write_timeline_csv(tl, buf);
  std::string header;
  std::getline(buf, header);
  EXPECT_EQ(header, "time_ns,ratio,phase");
  EXPECT_TRUE(kv_timeline(RunResult{}).empty());
}

TEST(KvTimeline, PhasesAlternateAndRatioBounded) {
  const auto set = sharegpt_like(3000, 5);
  const auto r = run(set, config(Policy::kTdPipe, 4));
  const auto tl = kv_timeline(r);
  ASSERT_FALSE(tl.empty());
  EXPECT_EQ(tl.front().phase, Phase::kPrefill);
  std::vector<Phase> seen = {tl.front().phase};
  double max_ratio = 0;
  for (const auto& p : tl) {
    if (p.phase != seen.back()) seen.push_back(p.phase);
    max_ratio = std::max(max_ratio, p.ratio);
    EXPECT_GE(p.ratio, 0.0);
  }
  ASSERT_GE(seen.size(), 3u);
  for (size_t i = 0; i < seen.size(); ++i) {
    EXPECT_EQ(seen[i], i % 2 == 0 ? Phase::kPrefill : Phase::kDecode);
  }
  const double transient =
      static_cast<double>(r.counters.peak_kv_tokens) / static_cast<double>(r.kv_capacity_tokens);
  EXPECT_LE(max_ratio, std::max(1.0, transient));
}

TEST(Comparison, SingleRowSpeedupOne) {
  RunResult r;
  r.policy = Policy::kPpSb;
  r.num_devices = 2;
  r.throughput = 1234.5;
  const auto t = make_comparison({r});
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].speedup, 1.0);
  EXPECT_EQ(t.rows[0].policy, "pp-sb");
}

TEST(Comparison, SortedWithSpeedupAgainstSmallestCount) {
  std::vector<RunResult> runs;
  for (Policy p : {Policy::kTpSb, Policy::kTdPipe}) {
    for (int d : {4, 1, 2}) {
      RunResult r;
      r.policy = p;
      r.num_devices = d;
      r.throughput = 100.0 * d * (p == Policy::kTdPipe ? 2 : 1);
      runs.push_back(r);
    }
  }
  const auto t = make_comparison(runs);
  ASSERT_EQ(t.rows.size(), 6u);
  EXPECT_EQ(t.rows[0].policy, "tdpipe");
  EXPECT_EQ(t.rows[0].devices, 1);
  EXPECT_EQ(t.rows[2].devices, 4);
  EXPECT_DOUBLE_EQ(t.rows[2].speedup, 4.0);
  EXPECT_EQ(t.rows[3].policy, "tp-sb");
  EXPECT_DOUBLE_EQ(t.rows[4].speedup, 2.0);
}

TEST(Comparison, CsvReimportIsLossless) {
  std::vector<RunResult> runs;
  const auto set = sharegpt_like(200, 6);
  for (Policy p : all_policies()) {
    for (int d : {1, 2}) runs.push_back(run(set, config(p, d)));
  }
  const auto t = make_comparison(runs);
  for (size_t i = 0; i < t.rows.size(); ++i) {
    bool found = false;
    for (const auto& r : runs) {
      if (to_string(r.policy) == t.rows[i].policy && r.num_devices == t.rows[i].devices) {
        EXPECT_EQ(r.throughput, t.rows[i].throughput);
        found = true;
      }
    }
    EXPECT_TRUE(found);
  }
  std::stringstream a;
  write_comparison_csv(t, a);
  const auto back = read_comparison_csv(a);
  ASSERT_EQ(back.rows.size(), t.rows.size());
  std::stringstream b;
  write_comparison_csv(back, b);
  EXPECT_EQ(a.str(), b.str());
  for (size_t i = 0; i < t.rows.size(); ++i) EXPECT_EQ(back.rows[i].makespan_ns, t.rows[i].makespan_ns);
  std::stringstream bad("policy,devices\n");
  EXPECT_THROW(read_comparison_csv(bad), ParseError);
}

TEST(Summary, KeyValueLines) {
  const auto set = sharegpt_like(50, 7);
  const auto r = run(set, config(Policy::kPpSb, 2));
  std::stringstream buf;
  write_summary(r, buf);
  const std::string s = buf.str();
  EXPECT_NE(s.find("policy=pp-sb\n"), std::string::npos);
  EXPECT_NE(s.find("throughput_tok_s=" + format_fixed(r.throughput) + "\n"), std::string::npos);
  EXPECT_NE(s.find("stage1_idle_ns="), std::string::npos);
}

}  // namespace
}  // namespace tdsim
