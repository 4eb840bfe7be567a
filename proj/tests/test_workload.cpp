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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tdsim/workload.hpp"

namespace tdsim {
namespace {

// Mean of exp(mu + sigma Z) clamped to [1, max_len], by Simpson's rule on Z.
double clamped_lognormal_mean(double mu, double sigma, double max_len) {
  const int n = 20000;
  const double lo = -12, hi = 12, h = (hi - lo) / n;
  double sum = 0;
  for (int i = 0; i <= n; ++i) {
    const double z = lo + i * h;
    const double v = std::clamp(std::exp(mu + sigma * z), 1.0, max_len);
    const double f = v * std::exp(-0.5 * z * z) / std::sqrt(2 * M_PI);
    sum += f * (i == 0 || i == n ? 1 : (i % 2 ? 4 : 2));
  }
  return sum * h / 3;
}

TEST(GenerateWorkload, ConstantDistribution) {
  const auto set = generate_workload(4, LengthDist::constant(8), LengthDist::constant(4), 7);
  ASSERT_EQ(set.size(), 4u);
  for (size_t i = 0; i < set.size(); ++i) {
    EXPECT_EQ(set.requests[i].id, static_cast<int64_t>(i));
    EXPECT_EQ(set.requests[i].input_len, 8);
    EXPECT_EQ(set.requests[i].true_output_len, 4);
    EXPECT_EQ(set.requests[i].arrival, 0);
  }
  EXPECT_EQ(set.seed, 7u);
}

TEST(GenerateWorkload, UniformWithinBoundsAndReproducible) {
  const auto a = generate_workload(1000, LengthDist::uniform(1, 1024), LengthDist::uniform(1, 512), 1);
  const auto b = generate_workload(1000, LengthDist::uniform(1, 1024), LengthDist::uniform(1, 512), 1);
  EXPECT_EQ(a, b);
  for (const auto& r : a.requests) {
    EXPECT_GE(r.input_len, 1);
    EXPECT_LE(r.input_len, 1024);
    EXPECT_GE(r.true_output_len, 1);
    EXPECT_LE(r.true_output_len, 512);
  }
  const auto c = generate_workload(1000, LengthDist::uniform(1, 1024), LengthDist::uniform(1, 512), 2);
  EXPECT_NE(a, c);
}

TEST(GenerateWorkload, LognormalMeanMatchesClampedOracle) {
  const auto set = generate_workload(5000, LengthDist::lognormal(5.0, 1.0),
                                     LengthDist::lognormal(4.5, 1.0), 42);
  double in = 0, out = 0;
  for (const auto& r : set.requests) {
    in += r.input_len;
    out += r.true_output_len;
  }
  in /= 5000;
  out /= 5000;
  const double in_oracle = clamped_lognormal_mean(5.0, 1.0, 1024);
  const double out_oracle = clamped_lognormal_mean(4.5, 1.0, 1024);
  EXPECT_NEAR(in, in_oracle, 0.05 * in_oracle);
  EXPECT_NEAR(out, out_oracle, 0.05 * out_oracle);
}

TEST(GenerateWorkload, RejectsBadParameters) {
  EXPECT_THROW(generate_workload(0, LengthDist::constant(1), LengthDist::constant(1), 1), ConfigError);
  EXPECT_THROW(generate_workload(1, LengthDist::uniform(0, 5), LengthDist::constant(1), 1), ConfigError);
  EXPECT_THROW(generate_workload(1, LengthDist::uniform(5, 4), LengthDist::constant(1), 1), ConfigError);
  EXPECT_THROW(generate_workload(1, LengthDist::lognormal(1, 0), LengthDist::constant(1), 1), ConfigError);
  EXPECT_THROW(generate_workload(1, LengthDist::constant(0), LengthDist::constant(1), 1), ConfigError);
}

TEST(LengthDist, ParseAndPrint) {
  const auto d = LengthDist::parse("lognormal(5.0,1.0)", 512);
  EXPECT_EQ(d.kind, LengthDist::Kind::kLogNormal);
  EXPECT_DOUBLE_EQ(d.a, 5.0);
  EXPECT_DOUBLE_EQ(d.b, 1.0);
  EXPECT_EQ(d.max_len, 512);
  EXPECT_EQ(LengthDist::parse("uniform(1,1024)").to_string(), "uniform(1,1024)");
  EXPECT_EQ(LengthDist::parse("constant(8)").to_string(), "constant(8)");
  EXPECT_THROW(LengthDist::parse("gamma(1,2)"), ConfigError);
  EXPECT_THROW(LengthDist::parse("uniform(1"), ConfigError);
  EXPECT_THROW(LengthDist::parse("uniform(a,b)"), ConfigError);
}

TEST(LoadTrace, ParsesInOrder) {
  std::istringstream in("# id,input_len,output_len\n1,100,50\n2,200,10\n");
  const auto set = parse_trace(in);
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.requests[0], (Request{1, 100, 50, 0}));
  EXPECT_EQ(set.requests[1], (Request{2, 200, 10, 0}));
  EXPECT_FALSE(set.seed.has_value());
}

TEST(LoadTrace, EmptyFileIsEmptySet) {
  const auto path = std::filesystem::temp_directory_path() / "tdsim_empty_trace.csv";
  { std::ofstream(path).flush(); }
  const auto set = load_trace(path.string());
  EXPECT_TRUE(set.empty());
  std::filesystem::remove(path);
}

TEST(LoadTrace, ZeroOutputIsValidationError) {
  std::istringstream in("1,100,0\n");
  EXPECT_THROW(parse_trace(in), ValidationError);
}

TEST(LoadTrace, DuplicateIdIsValidationError) {
  std::istringstream in("1,100,5\n1,20,5\n");
  EXPECT_THROW(parse_trace(in), ValidationError);
}

TEST(LoadTrace, MalformedLineNamesLineNumber) {
  std::istringstream in("1,100,5\n# comment\n2,abc,5\n");
  try {
    parse_trace(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadTrace, MissingFileThrows) {
  EXPECT_ANY_THROW(load_trace("/nonexistent/dir/trace.csv"));
}

TEST(LoadTrace, RoundTripsGeneratedSets) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const auto set = generate_workload(50, LengthDist::lognormal(5, 1), LengthDist::uniform(1, 300), seed);
    std::stringstream buf;
    write_trace(set, buf);
    EXPECT_EQ(parse_trace(buf), set);
  }
}

}  // namespace
}  // namespace tdsim
