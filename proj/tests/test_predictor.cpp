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

#include "tdsim/predictor.hpp"

namespace tdsim {
namespace {

RequestSet outputs(const std::vector<int32_t>& lens) {
  RequestSet set;
  for (size_t i = 0; i < lens.size(); ++i) {
    set.requests.push_back({static_cast<int64_t>(i), 10, lens[i], 0});
  }
  return set;
}

RequestSet sharegpt_like(uint64_t seed) {
  return generate_workload(5000, LengthDist::lognormal(5.0, 1.0), LengthDist::lognormal(4.5, 1.0),
                           seed);
}

TEST(NearestRank, Definition) {
  const std::vector<int32_t> v = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  EXPECT_EQ(nearest_rank(v, 0), 1);
  EXPECT_EQ(nearest_rank(v, 25), 3);
  EXPECT_EQ(nearest_rank(v, 50), 5);
  EXPECT_EQ(nearest_rank(v, 99), 10);
  EXPECT_EQ(nearest_rank(v, 100), 10);
}

TEST(FitBuckets, DegenerateConstantTraining) {
  const auto b = fit_buckets(outputs(std::vector<int32_t>(50, 77)));
  ASSERT_EQ(b.size(), 1u);
  EXPECT_DOUBLE_EQ(b.bucket_means[0], 77);
  PredictorConfig cfg{PredictorKind::kBucket, 0.0, 0.5, 1};
  for (int32_t len : {1, 77, 500}) {
    EXPECT_EQ(predict(cfg, Request{0, 5, len, 0}, &b).predicted_len, 77);
  }
}

TEST(FitBuckets, UniformOneToHundred) {
  std::vector<int32_t> lens;
  for (int32_t i = 1; i <= 100; ++i) lens.push_back(i);
  const auto b = fit_buckets(outputs(lens));
  EXPECT_EQ(b.boundaries, (std::vector<int32_t>{1, 25, 50, 75, 90, 95, 99}));
  const std::vector<double> means = {12.5, 37, 62, 82, 92, 96.5, 99.5};
  ASSERT_EQ(b.bucket_means.size(), means.size());
  for (size_t k = 0; k < means.size(); ++k) EXPECT_DOUBLE_EQ(b.bucket_means[k], means[k]);
}

TEST(FitBuckets, MeansAscendForIncreasingData) {
  std::vector<int32_t> lens;
  for (int32_t i = 1; i <= 1000; i += 3) lens.push_back(i);
  const auto b = fit_buckets(outputs(lens));
  for (size_t k = 1; k < b.size(); ++k) {
    EXPECT_GT(b.boundaries[k], b.boundaries[k - 1]);
    EXPECT_GT(b.bucket_means[k], b.bucket_means[k - 1]);
  }
}

TEST(FitBuckets, EveryLengthHasOneBucket) {
  const auto b = fit_buckets(sharegpt_like(3));
  for (int64_t len = 0; len <= 5000; ++len) {
    const size_t k = b.bucket_of(len);
    ASSERT_LT(k, b.size());
    if (len >= b.boundaries.front()) {
      EXPECT_GE(len, b.boundaries[k]);
      if (k + 1 < b.size()) EXPECT_LT(len, b.boundaries[k + 1]);
    }
  }
}

TEST(FitBuckets, EmptyTrainingIsError) { EXPECT_THROW(fit_buckets(RequestSet{}), ConfigError); }

TEST(Predict, OracleIsIdentity) {
  EXPECT_EQ(predict(PredictorConfig{}, Request{3, 10, 37, 0}).predicted_len, 37);
}

TEST(Predict, MissingInputsAreErrors) {
  const Request r{0, 10, 20, 0};
  EXPECT_THROW(predict(PredictorConfig{PredictorKind::kBucket, 0, 0.5, 1}, r), ConfigError);
  const auto b = fit_buckets(outputs({5, 10, 15}));
  EXPECT_THROW(predict(PredictorConfig{PredictorKind::kBucket, 0.2, 0.5, std::nullopt}, r, &b),
               ConfigError);
  EXPECT_THROW(predict(PredictorConfig{PredictorKind::kNoisy, 0, 0.5, std::nullopt}, r),
               ConfigError);
}

double bucket_accuracy(double rate) {
  const auto buckets = fit_buckets(sharegpt_like(43));
  const auto test = sharegpt_like(42);
  const PredictorConfig cfg{PredictorKind::kBucket, rate, 0.5, 42};
  int64_t hits = 0;
  for (const auto& r : test.requests) {
    hits += predicted_bucket(r, buckets, cfg.misclassification_rate, *cfg.seed) ==
            buckets.bucket_of(r.true_output_len);
    const auto p = predict(cfg, r, &buckets);
    EXPECT_EQ(p.predicted_len,
              buckets.mean_len(predicted_bucket(r, buckets, rate, *cfg.seed)));
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

TEST(Predict, BucketAccuracy) {
  EXPECT_DOUBLE_EQ(bucket_accuracy(0.0), 1.0);
  const double acc = bucket_accuracy(0.45);
  EXPECT_GE(acc, 0.5214);
  EXPECT_LE(acc, 0.5805);
}

TEST(Predict, MisclassificationMovesOneBucket) {
  const auto buckets = fit_buckets(sharegpt_like(43));
  for (const auto& r : sharegpt_like(9).requests) {
    const auto truth = static_cast<int64_t>(buckets.bucket_of(r.true_output_len));
    const auto got = static_cast<int64_t>(predicted_bucket(r, buckets, 1.0, 5));
    EXPECT_EQ(std::abs(got - truth), 1);
  }
}

TEST(Predict, NoisyIsDeterministicPerSeedAndId) {
  const PredictorConfig cfg{PredictorKind::kNoisy, 0, 0.5, 11};
  const Request r{17, 10, 200, 0};
  EXPECT_EQ(predict(cfg, r).predicted_len, predict(cfg, r).predicted_len);
  const PredictorConfig other{PredictorKind::kNoisy, 0, 0.5, 12};
  int differ = 0;
  for (int64_t id = 0; id < 50; ++id) {
    const Request q{id, 10, 200, 0};
    differ += predict(cfg, q).predicted_len != predict(other, q).predicted_len;
    EXPECT_GE(predict(cfg, q).predicted_len, 1);
  }
  EXPECT_GT(differ, 40);
}

TEST(AccumulatedError, OracleIsZero) {
  const auto set = sharegpt_like(1);
  std::vector<Prediction> p;
  for (const auto& r : set.requests) p.push_back(predict(PredictorConfig{}, r));
  for (int64_t g : {1, 4, 16, 64, 256, 5000, 9999}) EXPECT_EQ(accumulated_error(p, set, g), 0.0);
}

TEST(AccumulatedError, OverAndUnderCancel) {
  const auto set = outputs({10, 10});
  const std::vector<Prediction> p = {{0, 12}, {1, 8}};
  EXPECT_EQ(accumulated_error(p, set, 2), 0.0);
  EXPECT_DOUBLE_EQ(accumulated_error(p, set, 1), 0.2);
}

TEST(AccumulatedError, PartialTrailingGroup) {
  const auto set = outputs({10, 10, 10});
  const std::vector<Prediction> p = {{0, 10}, {1, 10}, {2, 15}};
  EXPECT_DOUBLE_EQ(accumulated_error(p, set, 2), (0.0 + 0.5) / 2);
}

TEST(AccumulatedError, Errors) {
  const auto set = outputs({10, 10});
  EXPECT_THROW(accumulated_error({{0, 10}}, set, 1), ValidationError);
  EXPECT_THROW(accumulated_error({{0, 10}, {1, 10}}, set, 0), ConfigError);
}

TEST(AccumulatedError, UnbiasedNoiseShrinksWithGroupSize) {
  const std::vector<int64_t> groups = {1, 4, 16, 64, 256};
  std::vector<double> mean(groups.size(), 0.0);
  const int seeds = 30;
  for (int s = 0; s < seeds; ++s) {
    const auto set = sharegpt_like(1000 + s);
    const PredictorConfig cfg{PredictorKind::kNoisy, 0, 0.5, static_cast<uint64_t>(s)};
    std::vector<Prediction> p;
    for (const auto& r : set.requests) p.push_back(predict(cfg, r));
    const double e1 = accumulated_error(p, set, 1);
    const double e256 = accumulated_error(p, set, 256);
    EXPECT_LT(e256, e1) << "seed " << s;
    for (size_t i = 0; i < groups.size(); ++i) mean[i] += accumulated_error(p, set, groups[i]) / seeds;
  }
  for (size_t i = 1; i < groups.size(); ++i) EXPECT_LE(mean[i], mean[i - 1]) << groups[i];
  EXPECT_LT(mean.back(), 0.10);
}

TEST(LengthBuckets, TextExport) {
  const auto b = fit_buckets(outputs({1, 2, 3, 4}));
  std::ostringstream out;
  write_buckets(b, out);
  EXPECT_FALSE(out.str().empty());
  EXPECT_NE(out.str().find(std::to_string(b.boundaries.back())), std::string::npos);
}

}  // namespace
}  // namespace tdsim
