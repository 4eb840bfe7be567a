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
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "tdsim/errors.hpp"
#include "tdsim/rng.hpp"
#include "tdsim/workload.hpp"

namespace tdsim {

// Output-length classes cut at empirical percentiles of a training set.
// Bucket i covers [boundaries[i], boundaries[i+1]); bucket 0 also takes
// anything below boundaries[0] and the last bucket is open-ended.
struct LengthBuckets {
  std::vector<int32_t> boundaries;
  std::vector<double> bucket_means;

  size_t size() const { return boundaries.size(); }

  size_t bucket_of(int64_t len) const {
    auto it = std::upper_bound(boundaries.begin(), boundaries.end(), len);
    if (it == boundaries.begin()) return 0;
    return static_cast<size_t>(it - boundaries.begin() - 1);
  }

  int32_t mean_len(size_t bucket) const {
    return static_cast<int32_t>(std::max<long long>(1, std::llround(bucket_means.at(bucket))));
  }
};

inline std::vector<double> default_percentiles() { return {0, 25, 50, 75, 90, 95, 99}; }

// Nearest-rank percentile: the smallest value with at least p% of the data at
// or below it; p = 0 is the minimum.
inline int32_t nearest_rank(const std::vector<int32_t>& sorted, double p) {
  if (sorted.empty()) throw ConfigError("percentile of empty data");
  if (p <= 0) return sorted.front();
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<size_t>(std::ceil(p / 100.0 * n));
  rank = std::clamp<size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

inline LengthBuckets fit_buckets(const RequestSet& training,
                                 const std::vector<double>& percentiles = default_percentiles()) {
  if (training.empty()) throw ConfigError("fit_buckets: training set is empty");
  std::vector<int32_t> lens;
  lens.reserve(training.size());
  for (const auto& r : training.requests) lens.push_back(r.true_output_len);
  std::sort(lens.begin(), lens.end());

  LengthBuckets b;
  for (double p : percentiles) {
    const int32_t cut = nearest_rank(lens, p);
    if (b.boundaries.empty() || cut > b.boundaries.back()) b.boundaries.push_back(cut);
  }
  std::vector<double> sums(b.size(), 0.0);
  std::vector<int64_t> counts(b.size(), 0);
  for (int32_t len : lens) {
    const auto k = b.bucket_of(len);
    sums[k] += len;
    ++counts[k];
  }
  b.bucket_means.resize(b.size());
  for (size_t k = 0; k < b.size(); ++k) {
    // Every cut is an observed value, so no bucket is empty.
    b.bucket_means[k] = sums[k] / static_cast<double>(counts[k]);
  }
  return b;
}

inline void write_buckets(const LengthBuckets& b, std::ostream& out) {
  out << "boundary,mean\n";
  char buf[64];
  for (size_t k = 0; k < b.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.6f", b.bucket_means[k]);
    out << b.boundaries[k] << ',' << buf << '\n';
  }
}

struct Prediction {
  int64_t request_id = 0;
  int32_t predicted_len = 1;
};

enum class PredictorKind { kOracle, kBucket, kNoisy };

inline const char* to_string(PredictorKind k) {
  switch (k) {
    case PredictorKind::kOracle: return "oracle";
    case PredictorKind::kBucket: return "bucket";
    case PredictorKind::kNoisy: return "noisy";
  }
  return "?";
}

inline PredictorKind parse_predictor_kind(const std::string& s) {
  if (s == "oracle") return PredictorKind::kOracle;
  if (s == "bucket") return PredictorKind::kBucket;
  if (s == "noisy") return PredictorKind::kNoisy;
  throw ConfigError("unknown predictor '" + s + "' (oracle|bucket|noisy)");
}

struct PredictorConfig {
  PredictorKind kind = PredictorKind::kOracle;
  // bucket: probability of landing in an adjacent class instead of the true one
  double misclassification_rate = 0.0;
  // noisy: sigma of the mean-one lognormal multiplier
  double noise_sigma = 0.5;
  std::optional<uint64_t> seed;
};

// Bucket index the predictor assigns to a request. Misclassification moves the
// true bucket one step up or down, deterministically per (seed, id).
inline size_t predicted_bucket(const Request& r, const LengthBuckets& buckets,
                               double misclassification_rate, uint64_t seed) {
  const size_t truth = buckets.bucket_of(r.true_output_len);
  if (misclassification_rate <= 0 || buckets.size() < 2) return truth;
  Rng rng(mix64(seed, static_cast<uint64_t>(r.id)));
  if (rng.uniform01() >= misclassification_rate) return truth;
  const bool up = rng.uniform01() < 0.5;
  if (truth == 0) return 1;
  if (truth + 1 == buckets.size()) return truth - 1;
  return up ? truth + 1 : truth - 1;
}

inline Prediction predict(const PredictorConfig& cfg, const Request& r,
                          const LengthBuckets* buckets = nullptr) {
  Prediction p{r.id, r.true_output_len};
  switch (cfg.kind) {
    case PredictorKind::kOracle:
      break;
    case PredictorKind::kBucket: {
      if (buckets == nullptr || buckets->size() == 0) {
        throw ConfigError("bucket predictor requires fitted LengthBuckets");
      }
      if (cfg.misclassification_rate > 0 && !cfg.seed) {
        throw ConfigError("bucket predictor with misclassification requires a seed");
      }
      const auto k = predicted_bucket(r, *buckets, cfg.misclassification_rate,
                                      cfg.seed.value_or(0));
      p.predicted_len = buckets->mean_len(k);
      break;
    }
    case PredictorKind::kNoisy: {
      if (!cfg.seed) throw ConfigError("noisy predictor requires a seed");
      Rng rng(mix64(*cfg.seed, static_cast<uint64_t>(r.id)));
      const double s = cfg.noise_sigma;
      const double factor = std::exp(s * rng.normal() - 0.5 * s * s);
      const double v = std::clamp(r.true_output_len * factor, 1.0, 1e9);
      p.predicted_len = static_cast<int32_t>(std::llround(v));
      break;
    }
  }
  p.predicted_len = std::max<int32_t>(1, p.predicted_len);
  return p;
}

// Mean over consecutive groups of |sum(predicted) - sum(actual)| / sum(actual).
// A trailing partial group counts as a group.
inline double accumulated_error(const std::vector<Prediction>& predictions,
                                const RequestSet& actuals, int64_t group_size) {
  if (group_size < 1) throw ConfigError("accumulated_error: group_size must be >= 1");
  std::unordered_map<int64_t, int64_t> by_id;
  by_id.reserve(predictions.size());
  for (const auto& p : predictions) by_id[p.request_id] = p.predicted_len;
  double total = 0;
  int64_t groups = 0;
  for (size_t start = 0; start < actuals.size(); start += static_cast<size_t>(group_size)) {
    const size_t end = std::min(actuals.size(), start + static_cast<size_t>(group_size));
    double pred = 0;
    double actual = 0;
    for (size_t i = start; i < end; ++i) {
      const auto& r = actuals.requests[i];
      auto it = by_id.find(r.id);
      if (it == by_id.end()) {
        throw ValidationError("no prediction for request " + std::to_string(r.id));
      }
      pred += static_cast<double>(it->second);
      actual += r.true_output_len;
    }
    total += std::abs(pred - actual) / actual;
    ++groups;
  }
  return groups == 0 ? 0.0 : total / static_cast<double>(groups);
}

}  // namespace tdsim
