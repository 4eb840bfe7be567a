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
#include <deque>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdsim/cost_model.hpp"
#include "tdsim/errors.hpp"

namespace tdsim {

enum class PhaseDecision { kRemainPrefill, kSwitchToDecode, kRemainDecode, kSwitchToPrefill };

inline const char* to_string(PhaseDecision d) {
  switch (d) {
    case PhaseDecision::kRemainPrefill: return "RemainPrefill";
    case PhaseDecision::kSwitchToDecode: return "SwitchToDecode";
    case PhaseDecision::kRemainDecode: return "RemainDecode";
    case PhaseDecision::kSwitchToPrefill: return "SwitchToPrefill";
  }
  return "?";
}

// Forecast of total KV tokens alive at sampled future decode steps.
struct KvUsageMap {
  std::vector<int32_t> future_points;  // ascending
  std::vector<int64_t> usage;          // parallel to future_points

  // spacing, 2*spacing, ..., horizon; first_step prepends step 1.
  static KvUsageMap with_spacing(int32_t spacing = 32, int32_t horizon = 1024,
                                 bool first_step = false) {
    if (spacing < 1 || horizon < spacing) {
      throw ConfigError("future points need spacing >= 1 and horizon >= spacing");
    }
    KvUsageMap m;
    if (first_step && spacing > 1) m.future_points.push_back(1);
    for (int32_t p = spacing; p <= horizon; p += spacing) m.future_points.push_back(p);
    m.usage.assign(m.future_points.size(), 0);
    return m;
  }

  static KvUsageMap with_points(std::vector<int32_t> points) {
    if (points.empty() || !std::is_sorted(points.begin(), points.end()) ||
        std::adjacent_find(points.begin(), points.end()) != points.end() ||
        points.front() < 1) {
      throw ConfigError("future points must be strictly ascending and >= 1");
    }
    KvUsageMap m;
    m.future_points = std::move(points);
    m.usage.assign(m.future_points.size(), 0);
    return m;
  }

  int64_t at(int32_t point) const {
    auto it = std::lower_bound(future_points.begin(), future_points.end(), point);
    if (it == future_points.end() || *it != point) {
      throw std::out_of_range("not a future point: " + std::to_string(point));
    }
    return usage[static_cast<size_t>(it - future_points.begin())];
  }

  int64_t max_usage() const {
    int64_t m = 0;
    for (auto u : usage) m = std::max(m, u);
    return m;
  }

  void clear() { std::fill(usage.begin(), usage.end(), 0); }

  friend bool operator==(const KvUsageMap&, const KvUsageMap&) = default;
};

// Adds one request's footprint: at every point fp <= predicted_len the
// request holds input_len + fp tokens.
inline void update_usage(int64_t input_len, int64_t predicted_len, KvUsageMap& usage) {
  for (size_t i = 0; i < usage.future_points.size(); ++i) {
    const int32_t fp = usage.future_points[i];
    if (fp > predicted_len) break;
    usage.usage[i] += input_len + fp;
  }
}

inline PhaseDecision check_switch(const KvUsageMap& usage, int64_t kv_capacity_tokens) {
  return usage.max_usage() > kv_capacity_tokens ? PhaseDecision::kSwitchToDecode
                                                : PhaseDecision::kRemainPrefill;
}

// A request waiting for (re-)prefill. prefill_tokens covers recomputed
// output after an eviction; predicted_remaining counts from the token the
// prefill emits.
struct PrefillCandidate {
  int64_t request_id = 0;
  int64_t prefill_tokens = 1;
  int64_t predicted_remaining = 1;
};

struct PrefillPlan {
  std::vector<PrefillCandidate> batch;
  int64_t tokens = 0;
  PhaseDecision decision = PhaseDecision::kRemainPrefill;
};

// Pops requests in submission order until the next one would overflow the
// token budget (a lone oversized request still forms a batch), folds the
// batch into the forecast, then checks the switch condition.
inline PrefillPlan schedule_prefill(std::deque<PrefillCandidate>& pending, KvUsageMap& usage,
                                    int64_t kv_capacity_tokens, int64_t token_budget) {
  if (pending.empty()) throw std::invalid_argument("schedule_prefill: nothing pending");
  PrefillPlan plan;
  do {
    plan.tokens += pending.front().prefill_tokens;
    plan.batch.push_back(pending.front());
    pending.pop_front();
  } while (!pending.empty() && plan.tokens + pending.front().prefill_tokens <= token_budget);
  for (const auto& c : plan.batch) {
    update_usage(c.prefill_tokens, std::max<int64_t>(1, c.predicted_remaining), usage);
  }
  plan.decision = check_switch(usage, kv_capacity_tokens);
  return plan;
}

// Last W submitted decode batch sizes, W = number of pipeline stages.
class SlidingWindow {
 public:
  explicit SlidingWindow(size_t width) : width_(width) {
    if (width == 0) throw ConfigError("sliding window width must be >= 1");
  }

  SlidingWindow(size_t width, std::span<const int64_t> initial) : SlidingWindow(width) {
    for (auto v : initial) push(v);
  }

  void push(int64_t batch_size) {
    sizes_.push_back(batch_size);
    while (sizes_.size() > width_) sizes_.pop_front();
  }

  int64_t sum() const { return std::accumulate(sizes_.begin(), sizes_.end(), int64_t{0}); }
  size_t width() const { return width_; }
  size_t size() const { return sizes_.size(); }
  const std::deque<int64_t>& sizes() const { return sizes_; }

 private:
  size_t width_;
  std::deque<int64_t> sizes_;
};

struct StealResult {
  int64_t submit_count = 0;
  int64_t withheld = 0;  // moved from this batch into the pool
  int64_t refilled = 0;  // taken from the pool into this batch
  int64_t average = 0;
};

// Inter-batch work stealing for one returning decode batch. The total T is
// the window sum minus this batch's finished requests plus the withheld
// pool. A balanced split gives T mod W batches ceil(T/W) and the rest
// floor(T/W). The returning batch keeps ceil(T/W) only while fewer than
// T mod W of the other batches hold it, so near-balanced batches do not
// trade single requests back and forth. Excess goes to the pool; a batch
// below its target is topped up from the pool.
inline StealResult steal_work(int64_t returned_batch_size, int64_t finished_in_batch,
                              SlidingWindow& window, int64_t pool_size = 0) {
  if (finished_in_batch > returned_batch_size || finished_in_batch < 0) {
    throw std::invalid_argument("steal_work: finished exceeds batch size");
  }
  const int64_t remaining = returned_batch_size - finished_in_batch;
  const auto w = static_cast<int64_t>(window.width());
  const int64_t total = std::max<int64_t>(0, window.sum() - finished_in_batch + pool_size);
  StealResult r;
  r.average = total / w;
  const int64_t extra = total % w;
  int64_t target = r.average;
  if (extra > 0) {
    // The oldest entry is this batch's previous submission once the window
    // is full; the rest belong to the other batches.
    const auto& sizes = window.sizes();
    const size_t skip = sizes.size() == window.width() ? 1 : 0;
    const auto at_ceil = std::count_if(sizes.begin() + static_cast<std::ptrdiff_t>(skip),
                                       sizes.end(), [&](int64_t v) { return v > r.average; });
    if (at_ceil < extra) target = r.average + 1;
  }
  if (remaining > target) {
    r.withheld = remaining - target;
    r.submit_count = target;
  } else {
    r.refilled = std::min(pool_size, target - remaining);
    r.submit_count = remaining + r.refilled;
  }
  window.push(r.submit_count);
  return r;
}

// Achieved / peak decode rate at the given batch size.
inline double spatial_intensity(double current_batch_size, const ProfileTable& table) {
  if (table.empty()) throw ConfigError("spatial_intensity: empty profile table");
  if (current_batch_size <= 0) return 0.0;
  return std::min(1.0, table.rate_at(current_batch_size) / table.peak_rate);
}

// 1 - bubble / total, where the bubble is how much the longest pending
// prefill outlasts the current decode step and the total is the next
// cycle: all pending prefills, one decode step per batch, and the bubble.
inline double temporal_intensity(std::span<const double> pending_prefill_times,
                                 double current_decode_step_time,
                                 double one_decode_step_per_batch_time) {
  if (pending_prefill_times.empty()) {
    throw std::invalid_argument("temporal_intensity: no pending prefills");
  }
  const double longest = *std::max_element(pending_prefill_times.begin(),
                                           pending_prefill_times.end());
  const double bubble = std::max(0.0, longest - current_decode_step_time);
  const double total =
      std::accumulate(pending_prefill_times.begin(), pending_prefill_times.end(), 0.0) +
      one_decode_step_per_batch_time + bubble;
  if (!(total > 0)) return 1.0;
  return 1.0 - bubble / total;
}

struct DecodeGuards {
  bool all_batches_empty = false;
  bool prefills_pending = true;
};

inline PhaseDecision should_switch_to_prefill(double spatial, double temporal,
                                              DecodeGuards guards = {}) {
  if (!guards.prefills_pending) return PhaseDecision::kRemainDecode;
  if (guards.all_batches_empty) return PhaseDecision::kSwitchToPrefill;
  return spatial < temporal ? PhaseDecision::kSwitchToPrefill : PhaseDecision::kRemainDecode;
}

}  // namespace tdsim
