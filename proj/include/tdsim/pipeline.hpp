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

#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace tdsim {

enum class Phase { kPrefill, kDecode, kMixed };
enum class BatchKind { kPrefill, kDecodeStep, kHybridChunk };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::kPrefill: return "prefill";
    case Phase::kDecode: return "decode";
    case Phase::kMixed: return "mixed";
  }
  return "?";
}

inline const char* to_string(BatchKind k) {
  switch (k) {
    case BatchKind::kPrefill: return "prefill";
    case BatchKind::kDecodeStep: return "decode";
    case BatchKind::kHybridChunk: return "hybrid";
  }
  return "?";
}

inline int64_t to_ns(double seconds) { return static_cast<int64_t>(std::llround(seconds * 1e9)); }

// One execution on a stage (lane 0) or on the link from stage to stage + 1
// (lane 1).
struct TraceEvent {
  int stage = 0;
  int lane = 0;
  int64_t batch_id = 0;
  BatchKind batch_kind = BatchKind::kPrefill;
  Phase phase = Phase::kPrefill;
  int64_t start_ns = 0;
  int64_t dur_ns = 0;
  int64_t tokens = 0;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

// Stage executors and inter-stage links. Every resource runs one operation
// at a time in arrival order. A job visits stage 0, link 0, stage 1, ...,
// stage W-1 and then returns to the control plane.
class ExecutionPlane {
 public:
  struct Job {
    int64_t batch_id = 0;
    BatchKind kind = BatchKind::kPrefill;
    Phase phase = Phase::kPrefill;
    int64_t tokens = 0;
    std::vector<int64_t> compute_ns;  // one per stage
    int64_t transfer_ns = 0;
  };

  ExecutionPlane(int num_stages, bool record_trace)
      : num_stages_(checked_stages(num_stages)),
        record_(record_trace),
        resources_(static_cast<size_t>(2 * num_stages - 1)),
        busy_ns_(static_cast<size_t>(num_stages), 0) {}

  void submit(Job job, int64_t now) {
    if (static_cast<int>(job.compute_ns.size()) != num_stages_) {
      throw std::invalid_argument("job needs one compute time per stage");
    }
    const int64_t id = job.batch_id;
    auto [it, inserted] = jobs_.emplace(id, Active{std::move(job), 0});
    if (!inserted) throw std::logic_error("duplicate batch id " + std::to_string(id));
    enqueue(id, 0, now);
  }

  // Runs until the next batch leaves the last stage. Returns (time, batch id)
  // or nothing once no work remains.
  std::optional<std::pair<int64_t, int64_t>> next_return() {
    while (!events_.empty()) {
      const Event ev = events_.top();
      events_.pop();
      Resource& res = resources_[static_cast<size_t>(ev.resource)];
      res.busy = false;
      Active& a = jobs_.at(ev.batch_id);
      ++a.op;
      std::optional<std::pair<int64_t, int64_t>> ret;
      if (a.op == 2 * num_stages_ - 1) {
        ret = std::make_pair(ev.time, ev.batch_id);
        jobs_.erase(ev.batch_id);
      } else {
        enqueue(ev.batch_id, a.op, ev.time);
      }
      start_next(ev.resource, ev.time);
      if (ret) return ret;
    }
    return std::nullopt;
  }

  bool idle() const { return jobs_.empty(); }
  int num_stages() const { return num_stages_; }
  const std::vector<int64_t>& busy_ns() const { return busy_ns_; }
  const std::vector<TraceEvent>& trace() const { return trace_; }
  std::vector<TraceEvent> take_trace() { return std::move(trace_); }

 private:
  static int checked_stages(int n) {
    if (n < 1) throw std::invalid_argument("ExecutionPlane needs >= 1 stage");
    return n;
  }

  struct Active {
    Job job;
    int op = 0;  // even: compute on stage op/2; odd: link (op-1)/2
  };
  struct Resource {
    bool busy = false;
    std::queue<int64_t> fifo;
  };
  struct Event {
    int64_t time;
    int resource;
    int64_t batch_id;
    uint64_t seq;
    bool operator>(const Event& o) const {
      return std::tie(time, resource, batch_id, seq) >
             std::tie(o.time, o.resource, o.batch_id, o.seq);
    }
  };

  int resource_of(int op) const {
    return op % 2 == 0 ? op / 2 : num_stages_ + (op - 1) / 2;
  }

  void enqueue(int64_t batch_id, int op, int64_t now) {
    const int r = resource_of(op);
    resources_[static_cast<size_t>(r)].fifo.push(batch_id);
    start_next(r, now);
  }

  void start_next(int r, int64_t now) {
    Resource& res = resources_[static_cast<size_t>(r)];
    if (res.busy || res.fifo.empty()) return;
    const int64_t id = res.fifo.front();
    res.fifo.pop();
    const Active& a = jobs_.at(id);
    const bool compute = a.op % 2 == 0;
    const int stage = compute ? a.op / 2 : (a.op - 1) / 2;
    const int64_t dur =
        compute ? a.job.compute_ns[static_cast<size_t>(stage)] : a.job.transfer_ns;
    if (dur < 0) throw std::logic_error("negative duration");
    res.busy = true;
    if (compute) busy_ns_[static_cast<size_t>(stage)] += dur;
    if (record_) {
      trace_.push_back(TraceEvent{stage, compute ? 0 : 1, id, a.job.kind, a.job.phase, now, dur,
                                  a.job.tokens});
    }
    events_.push(Event{now + dur, r, id, seq_++});
  }

  int num_stages_;
  bool record_;
  std::vector<Resource> resources_;
  std::vector<int64_t> busy_ns_;
  std::unordered_map<int64_t, Active> jobs_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::vector<TraceEvent> trace_;
  uint64_t seq_ = 0;
};

}  // namespace tdsim
