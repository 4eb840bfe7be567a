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
#include <cctype>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdsim/cost_model.hpp"
#include "tdsim/errors.hpp"
#include "tdsim/pipeline.hpp"
#include "tdsim/predictor.hpp"
#include "tdsim/scheduler.hpp"
#include "tdsim/specs.hpp"
#include "tdsim/workload.hpp"

namespace tdsim {

enum class Policy { kTdPipe, kPpSb, kPpHb, kTpSb, kTpHb };

inline const char* to_string(Policy p) {
  switch (p) {
    case Policy::kTdPipe: return "tdpipe";
    case Policy::kPpSb: return "pp-sb";
    case Policy::kPpHb: return "pp-hb";
    case Policy::kTpSb: return "tp-sb";
    case Policy::kTpHb: return "tp-hb";
  }
  return "?";
}

// Accepts "tdpipe", "TD-Pipe", "pp_sb", "PP+SB" and similar spellings.
inline Policy parse_policy(const std::string& text) {
  std::string s;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (s == "tdpipe" || s == "td") return Policy::kTdPipe;
  if (s == "ppsb") return Policy::kPpSb;
  if (s == "pphb") return Policy::kPpHb;
  if (s == "tpsb") return Policy::kTpSb;
  if (s == "tphb") return Policy::kTpHb;
  throw ConfigError("unknown policy '" + text + "' (tdpipe|pp-sb|pp-hb|tp-sb|tp-hb)");
}

inline std::vector<Policy> all_policies() {
  return {Policy::kTdPipe, Policy::kPpSb, Policy::kPpHb, Policy::kTpSb, Policy::kTpHb};
}

inline Parallelism parallelism_of(Policy p) {
  return p == Policy::kTpSb || p == Policy::kTpHb ? Parallelism::kTensor
                                                  : Parallelism::kPipeline;
}

enum class PrefillSwitch { kAlgorithm1, kKvRatio };
enum class DecodeSwitch { kIntensity, kFinishRatio };

struct TdPipeParams {
  int32_t point_spacing = 32;
  int32_t point_horizon = 1024;
  // Also forecast the first decode step, where requests shorter than the
  // spacing still hold their KV.
  bool sample_first_step = true;
  int64_t token_budget = 2048;
  PrefillSwitch prefill_switch = PrefillSwitch::kAlgorithm1;
  double kv_ratio = 0.5;  // kKvRatio: stop admitting at this occupancy
  DecodeSwitch decode_switch = DecodeSwitch::kIntensity;
  double finish_ratio = 0.5;  // kFinishRatio: leave decode once this share finished
  bool work_stealing = true;
  std::vector<int> profile_grid = default_profile_grid();

  void validate() const {
    KvUsageMap::with_spacing(point_spacing, point_horizon);
    if (token_budget < 1) throw ConfigError("tdpipe.token_budget must be >= 1");
    if (!(kv_ratio > 0) || kv_ratio > 1) throw ConfigError("tdpipe.kv_ratio must be in (0, 1]");
    if (!(finish_ratio > 0) || finish_ratio > 1) {
      throw ConfigError("tdpipe.finish_ratio must be in (0, 1]");
    }
    if (profile_grid.empty()) throw ConfigError("tdpipe.profile_grid is empty");
  }
};

struct BaselineParams {
  int64_t prefill_token_budget = 2048;  // separate batching
  int64_t hybrid_token_budget = 512;    // hybrid batching: decodes + prefill chunks
  int decode_steps_per_prefill = 1;
  int64_t max_batch_requests = 256;     // running requests per scheduler
  double admission_watermark = 0.99;

  void validate() const {
    if (prefill_token_budget < 1) throw ConfigError("baseline.prefill_token_budget must be >= 1");
    if (hybrid_token_budget < 1) throw ConfigError("baseline.chunk_size must be >= 1");
    if (decode_steps_per_prefill < 1) {
      throw ConfigError("baseline.decode_steps_per_prefill must be >= 1");
    }
    if (max_batch_requests < 1) throw ConfigError("baseline.max_batch_requests must be >= 1");
    if (!(admission_watermark > 0) || admission_watermark > 1) {
      throw ConfigError("baseline.admission_watermark must be in (0, 1]");
    }
  }
};

struct EngineConfig {
  Policy policy = Policy::kTdPipe;
  ModelSpec model;
  HardwareSpec hardware;
  int num_devices = 1;
  double activation_reserve = 0.05;
  CostOptions cost;
  TdPipeParams td;
  BaselineParams baseline;
  PredictorConfig predictor;
  std::optional<LengthBuckets> buckets;  // required by the bucket predictor
  bool record_trace = true;
};

struct PhaseSpan {
  Phase phase = Phase::kPrefill;
  int64_t start_ns = 0;
  int64_t end_ns = 0;

  friend bool operator==(const PhaseSpan&, const PhaseSpan&) = default;
};

struct KvSample {
  int64_t time_ns = 0;
  int64_t tokens = 0;
  Phase phase = Phase::kPrefill;

  friend bool operator==(const KvSample&, const KvSample&) = default;
};

struct RunCounters {
  int64_t prefill_batches = 0;
  int64_t decode_steps = 0;
  int64_t hybrid_batches = 0;
  int64_t evictions = 0;
  int64_t recomputed_tokens = 0;
  int64_t withheld = 0;
  int64_t refilled = 0;
  int64_t phase_switches = 0;
  int64_t peak_kv_tokens = 0;  // before eviction trims an overflow

  friend bool operator==(const RunCounters&, const RunCounters&) = default;
};

struct RunResult {
  Policy policy = Policy::kTdPipe;
  int num_devices = 1;
  int num_stages = 1;
  int64_t num_requests = 0;
  int64_t makespan_ns = 0;
  double throughput = 0;  // tokens/s
  int64_t total_input_tokens = 0;
  int64_t total_generated_tokens = 0;
  std::vector<int64_t> stage_busy_ns;
  std::vector<int64_t> stage_idle_ns;
  double bubble_ratio = 0;
  int64_t kv_capacity_tokens = 0;
  std::vector<KvSample> kv_samples;
  std::vector<PhaseSpan> phases;
  std::vector<TraceEvent> trace;
  RunCounters counters;
  // generation_usage[g]: sum of input + g over requests at the moment they
  // hold g generated tokens.
  std::vector<int64_t> generation_usage;
};

// Prefill split for hybrid batching. Each chunk re-reads the KV of every
// earlier chunk.
struct ChunkWork {
  int64_t tokens = 0;
  int64_t prior_tokens = 0;

  friend bool operator==(const ChunkWork&, const ChunkWork&) = default;
};

inline std::vector<ChunkWork> split_prefill(int64_t prompt_tokens, int64_t chunk_size) {
  if (chunk_size < 1) throw ConfigError("chunk_size must be >= 1");
  std::vector<ChunkWork> chunks;
  for (int64_t done = 0; done < prompt_tokens; done += chunk_size) {
    chunks.push_back({std::min(chunk_size, prompt_tokens - done), done});
  }
  return chunks;
}

namespace detail {

enum class ReqStatus { kPending, kPrefilling, kAlive, kFinished };

struct ReqState {
  int32_t input = 1;
  int32_t out = 1;
  int32_t generated = 0;
  int32_t predicted = 1;
  int64_t admit_seq = -1;
  uint32_t epoch = 0;
  ReqStatus status = ReqStatus::kPending;
  int64_t footprint = 0;  // KV tokens charged to the ledger
  int home = -1;          // owning slot for slot policies
  int64_t prefilled = 0;  // chunked progress

  int64_t prompt() const { return static_cast<int64_t>(input) + generated; }
};

struct Member {
  int64_t id = 0;
  uint32_t epoch = 0;
  int64_t tokens = 0;  // scheduled this step
  int64_t prior = 0;   // KV tokens read
  bool decode = false;
};

struct InFlight {
  BatchKind kind = BatchKind::kPrefill;
  int slot = 0;
  std::vector<Member> members;
};

// State and bookkeeping shared by every policy: request table, KV ledger,
// batch launch and eviction.
class ControlPlane {
 public:
  ControlPlane(const RequestSet& set, const EngineConfig& cfg)
      : cfg_(cfg),
        cluster_(make_cluster(cfg.model, cfg.hardware, cfg.num_devices,
                              parallelism_of(cfg.policy), cfg.activation_reserve)),
        stages_(make_stages(cfg.model, cluster_, cfg.cost)),
        capacity_(kv_capacity_tokens(cfg.model, cluster_)),
        plane_(static_cast<int>(stages_.size()), cfg.record_trace) {
    if (capacity_ < 1) throw ConfigError("cluster has no KV capacity");
    reqs_.reserve(set.size());
    for (const auto& r : set.requests) {
      if (r.id != static_cast<int64_t>(reqs_.size())) {
        throw ValidationError("engine expects request ids 0..n-1 in order");
      }
      ReqState s;
      s.input = r.input_len;
      s.out = r.true_output_len;
      reqs_.push_back(s);
      pending_.push_back(r.id);
    }
    result_.policy = cfg.policy;
    result_.num_devices = cfg.num_devices;
    result_.num_stages = static_cast<int>(stages_.size());
    result_.num_requests = static_cast<int64_t>(set.size());
    result_.kv_capacity_tokens = capacity_;
    for (const auto& r : set.requests) result_.total_input_tokens += r.input_len;
  }

  virtual ~ControlPlane() = default;

  RunResult run() {
    start(0);
    while (auto ret = plane_.next_return()) {
      const auto [now, id] = *ret;
      auto node = inflight_.extract(id);
      last_time_ = now;
      on_return(std::move(node.mapped()), now);
    }
    if (finished_ != static_cast<int64_t>(reqs_.size())) {
      throw std::logic_error("simulation stalled with " +
                             std::to_string(reqs_.size() - static_cast<size_t>(finished_)) +
                             " unfinished requests");
    }
    return finish();
  }

 protected:
  virtual void start(int64_t now) = 0;
  virtual void on_return(InFlight batch, int64_t now) = 0;

  int num_stages() const { return static_cast<int>(stages_.size()); }

  double stage_seconds(const std::vector<Member>& members, const StageSpec& s) const {
    double tokens = 0, kv = 0, attn = 0;
    for (const auto& m : members) {
      tokens += static_cast<double>(m.tokens);
      kv += static_cast<double>(m.prior);
      const double t = static_cast<double>(m.tokens);
      attn += m.decode ? static_cast<double>(m.prior)
                       : t * static_cast<double>(m.prior) + t * (t + 1) / 2;
    }
    return roofline_time(tokens, kv, s, attn) + collective_time(tokens, s);
  }

  int64_t launch(BatchKind kind, Phase phase, int slot, std::vector<Member> members,
                 int64_t now) {
    ExecutionPlane::Job job;
    job.batch_id = next_batch_id_++;
    job.kind = kind;
    job.phase = phase;
    for (const auto& m : members) job.tokens += m.tokens;
    for (const auto& s : stages_) job.compute_ns.push_back(to_ns(stage_seconds(members, s)));
    if (stages_.size() > 1) {
      job.transfer_ns = to_ns(p2p_time(activation_bytes(job.tokens, stages_.front()),
                                       stages_.front().device));
    }
    switch (kind) {
      case BatchKind::kPrefill: ++result_.counters.prefill_batches; break;
      case BatchKind::kDecodeStep: ++result_.counters.decode_steps; break;
      case BatchKind::kHybridChunk: ++result_.counters.hybrid_batches; break;
    }
    const int64_t id = job.batch_id;
    last_stage0_ns_ = job.compute_ns.front();
    inflight_.emplace(id, InFlight{kind, slot, std::move(members)});
    plane_.submit(std::move(job), now);
    return id;
  }

  // Moves a pending request into prefill; returns its prefill member.
  Member admit(int64_t id) {
    ReqState& r = reqs_[static_cast<size_t>(id)];
    if (r.status != ReqStatus::kPending) throw std::logic_error("admit: not pending");
    r.status = ReqStatus::kPrefilling;
    ++r.epoch;
    r.admit_seq = next_admit_seq_++;
    r.prefilled = 0;
    result_.counters.recomputed_tokens += r.generated;
    return Member{id, r.epoch, r.prompt(), 0, false};
  }

  Member decode_member(int64_t id) const {
    const ReqState& r = reqs_[static_cast<size_t>(id)];
    return Member{id, r.epoch, 1, r.footprint, true};
  }

  bool valid(const Member& m) const {
    return reqs_[static_cast<size_t>(m.id)].epoch == m.epoch;
  }

  void set_footprint(ReqState& r, int64_t tokens) {
    ledger_ += tokens - r.footprint;
    r.footprint = tokens;
  }

  // One more generated token; frees the request if it is done.
  // Returns true when the request finished.
  bool emit_token(int64_t id) {
    ReqState& r = reqs_[static_cast<size_t>(id)];
    ++r.generated;
    r.status = ReqStatus::kAlive;
    set_footprint(r, static_cast<int64_t>(r.input) + r.generated);
    auto& gu = result_.generation_usage;
    if (gu.size() <= static_cast<size_t>(r.generated)) {
      gu.resize(static_cast<size_t>(r.generated) + 1, 0);
    }
    gu[static_cast<size_t>(r.generated)] += r.footprint;
    alive_.insert({r.admit_seq, id});
    if (r.generated >= r.out) {
      set_footprint(r, 0);
      r.status = ReqStatus::kFinished;
      alive_.erase({r.admit_seq, id});
      ++finished_;
      result_.total_generated_tokens += r.generated;
      return true;
    }
    return false;
  }

  // Frees the most recently admitted live requests until the ledger fits.
  // Victims go back to the front of the pending queue, oldest first.
  std::vector<int64_t> evict_overflow() {
    result_.counters.peak_kv_tokens = std::max(result_.counters.peak_kv_tokens, ledger_);
    std::vector<int64_t> victims;
    while (ledger_ > capacity_ && !alive_.empty()) {
      auto it = std::prev(alive_.end());
      const int64_t id = it->second;
      alive_.erase(it);
      ReqState& r = reqs_[static_cast<size_t>(id)];
      set_footprint(r, 0);
      r.status = ReqStatus::kPending;
      r.home = -1;
      ++r.epoch;
      victims.push_back(id);
      ++result_.counters.evictions;
    }
    for (int64_t id : victims) pending_.push_front(id);  // newest pushed first
    return victims;
  }

  void sample(int64_t now) {
    result_.kv_samples.push_back(KvSample{now, ledger_, phase_});
  }

  void set_phase(Phase p, int64_t now) {
    if (!result_.phases.empty()) {
      if (result_.phases.back().phase == p) return;
      result_.phases.back().end_ns = now;
      ++result_.counters.phase_switches;
    }
    result_.phases.push_back(PhaseSpan{p, now, now});
    phase_ = p;
  }

  bool all_finished() const { return finished_ == static_cast<int64_t>(reqs_.size()); }

  RunResult finish() {
    RunResult r = std::move(result_);
    r.makespan_ns = last_time_;
    if (!r.phases.empty()) r.phases.back().end_ns = last_time_;
    r.stage_busy_ns = plane_.busy_ns();
    r.stage_idle_ns.clear();
    int64_t idle = 0;
    for (auto b : r.stage_busy_ns) {
      r.stage_idle_ns.push_back(last_time_ - b);
      idle += last_time_ - b;
    }
    if (last_time_ > 0) {
      r.bubble_ratio = static_cast<double>(idle) /
                       (static_cast<double>(r.num_stages) * static_cast<double>(last_time_));
      r.throughput = static_cast<double>(r.total_input_tokens + r.total_generated_tokens) /
                     (static_cast<double>(last_time_) * 1e-9);
    }
    r.trace = plane_.take_trace();
    return r;
  }

  const EngineConfig& cfg_;
  ClusterSpec cluster_;
  std::vector<StageSpec> stages_;
  int64_t capacity_;
  ExecutionPlane plane_;
  std::vector<ReqState> reqs_;
  std::deque<int64_t> pending_;
  std::set<std::pair<int64_t, int64_t>> alive_;  // (admit_seq, id)
  std::unordered_map<int64_t, InFlight> inflight_;
  int64_t ledger_ = 0;
  int64_t finished_ = 0;
  int64_t last_time_ = 0;
  int64_t last_stage0_ns_ = 0;
  int64_t next_batch_id_ = 0;
  int64_t next_admit_seq_ = 0;
  Phase phase_ = Phase::kPrefill;
  RunResult result_;
};

// Temporally disaggregated pipeline: long prefill-only phases sized by the
// KV forecast, then decode-only phases with W rotating batches.
class TdPipeController : public ControlPlane {
 public:
  TdPipeController(const RequestSet& set, const EngineConfig& cfg) : ControlPlane(set, cfg) {
    cfg.td.validate();
    const LengthBuckets* buckets = cfg.buckets ? &*cfg.buckets : nullptr;
    for (const auto& r : set.requests) {
      reqs_[static_cast<size_t>(r.id)].predicted = predict(cfg.predictor, r, buckets).predicted_len;
    }
    if (cfg.td.decode_switch == DecodeSwitch::kIntensity) {
      table_ = build_profile_table(stages_, cfg.td.profile_grid, representative_kv_len(set));
    }
  }

  const ProfileTable& profile() const { return table_; }

 protected:
  void start(int64_t now) override { begin_prefill(now); }

  void on_return(InFlight batch, int64_t now) override {
    if (batch.kind == BatchKind::kPrefill) {
      --prefills_in_flight_;
      for (const auto& m : batch.members) {
        if (valid(m)) emit_token(m.id);
      }
      evict_overflow();
      sample(now);
      maybe_begin_decode(now);
      return;
    }
    --decodes_in_flight_;
    const auto k = static_cast<size_t>(batch.slot);
    if (!draining_) busy_[k] = false;
    for (const auto& m : batch.members) {
      if (valid(m) && emit_token(m.id)) ++finished_in_phase_;
    }
    evict_overflow();
    std::deque<int64_t> remaining;
    for (const auto& m : batch.members) {
      if (valid(m) && reqs_[static_cast<size_t>(m.id)].status == ReqStatus::kAlive) {
        remaining.push_back(m.id);
      }
    }
    prune_pool();
    sample(now);
    if (draining_) {
      maybe_begin_decode(now);
      return;
    }
    const auto submitted = static_cast<int64_t>(batch.members.size());
    const int64_t removed = submitted - static_cast<int64_t>(remaining.size());
    if (cfg_.td.work_stealing) {
      const auto st = steal_work(submitted, removed, *window_, static_cast<int64_t>(pool_.size()));
      for (int64_t i = 0; i < st.withheld; ++i) {
        pool_.push_back(remaining.back());
        remaining.pop_back();
      }
      for (int64_t i = 0; i < st.refilled; ++i) {
        remaining.push_back(pool_.front());
        pool_.pop_front();
      }
      result_.counters.withheld += st.withheld;
      result_.counters.refilled += st.refilled;
    } else {
      window_->push(static_cast<int64_t>(remaining.size()));
    }
    if (decide_switch(static_cast<int64_t>(remaining.size()), k) ==
        PhaseDecision::kSwitchToPrefill) {
      begin_prefill(now);
      return;
    }
    if (remaining.empty()) {
      step_ns_[k] = 0;
    } else {
      submit_decode(batch.slot, std::vector<int64_t>(remaining.begin(), remaining.end()), now);
    }
    // Idle batches take withheld requests as if they had returned empty.
    for (size_t j = 0; j < busy_.size() && !pool_.empty(); ++j) {
      if (busy_[j]) continue;
      const auto st = steal_work(0, 0, *window_, static_cast<int64_t>(pool_.size()));
      std::vector<int64_t> ids(pool_.begin(), pool_.begin() + st.refilled);
      pool_.erase(pool_.begin(), pool_.begin() + st.refilled);
      result_.counters.refilled += st.refilled;
      submit_decode(static_cast<int>(j), ids, now);
    }
    if (decodes_in_flight_ == 0 && !pending_.empty()) begin_prefill(now);
  }

 private:
  void prune_pool() {
    std::erase_if(pool_, [&](int64_t id) {
      return reqs_[static_cast<size_t>(id)].status != ReqStatus::kAlive;
    });
  }

  // Predicted total length given that g tokens already exist. A request that
  // outlived its prediction moves to the next bucket mean above g, or to 2g
  // past the last bucket.
  int64_t predicted_total(const ReqState& r) const {
    if (r.generated < r.predicted) return r.predicted;
    if (cfg_.buckets) {
      for (size_t k = 0; k < cfg_.buckets->size(); ++k) {
        if (cfg_.buckets->mean_len(k) > r.generated) return cfg_.buckets->mean_len(k);
      }
    }
    return 2 * static_cast<int64_t>(r.generated);
  }

  KvUsageMap reconciled_usage() const {
    KvUsageMap usage = KvUsageMap::with_spacing(cfg_.td.point_spacing, cfg_.td.point_horizon,
                                                cfg_.td.sample_first_step);
    for (const auto& [seq, id] : alive_) {
      const ReqState& r = reqs_[static_cast<size_t>(id)];
      update_usage(static_cast<int64_t>(r.input) + r.generated - 1,
                   std::max<int64_t>(1, predicted_total(r) - r.generated + 1), usage);
    }
    return usage;
  }

  PrefillCandidate candidate(int64_t id) const {
    const ReqState& r = reqs_[static_cast<size_t>(id)];
    return PrefillCandidate{id, r.prompt(), std::max<int64_t>(1, predicted_total(r) - r.generated)};
  }

  // Prefill batches the next prefill phase would launch, in order.
  // fitting counts the batches launched before the forecast overflowed.
  std::vector<std::vector<int64_t>> plan_prefill(size_t* fitting = nullptr) const {
    std::vector<std::vector<int64_t>> plan;
    std::deque<PrefillCandidate> cands;
    for (int64_t id : pending_) cands.push_back(candidate(id));
    const int64_t budget = cfg_.td.token_budget;
    if (cfg_.td.prefill_switch == PrefillSwitch::kAlgorithm1) {
      KvUsageMap usage = reconciled_usage();
      while (!cands.empty()) {
        auto p = schedule_prefill(cands, usage, capacity_, budget);
        std::vector<int64_t> ids;
        for (const auto& c : p.batch) ids.push_back(c.request_id);
        plan.push_back(std::move(ids));
        if (p.decision == PhaseDecision::kSwitchToDecode) break;
        if (fitting) *fitting = plan.size();
      }
    } else {
      auto occupied = static_cast<double>(ledger_);
      const double limit = cfg_.td.kv_ratio * static_cast<double>(capacity_);
      while (!cands.empty() && (occupied < limit || (plan.empty() && alive_.empty()))) {
        std::vector<int64_t> ids;
        int64_t tokens = 0;
        do {
          tokens += cands.front().prefill_tokens;
          occupied += static_cast<double>(cands.front().prefill_tokens + 1);
          ids.push_back(cands.front().request_id);
          cands.pop_front();
        } while (!cands.empty() && tokens + cands.front().prefill_tokens <= budget &&
                 occupied < limit);
        plan.push_back(std::move(ids));
      }
      if (fitting) *fitting = plan.size();
    }
    return plan;
  }

  void begin_prefill(int64_t now) {
    draining_ = decodes_in_flight_ > 0;
    set_phase(Phase::kPrefill, now);
    for (auto& ids : plan_prefill()) {
      std::vector<Member> members;
      for (int64_t id : ids) members.push_back(admit(id));
      pending_.erase(pending_.begin(), pending_.begin() + static_cast<int64_t>(ids.size()));
      launch(BatchKind::kPrefill, Phase::kPrefill, 0, std::move(members), now);
      ++prefills_in_flight_;
    }
    maybe_begin_decode(now);
  }

  void maybe_begin_decode(int64_t now) {
    if (phase_ != Phase::kPrefill || prefills_in_flight_ > 0 || decodes_in_flight_ > 0) return;
    draining_ = false;
    if (alive_.empty()) {
      if (!pending_.empty()) begin_prefill(now);
      return;
    }
    begin_decode(now);
  }

  // Splits every live request round-robin into up to W batches.
  void begin_decode(int64_t now) {
    set_phase(Phase::kDecode, now);
    pool_.clear();
    const auto w = static_cast<size_t>(num_stages());
    const size_t n = alive_.size();
    const size_t nb = std::min(w, n);
    std::vector<std::vector<int64_t>> batches(nb);
    size_t i = 0;
    for (const auto& [seq, id] : alive_) batches[i++ % nb].push_back(id);
    phase_alive_ = static_cast<int64_t>(n);
    finished_in_phase_ = 0;
    std::vector<int64_t> sizes;
    for (const auto& b : batches) sizes.push_back(static_cast<int64_t>(b.size()));
    window_.emplace(nb, sizes);
    step_ns_.assign(nb, 0);
    busy_.assign(nb, false);
    for (size_t k = 0; k < nb; ++k) submit_decode(static_cast<int>(k), batches[k], now);
  }

  void submit_decode(int slot, const std::vector<int64_t>& ids, int64_t now) {
    std::vector<Member> members;
    members.reserve(ids.size());
    for (int64_t id : ids) members.push_back(decode_member(id));
    launch(BatchKind::kDecodeStep, Phase::kDecode, slot, std::move(members), now);
    step_ns_[static_cast<size_t>(slot)] = last_stage0_ns_;
    busy_[static_cast<size_t>(slot)] = true;
    ++decodes_in_flight_;
  }

  PhaseDecision decide_switch(int64_t batch_size, size_t k) {
    if (pending_.empty()) return PhaseDecision::kRemainDecode;
    if (alive_.empty()) return PhaseDecision::kSwitchToPrefill;
    if (cfg_.td.decode_switch == DecodeSwitch::kFinishRatio) {
      const double ratio = static_cast<double>(finished_in_phase_) /
                           static_cast<double>(std::max<int64_t>(1, phase_alive_));
      return ratio >= cfg_.td.finish_ratio ? PhaseDecision::kSwitchToPrefill
                                           : PhaseDecision::kRemainDecode;
    }
    const double spatial = spatial_intensity(static_cast<double>(batch_size), table_);
    if (spatial >= 1.0) return PhaseDecision::kRemainDecode;
    size_t fitting = 0;
    const auto plan = plan_prefill(&fitting);
    // Live requests alone already fill the forecast: a prefill phase would
    // only launch the batch that overflows it.
    if (fitting == 0) return PhaseDecision::kRemainDecode;
    std::vector<double> prefill_s;
    for (const auto& ids : plan) {
      std::vector<Member> members;
      for (int64_t id : ids) members.push_back(Member{id, 0, reqs_[static_cast<size_t>(id)].prompt(), 0, false});
      prefill_s.push_back(stage_seconds(members, stages_.front()));
    }
    const double current = static_cast<double>(step_ns_[k]) * 1e-9;
    double per_batch = 0;
    for (auto ns : step_ns_) per_batch += static_cast<double>(ns) * 1e-9;
    const double temporal = temporal_intensity(prefill_s, current, per_batch);
    return should_switch_to_prefill(spatial, temporal);
  }

  ProfileTable table_;
  std::optional<SlidingWindow> window_;
  std::deque<int64_t> pool_;
  std::vector<int64_t> step_ns_;  // last stage-0 step time per rotating batch
  std::vector<bool> busy_;        // rotating batch currently in the pipeline
  int64_t prefills_in_flight_ = 0;
  int64_t decodes_in_flight_ = 0;
  int64_t phase_alive_ = 0;
  int64_t finished_in_phase_ = 0;
  bool draining_ = false;
};

// Baselines. Each of S slots (one per stage for pipeline parallelism, one
// for tensor parallelism) owns its running requests and keeps at most one
// batch in flight.
class SlotController : public ControlPlane {
 public:
  SlotController(const RequestSet& set, const EngineConfig& cfg)
      : ControlPlane(set, cfg),
        hybrid_(cfg.policy == Policy::kPpHb || cfg.policy == Policy::kTpHb),
        slots_(static_cast<size_t>(num_stages())) {
    cfg.baseline.validate();
  }

 protected:
  void start(int64_t now) override {
    set_phase(Phase::kMixed, now);
    fill(now);
  }

  void on_return(InFlight batch, int64_t now) override {
    Slot& slot = slots_[static_cast<size_t>(batch.slot)];
    slot.busy = false;
    for (const auto& m : batch.members) {
      if (!valid(m)) continue;
      ReqState& r = reqs_[static_cast<size_t>(m.id)];
      if (m.decode) {
        emit_token(m.id);
        continue;
      }
      r.prefilled += m.tokens;
      if (r.prefilled >= r.prompt()) {
        reserved_ -= r.prompt();
        emit_token(m.id);
      }
    }
    evict_overflow();
    for (auto& s : slots_) {
      std::erase_if(s.running, [&](int64_t id) {
        const ReqState& r = reqs_[static_cast<size_t>(id)];
        return r.status == ReqStatus::kFinished || r.status == ReqStatus::kPending;
      });
    }
    sample(now);
    fill(now);
  }

 private:
  struct Slot {
    bool busy = false;
    int decodes_since_prefill = 0;
    std::vector<int64_t> running;  // admission order
  };

  bool admissible(int64_t prompt) const {
    if (ledger_ == 0 && reserved_ == 0) return true;
    return static_cast<double>(ledger_ + reserved_ + prompt + 1) <=
           cfg_.baseline.admission_watermark * static_cast<double>(capacity_);
  }

  void fill(int64_t now) {
    for (size_t k = 0; k < slots_.size(); ++k) {
      if (!slots_[k].busy) schedule(static_cast<int>(k), now);
    }
  }

  Member take_pending(int slot) {
    const int64_t id = pending_.front();
    pending_.pop_front();
    Member m = admit(id);
    ReqState& r = reqs_[static_cast<size_t>(id)];
    r.home = slot;
    reserved_ += r.prompt();
    slots_[static_cast<size_t>(slot)].running.push_back(id);
    return m;
  }

  void schedule(int k, int64_t now) {
    Slot& slot = slots_[static_cast<size_t>(k)];
    const auto& bp = cfg_.baseline;
    std::vector<Member> members;
    if (hybrid_) {
      int64_t budget = bp.hybrid_token_budget;
      std::vector<int64_t> chunking;
      for (int64_t id : slot.running) {
        const ReqState& r = reqs_[static_cast<size_t>(id)];
        if (r.status == ReqStatus::kAlive && budget > 0) {
          members.push_back(decode_member(id));
          --budget;
        } else if (r.status == ReqStatus::kPrefilling) {
          chunking.push_back(id);
        }
      }
      for (int64_t id : chunking) {
        if (budget <= 0) break;
        const ReqState& r = reqs_[static_cast<size_t>(id)];
        const int64_t c = std::min(budget, r.prompt() - r.prefilled);
        members.push_back(Member{id, r.epoch, c, r.prefilled, false});
        budget -= c;
      }
      while (budget > 0 && !pending_.empty() &&
             static_cast<int64_t>(slot.running.size()) < bp.max_batch_requests &&
             admissible(reqs_[static_cast<size_t>(pending_.front())].prompt())) {
        Member m = take_pending(k);
        m.tokens = std::min(budget, m.tokens);
        budget -= m.tokens;
        members.push_back(m);
      }
      if (members.empty()) return;
      slot.busy = true;
      launch(BatchKind::kHybridChunk, Phase::kMixed, k, std::move(members), now);
      return;
    }

    std::vector<int64_t> alive;
    for (int64_t id : slot.running) {
      if (reqs_[static_cast<size_t>(id)].status == ReqStatus::kAlive) alive.push_back(id);
    }
    const bool can_prefill =
        !pending_.empty() && static_cast<int64_t>(slot.running.size()) < bp.max_batch_requests &&
        admissible(reqs_[static_cast<size_t>(pending_.front())].prompt());
    if (can_prefill && (alive.empty() || slot.decodes_since_prefill >= bp.decode_steps_per_prefill)) {
      int64_t tokens = 0;
      do {
        Member m = take_pending(k);
        tokens += m.tokens;
        members.push_back(m);
      } while (!pending_.empty() &&
               static_cast<int64_t>(slot.running.size()) < bp.max_batch_requests &&
               tokens + reqs_[static_cast<size_t>(pending_.front())].prompt() <=
                   bp.prefill_token_budget &&
               admissible(reqs_[static_cast<size_t>(pending_.front())].prompt()));
      slot.decodes_since_prefill = 0;
      slot.busy = true;
      launch(BatchKind::kPrefill, Phase::kMixed, k, std::move(members), now);
      return;
    }
    if (alive.empty()) return;
    for (int64_t id : alive) members.push_back(decode_member(id));
    ++slot.decodes_since_prefill;
    slot.busy = true;
    launch(BatchKind::kDecodeStep, Phase::kMixed, k, std::move(members), now);
  }

  bool hybrid_;
  std::vector<Slot> slots_;
  int64_t reserved_ = 0;  // prompt tokens admitted but not yet charged
};

}  // namespace detail

// Fits the default bucket predictor when the config asks for one without
// supplying buckets.
inline EngineConfig resolve_predictor(EngineConfig cfg, const RequestSet& training) {
  if (cfg.predictor.kind == PredictorKind::kBucket && !cfg.buckets) {
    cfg.buckets = fit_buckets(training, default_percentiles());
  }
  return cfg;
}

// Request ids are renumbered 0..n-1 in submission order; results do not
// refer to ids.
inline RunResult run(const RequestSet& workload, const EngineConfig& cfg) {
  validate(workload);
  const RequestSet* set = &workload;
  RequestSet renumbered;
  for (size_t i = 0; i < workload.size(); ++i) {
    if (workload.requests[i].id != static_cast<int64_t>(i)) {
      renumbered = workload;
      for (size_t j = 0; j < renumbered.size(); ++j) {
        renumbered.requests[j].id = static_cast<int64_t>(j);
      }
      set = &renumbered;
      break;
    }
  }
  if (cfg.policy == Policy::kTdPipe) {
    detail::TdPipeController c(*set, cfg);
    return c.run();
  }
  detail::SlotController c(*set, cfg);
  return c.run();
}

}  // namespace tdsim
