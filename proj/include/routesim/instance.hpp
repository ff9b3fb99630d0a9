// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "routesim/latency.hpp"
#include "routesim/request.hpp"

namespace routesim {

enum class BatchingPolicy { FCFS, BinPacking, LeastWorkLeft };

inline const char* to_string(BatchingPolicy p) {
  switch (p) {
    case BatchingPolicy::FCFS: return "fcfs";
    case BatchingPolicy::BinPacking: return "bin_packing";
    case BatchingPolicy::LeastWorkLeft: return "least_work_left";
  }
  return "?";
}

inline BatchingPolicy batching_from_string(const std::string& s) {
  if (s == "fcfs") return BatchingPolicy::FCFS;
  if (s == "bin_packing") return BatchingPolicy::BinPacking;
  if (s == "least_work_left") return BatchingPolicy::LeastWorkLeft;
  throw std::invalid_argument("unknown batching policy: " + s);
}

struct InstanceConfig {
  long long kv_capacity_tokens = 16384;
  int max_batch_size = 128;
  BatchingPolicy batching = BatchingPolicy::FCFS;
  std::optional<int> chunk_size;  // per-iteration prompt-token budget

  void validate() const {
    if (kv_capacity_tokens < 1) {
      throw std::invalid_argument("kv_capacity_tokens must be >= 1");
    }
    if (max_batch_size < 1) {
      throw std::invalid_argument("max_batch_size must be >= 1");
    }
    if (chunk_size && *chunk_size < 1) {
      throw std::invalid_argument("chunk_size must be >= 1");
    }
  }
};

struct IterationOutcome {
  double elapsed = 0.0;
  double end_clock = 0.0;
  bool prefill = false;
  long long prompt_tokens_processed = 0;
  int tokens_emitted = 0;
  std::vector<std::uint32_t> completed;    // pool indices
  std::vector<std::uint32_t> preempted;    // pool indices
  std::vector<std::uint32_t> first_tokens; // pool indices
};

// Router-visible summary of one instance, also the source of the state
// encoding's per-instance block.
struct InstanceFeatures {
  std::vector<int> prompt_bucket_counts;
  std::vector<int> decode_bucket_counts;
  double capacity = 1.0;        // free KV fraction in [0, 1]
  double t_hat_c = 0.0;         // earliest-completion estimate, seconds
  long long pending_prompt_tokens = 0;
  long long outstanding_decode_estimate = 0;
  long long outstanding_true_decode = 0;
  long long kv_tokens_in_use = 0;
  long long free_kv_tokens = 0;
  long long reserved_kv_tokens = 0;      // admission reservations of the batch
  long long free_reserved_kv_tokens = 0; // room left for new admissions
  int running_count = 0;
  int waiting_count = 0;
};

// One simulated LLM replica with iteration-level batching. A request's KV
// footprint is its processed prompt tokens plus its emitted tokens; the sum
// over the running batch never exceeds kv_capacity_tokens after
// preemption has run.
class Instance {
 public:
  struct RunningEntry {
    std::uint32_t req = 0;
    int prompt_remaining = 0;
    std::uint64_t admit_seq = 0;
  };

  Instance() = default;
  Instance(InstanceConfig cfg, int index) : cfg_(cfg), index_(index) {
    cfg_.validate();
  }

  int index() const { return index_; }
  double clock() const { return clock_; }
  void set_clock(double t) { clock_ = t; }
  const InstanceConfig& config() const { return cfg_; }
  const std::deque<std::uint32_t>& waiting() const { return waiting_; }
  const std::vector<RunningEntry>& running() const { return running_; }
  const std::vector<std::pair<double, std::uint64_t>>& preemption_log() const {
    return preemption_log_;
  }
  bool has_work() const { return !running_.empty() || !waiting_.empty(); }

  void enqueue(RequestPool& pool, std::uint32_t req, double now) {
    const Request& r = pool.at(req);
    if (static_cast<long long>(r.prompt_tokens) + r.true_decode_tokens >
        cfg_.kv_capacity_tokens) {
      throw std::invalid_argument(
          "enqueue: request " + std::to_string(r.id) +
          " can never fit in kv_capacity_tokens");
    }
    for (const auto& e : running_) {
      if (e.req == req) throw std::invalid_argument("enqueue: duplicate request");
    }
    for (auto w : waiting_) {
      if (w == req) throw std::invalid_argument("enqueue: duplicate request");
    }
    pool[req].assigned_instance = index_;
    clock_ = std::max(clock_, now);
    waiting_.push_back(req);
  }

  long long kv_tokens_in_use(const RequestPool& pool) const {
    long long total = 0;
    for (const auto& e : running_) total += footprint(pool[e.req], e);
    return total;
  }

  double capacity_fraction(const RequestPool& pool) const {
    double free_frac = 1.0 - static_cast<double>(kv_tokens_in_use(pool)) /
                                 static_cast<double>(cfg_.kv_capacity_tokens);
    return std::clamp(free_frac, 0.0, 1.0);
  }

  // Admit waiting requests according to the batching policy. Admission
  // reserves each request's expected total footprint (prompt plus the
  // decode estimate), so preemption only happens when a response overruns
  // its expected size. Running requests are never displaced by admission.
  // Returns newly admitted pool indices.
  std::vector<std::uint32_t> admit_waiting(RequestPool& pool) {
    std::vector<std::uint32_t> admitted;
    long long reserved = 0;
    for (const auto& e : running_) reserved += reserved_tokens(pool[e.req]);
    while (!waiting_.empty() &&
           static_cast<int>(running_.size()) < cfg_.max_batch_size) {
      std::size_t pick = waiting_.size();
      switch (cfg_.batching) {
        case BatchingPolicy::FCFS: {
          // Strict head-of-line: never admit past a blocked head.
          if (fits(pool[waiting_.front()], reserved)) pick = 0;
          break;
        }
        case BatchingPolicy::BinPacking: {
          long long best = -1;
          for (std::size_t i = 0; i < waiting_.size(); ++i) {
            const Request& r = pool[waiting_[i]];
            long long size = reserved_tokens(r);
            if (fits(r, reserved) && size > best) {
              best = size;
              pick = i;
            }
          }
          break;
        }
        case BatchingPolicy::LeastWorkLeft: {
          long long best = std::numeric_limits<long long>::max();
          for (std::size_t i = 0; i < waiting_.size(); ++i) {
            const Request& r = pool[waiting_[i]];
            long long left = decode_left(r);
            if (fits(r, reserved) && left < best) {
              best = left;
              pick = i;
            }
          }
          break;
        }
      }
      if (pick >= waiting_.size()) break;
      std::uint32_t req = waiting_[pick];
      waiting_.erase(waiting_.begin() + static_cast<std::ptrdiff_t>(pick));
      running_.push_back(RunningEntry{req, pool[req].prompt_tokens, admit_seq_++});
      reserved += reserved_tokens(pool[req]);
      admitted.push_back(req);
    }
    return admitted;
  }

  // One batching iteration. If any running request still owes prompt
  // tokens the iteration is a prefill: it consumes up to chunk_size prompt
  // tokens (all of them when chunking is off) and, only when chunking is
  // on, co-running decodes advance one token. Otherwise every running
  // request emits one token at decode cost. Output tokens come from decode
  // iterations; a prefill only materialises the prompt's KV.
  IterationOutcome step(RequestPool& pool, const HardwareProfile& profile) {
    if (!has_work()) {
      throw std::logic_error("step: no running or waiting requests");
    }
    IterationOutcome out;
    admit_waiting(pool);
    if (running_.empty()) {
      throw std::logic_error("step: waiting requests but none admissible");
    }

    bool any_prefill = false;
    for (const auto& e : running_) {
      if (e.prompt_remaining > 0) { any_prefill = true; break; }
    }

    std::vector<std::uint32_t> emitted_now;
    if (any_prefill) {
      out.prefill = true;
      long long kv_before = kv_tokens_in_use(pool);
      long long budget = cfg_.chunk_size
                             ? static_cast<long long>(*cfg_.chunk_size)
                             : std::numeric_limits<long long>::max();
      std::vector<std::size_t> co_decoding;
      for (std::size_t i = 0; i < running_.size(); ++i) {
        auto& e = running_[i];
        if (e.prompt_remaining == 0) {
          co_decoding.push_back(i);
          continue;
        }
        if (budget <= 0) continue;
        long long take = std::min<long long>(e.prompt_remaining, budget);
        e.prompt_remaining -= static_cast<int>(take);
        budget -= take;
        out.prompt_tokens_processed += take;
      }
      out.elapsed = prompt_batch_time(profile, out.prompt_tokens_processed,
                                      kv_before);
      if (cfg_.chunk_size) {
        for (std::size_t i : co_decoding) emitted_now.push_back(static_cast<std::uint32_t>(i));
      }
    } else {
      out.elapsed = decode_batch_time(
          profile, static_cast<long long>(running_.size()));
      for (std::size_t i = 0; i < running_.size(); ++i) {
        emitted_now.push_back(static_cast<std::uint32_t>(i));
      }
    }

    clock_ += out.elapsed;
    out.end_clock = clock_;

    for (auto idx : emitted_now) {
      Request& r = pool[running_[idx].req];
      r.tokens_emitted += 1;
      out.tokens_emitted += 1;
      if (!r.started_output()) {
        r.first_token_time_s = clock_;
        out.first_tokens.push_back(running_[idx].req);
      }
    }

    // Completions before the capacity check: finished requests free KV.
    for (std::size_t i = running_.size(); i-- > 0;) {
      Request& r = pool[running_[i].req];
      if (r.tokens_emitted >= r.true_decode_tokens) {
        r.completion_time_s = clock_;
        out.completed.push_back(running_[i].req);
        running_.erase(running_.begin() + static_cast<std::ptrdiff_t>(i));
      }
    }
    std::reverse(out.completed.begin(), out.completed.end());

    out.preempted = preempt_if_needed(pool);
    return out;
  }

  // Evict most-recently-admitted requests until the KV invariant holds.
  // Evicted requests go back to the front of the waiting queue and will
  // recompute their full prompt on resume.
  std::vector<std::uint32_t> preempt_if_needed(RequestPool& pool) {
    std::vector<std::uint32_t> evicted;
    while (kv_tokens_in_use(pool) > cfg_.kv_capacity_tokens &&
           running_.size() > 1) {
      std::size_t victim = 0;
      for (std::size_t i = 1; i < running_.size(); ++i) {
        if (running_[i].admit_seq > running_[victim].admit_seq) victim = i;
      }
      std::uint32_t req = running_[victim].req;
      running_.erase(running_.begin() + static_cast<std::ptrdiff_t>(victim));
      Request& r = pool[req];
      r.preemption_count += 1;
      waiting_.push_front(req);
      preemption_log_.emplace_back(clock_, r.id);
      evicted.push_back(req);
    }
    return evicted;
  }

  // Advance until the local clock reaches `target`. Iterations spanning
  // the boundary run to completion; an idle instance skips straight ahead.
  template <typename Sink>
  void run_until(RequestPool& pool, const HardwareProfile& profile,
                 double target, Sink&& sink) {
    while (clock_ < target && has_work()) {
      sink(step(pool, profile));
    }
    if (!has_work() && clock_ < target) clock_ = target;
  }

  void run_until(RequestPool& pool, const HardwareProfile& profile,
                 double target) {
    run_until(pool, profile, target, [](const IterationOutcome&) {});
  }

  InstanceFeatures snapshot(const RequestPool& pool,
                            const HardwareProfile& profile,
                            std::span<const long long> prompt_bucket_edges,
                            std::span<const long long> decode_bucket_edges) const {
    InstanceFeatures f;
    f.prompt_bucket_counts.assign(prompt_bucket_edges.size(), 0);
    f.decode_bucket_counts.assign(decode_bucket_edges.size(), 0);
    long long min_decode_left = std::numeric_limits<long long>::max();
    for (const auto& e : running_) {
      const Request& r = pool[e.req];
      f.reserved_kv_tokens += reserved_tokens(r);
      long long left = decode_left(r);
      min_decode_left = std::min(min_decode_left, left);
      if (e.prompt_remaining > 0) {
        bump(f.prompt_bucket_counts, prompt_bucket_edges, r.prompt_tokens);
      } else {
        bump(f.decode_bucket_counts, decode_bucket_edges, left);
      }
      f.pending_prompt_tokens += e.prompt_remaining;
      f.outstanding_decode_estimate += left;
      f.outstanding_true_decode +=
          std::max<long long>(0, r.true_decode_tokens - r.tokens_emitted);
    }
    for (auto w : waiting_) {
      const Request& r = pool[w];
      f.reserved_kv_tokens += reserved_tokens(r);
      bump(f.prompt_bucket_counts, prompt_bucket_edges, r.prompt_tokens);
      f.pending_prompt_tokens += r.prompt_tokens;
      f.outstanding_decode_estimate += decode_left(r);
      f.outstanding_true_decode +=
          std::max<long long>(0, r.true_decode_tokens - r.tokens_emitted);
    }
    f.kv_tokens_in_use = kv_tokens_in_use(pool);
    f.free_kv_tokens = cfg_.kv_capacity_tokens - f.kv_tokens_in_use;
    f.free_reserved_kv_tokens =
        cfg_.kv_capacity_tokens - f.reserved_kv_tokens;
    f.capacity = capacity_fraction(pool);
    f.t_hat_c = running_.empty()
                    ? 0.0
                    : estimate_instance_available(profile, min_decode_left);
    f.running_count = static_cast<int>(running_.size());
    f.waiting_count = static_cast<int>(waiting_.size());
    return f;
  }

  // Expected peak KV demand of a request: prompt plus its estimated decode
  // length (or the tokens already emitted, when a response has overrun the
  // estimate).
  static long long reserved_tokens(const Request& r) {
    return static_cast<long long>(r.prompt_tokens) +
           std::max<long long>(r.decode_estimate(), r.tokens_emitted);
  }

  static long long decode_left(const Request& r) {
    return std::max<long long>(0, r.decode_estimate() - r.tokens_emitted);
  }

 private:
  static long long footprint(const Request& r, const RunningEntry& e) {
    return static_cast<long long>(r.prompt_tokens - e.prompt_remaining) +
           r.tokens_emitted;
  }

  bool fits(const Request& r, long long reserved) const {
    return reserved + reserved_tokens(r) <= cfg_.kv_capacity_tokens;
  }

  static void bump(std::vector<int>& counts, std::span<const long long> edges,
                   long long tokens) {
    std::size_t b = 0;
    for (std::size_t i = 1; i < edges.size(); ++i) {
      if (tokens >= edges[i]) b = i;
    }
    counts[b] += 1;
  }

  InstanceConfig cfg_;
  int index_ = 0;
  double clock_ = 0.0;
  std::uint64_t admit_seq_ = 0;
  std::vector<RunningEntry> running_;
  std::deque<std::uint32_t> waiting_;
  std::vector<std::pair<double, std::uint64_t>> preemption_log_;
};

}  // namespace routesim
