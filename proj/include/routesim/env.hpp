// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <stdexcept>
#include <vector>

#include "routesim/impact.hpp"
#include "routesim/instance.hpp"
#include "routesim/latency.hpp"
#include "routesim/policies.hpp"
#include "routesim/predictor.hpp"
#include "routesim/request.hpp"
#include "routesim/rng.hpp"
#include "routesim/workload.hpp"

namespace routesim {

enum class ShapingMode { None, Additive, Guided };

inline const char* to_string(ShapingMode m) {
  switch (m) {
    case ShapingMode::None: return "none";
    case ShapingMode::Additive: return "additive";
    case ShapingMode::Guided: return "guided";
  }
  return "?";
}

inline ShapingMode shaping_from_string(const std::string& s) {
  if (s == "none") return ShapingMode::None;
  if (s == "additive") return ShapingMode::Additive;
  if (s == "guided") return ShapingMode::Guided;
  throw std::invalid_argument("unknown shaping mode: " + s);
}

struct RewardConfig {
  double r_w = 60.0;
  double gamma = 0.99;
  double beta_d = 0.5;
  ShapingMode shaping = ShapingMode::Guided;

  void validate() const {
    if (r_w <= 0.0) throw std::invalid_argument("reward: r_w must be > 0");
    if (gamma < 0.0 || gamma >= 1.0) {
      throw std::invalid_argument("reward: gamma outside [0, 1)");
    }
    if (beta_d <= 0.0) throw std::invalid_argument("reward: beta_d must be > 0");
  }

  // Weight of the heuristic term in episode k: gamma - guided_discount(k).
  double shaping_coefficient(int episode_k) const {
    switch (shaping) {
      case ShapingMode::None: return 0.0;
      case ShapingMode::Additive: return 1.0;
      case ShapingMode::Guided:
        return gamma * std::exp(-beta_d * static_cast<double>(episode_k));
    }
    return 0.0;
  }

  // Episode-indexed discount used while training: anneals from 0 up to
  // gamma as the heuristic's influence decays.
  double guided_discount(int episode_k) const {
    if (shaping != ShapingMode::Guided) return gamma;
    return (1.0 - std::exp(-beta_d * static_cast<double>(episode_k))) * gamma;
  }
};

using StateVector = std::vector<double>;

inline constexpr long long kQueueLengthClamp = 512;
inline constexpr double kHeadPromptNorm = 1024.0;

inline int state_dimension(int num_instances, const BucketScheme& state_scheme) {
  return num_instances * (3 + state_scheme.count()) + 3;
}

inline double round2(double x) { return std::round(x * 100.0) / 100.0; }

// Fixed-layout encoding: per instance [pending prompt tokens / kv capacity,
// decode bucket counts / max batch, capacity (2dp), T^_c (2dp)], then the
// router block [clamped queue length / 512, head prompt / 1024, head
// predicted bucket].
inline StateVector encode_state(const SystemState& s,
                                const BucketScheme& state_scheme) {
  StateVector v;
  v.reserve(static_cast<std::size_t>(
      state_dimension(s.num_instances(), state_scheme)));
  for (const auto& inst : s.instances) {
    v.push_back(static_cast<double>(inst.pending_prompt_tokens) /
                static_cast<double>(s.kv_capacity_tokens));
    for (int b = 0; b < state_scheme.count(); ++b) {
      v.push_back(static_cast<double>(inst.decode_bucket_counts[b]) /
                  static_cast<double>(s.max_batch_size));
    }
    v.push_back(round2(inst.capacity));
    v.push_back(round2(inst.t_hat_c));
  }
  auto qlen = std::min<long long>(static_cast<long long>(s.queue.size()),
                                  kQueueLengthClamp);
  v.push_back(static_cast<double>(qlen) /
              static_cast<double>(kQueueLengthClamp));
  const Request* head = s.head();
  v.push_back(head ? head->prompt_tokens / kHeadPromptNorm : 0.0);
  v.push_back(head && head->predicted_bucket >= 0
                  ? static_cast<double>(head->predicted_bucket)
                  : 0.0);
  return v;
}

enum class PredictorMode { Simulated, Empirical };

struct ClusterConfig {
  HardwareProfile profile;
  Thresholds thresholds;
  ImpactConfig impact;
  RewardConfig reward;
  InstanceConfig instance;
  int num_instances = 4;
  double delta_t = 0.02;
  BucketScheme predictor_scheme = BucketScheme::predictor_default();
  BucketScheme state_scheme = BucketScheme::state_default();
  PredictorMode predictor_mode = PredictorMode::Simulated;
  AccuracyTable accuracy = AccuracyTable::perfect();
  std::uint64_t predictor_seed = 1;
  int episode_k = 0;
  bool record_trajectory = false;

  void validate() const {
    profile.validate();
    thresholds.validate();
    impact.validate();
    reward.validate();
    instance.validate();
    predictor_scheme.validate();
    state_scheme.validate();
    accuracy.validate();
    if (num_instances < 1) {
      throw std::invalid_argument("cluster: num_instances must be >= 1");
    }
    if (delta_t <= 0.0) throw std::invalid_argument("cluster: delta_t must be > 0");
  }
};

struct RewardBreakdown {
  double queue_penalty = 0.0;   // sum of (1/T^)(1 - f) over pending requests
  int completions = 0;
  double h = 0.0;               // heuristic advantage of the action, <= 0
  double c_k = 0.0;             // shaping coefficient for this episode
  double shaping = 0.0;         // c_k * h, added to the reward
  double total = 0.0;
  bool infeasible_route = false;
};

struct TickRecord {
  long long tick = 0;
  double time = 0.0;
  int action = 0;
  RewardBreakdown reward;
  int router_queue_len = 0;
  std::vector<int> instance_running;
  std::vector<int> instance_waiting;
  int tokens_emitted = 0;
};

// The routing environment: a central queue feeding m instances, advanced
// in fixed delta-t ticks. One request is routed per tick at most.
class ClusterSim {
 public:
  ClusterSim(ClusterConfig cfg, ArrivalTrace trace,
             const EmpiricalPredictor* empirical = nullptr)
      : cfg_(std::move(cfg)),
        pool_(std::move(trace.requests)),
        empirical_(empirical),
        rng_(cfg_.predictor_seed) {
    cfg_.validate();
    if (cfg_.predictor_mode == PredictorMode::Empirical && !empirical_) {
      throw std::invalid_argument("empirical predictor model required");
    }
    for (std::size_t i = 1; i < pool_.size(); ++i) {
      if (pool_[i].arrival_time_s < pool_[i - 1].arrival_time_s) {
        throw std::invalid_argument("trace arrivals must be non-decreasing");
      }
    }
    instances_.reserve(static_cast<std::size_t>(cfg_.num_instances));
    for (int i = 0; i < cfg_.num_instances; ++i) {
      instances_.emplace_back(cfg_.instance, i);
    }
    inject_arrivals();
  }

  const ClusterConfig& config() const { return cfg_; }
  const RequestPool& pool() const { return pool_; }
  RequestPool& mutable_pool() { return pool_; }
  double clock() const { return clock_; }
  long long tick() const { return tick_; }
  bool done() const { return completed_ == pool_.size(); }
  std::size_t completed_count() const { return completed_; }
  const std::vector<TickRecord>& trajectory() const { return trajectory_; }
  const std::vector<Instance>& instances() const { return instances_; }
  const std::deque<std::uint32_t>& router_queue() const { return router_queue_; }
  const std::vector<long long>& tokens_per_second() const {
    return window_tokens_;
  }
  long long infeasible_routes() const { return infeasible_routes_; }
  int defer_action() const { return cfg_.num_instances; }

  SystemState system_state() const {
    SystemState s;
    s.clock = clock_;
    s.kv_capacity_tokens = cfg_.instance.kv_capacity_tokens;
    s.max_batch_size = cfg_.instance.max_batch_size;
    s.queue.reserve(router_queue_.size());
    for (auto idx : router_queue_) s.queue.push_back(&pool_[idx]);
    s.instances.reserve(instances_.size());
    for (const auto& inst : instances_) {
      s.instances.push_back(inst.snapshot(pool_, cfg_.profile,
                                          cfg_.state_scheme.edges,
                                          cfg_.state_scheme.edges));
    }
    return s;
  }

  StateVector state_vector() const {
    return encode_state(system_state(), cfg_.state_scheme);
  }

  // Move the router-queue element at `index` to the head (queue-reordering
  // policies only).
  void move_to_front(std::size_t index) {
    if (index >= router_queue_.size()) {
      throw std::invalid_argument("move_to_front: index out of range");
    }
    if (index == 0) return;
    auto it = router_queue_.begin() + static_cast<std::ptrdiff_t>(index);
    std::uint32_t v = *it;
    router_queue_.erase(it);
    router_queue_.push_front(v);
  }

  struct StepResult {
    double reward = 0.0;
    bool done = false;
    RewardBreakdown breakdown;
  };

  StepResult step(int action) {
    if (action < 0 || action > cfg_.num_instances) {
      throw std::invalid_argument("step: action out of range");
    }
    double t1 = clock_ + cfg_.delta_t;
    RewardBreakdown bd;
    bd.c_k = cfg_.reward.shaping_coefficient(cfg_.episode_k);

    if (action < cfg_.num_instances && !router_queue_.empty()) {
      std::uint32_t head = router_queue_.front();
      Request& r = pool_[head];
      if (static_cast<long long>(r.prompt_tokens) + r.true_decode_tokens >
          cfg_.instance.kv_capacity_tokens) {
        // A request no instance can ever hold: flagged and left queued.
        bd.infeasible_route = true;
        ++infeasible_routes_;
      } else {
        bd.h = heuristic_h(cfg_.impact, r.prompt_tokens, r.decode_estimate(),
                           instance_loads(), static_cast<std::size_t>(action));
        router_queue_.pop_front();
        r.routed_time_s = clock_;
        instances_[static_cast<std::size_t>(action)].enqueue(pool_, head,
                                                             clock_);
      }
    }

    int tokens_this_tick = 0;
    for (auto& inst : instances_) {
      inst.run_until(pool_, cfg_.profile, t1, [&](const IterationOutcome& out) {
        bd.completions += static_cast<int>(out.completed.size());
        tokens_this_tick += out.tokens_emitted;
        record_tokens(out.end_clock, out.tokens_emitted);
      });
    }
    completed_ += static_cast<std::size_t>(bd.completions);
    clock_ = t1;
    inject_arrivals();

    for (std::size_t i = 0; i < pool_.size(); ++i) {
      const Request& r = pool_[i];
      if (r.arrival_time_s > clock_ || r.completed()) continue;
      double d_hat = static_cast<double>(r.decode_estimate());
      double t_hat =
          estimate_request_time(cfg_.profile, r.prompt_tokens,
                                r.decode_estimate());
      double f = static_cast<double>(r.tokens_emitted) / d_hat;
      bd.queue_penalty += (1.0 / t_hat) * (1.0 - f);
    }

    bd.shaping = bd.c_k * bd.h;
    bd.total = -bd.queue_penalty +
               cfg_.reward.r_w * static_cast<double>(bd.completions) +
               bd.shaping;

    ++tick_;
    if (cfg_.record_trajectory) {
      TickRecord rec;
      rec.tick = tick_;
      rec.time = clock_;
      rec.action = action;
      rec.reward = bd;
      rec.router_queue_len = static_cast<int>(router_queue_.size());
      rec.tokens_emitted = tokens_this_tick;
      for (const auto& inst : instances_) {
        rec.instance_running.push_back(static_cast<int>(inst.running().size()));
        rec.instance_waiting.push_back(static_cast<int>(inst.waiting().size()));
      }
      trajectory_.push_back(std::move(rec));
    }

    return StepResult{bd.total, done(), bd};
  }

  // Drive the environment with a policy until every request completes.
  // Returns false if max_ticks elapsed first.
  bool run_policy(RoutingPolicy& policy, long long max_ticks = 10'000'000) {
    while (!done() && tick_ < max_ticks) {
      auto ss = system_state();
      std::size_t pick = policy.pick_queue_index(ss);
      if (pick != 0 && pick < router_queue_.size()) {
        move_to_front(pick);
        ss = system_state();
      }
      step(policy.decide(ss));
    }
    return done();
  }

  // Token-mass loads used by the impact estimator: one (p_j, d_j) entry
  // per request at the instance, d_j the tokens emitted so far.
  std::vector<InstanceLoad> instance_loads() const {
    std::vector<InstanceLoad> loads(instances_.size());
    for (std::size_t i = 0; i < instances_.size(); ++i) {
      for (const auto& e : instances_[i].running()) {
        const Request& r = pool_[e.req];
        loads[i].requests.emplace_back(r.prompt_tokens, r.tokens_emitted);
      }
      for (auto w : instances_[i].waiting()) {
        const Request& r = pool_[w];
        loads[i].requests.emplace_back(r.prompt_tokens, r.tokens_emitted);
      }
    }
    return loads;
  }

 private:
  void inject_arrivals() {
    while (arrival_cursor_ < pool_.size() &&
           pool_[arrival_cursor_].arrival_time_s <= clock_) {
      Request& r = pool_[arrival_cursor_];
      int true_bucket = cfg_.predictor_scheme.bucket_of(r.true_decode_tokens);
      int predicted = 0;
      if (cfg_.predictor_mode == PredictorMode::Empirical) {
        predicted = empirical_->predict(r.task, r.prompt_tokens);
      } else {
        predicted = predict_simulated(true_bucket, r.task, cfg_.accuracy,
                                      cfg_.predictor_scheme, rng_);
      }
      r.predicted_bucket = predicted;
      r.decode_estimate_tokens = static_cast<int>(
          cfg_.predictor_scheme.upper_bound_tokens(predicted));
      router_queue_.push_back(static_cast<std::uint32_t>(arrival_cursor_));
      ++arrival_cursor_;
    }
  }

  void record_tokens(double when, int tokens) {
    if (tokens == 0) return;
    auto w = static_cast<std::size_t>(std::max(0.0, when));
    if (window_tokens_.size() <= w) window_tokens_.resize(w + 1, 0);
    window_tokens_[w] += tokens;
  }

  ClusterConfig cfg_;
  RequestPool pool_;
  const EmpiricalPredictor* empirical_ = nullptr;
  Rng rng_;
  std::vector<Instance> instances_;
  std::deque<std::uint32_t> router_queue_;
  std::size_t arrival_cursor_ = 0;
  std::size_t completed_ = 0;
  double clock_ = 0.0;
  long long tick_ = 0;
  long long infeasible_routes_ = 0;
  std::vector<TickRecord> trajectory_;
  std::vector<long long> window_tokens_;
};

}  // namespace routesim
