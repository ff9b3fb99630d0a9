// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "routesim/instance.hpp"
#include "routesim/latency.hpp"
#include "routesim/request.hpp"

namespace routesim {

// Router-visible snapshot of the whole system at one tick. Queue order is
// arrival order; pointers stay valid for the duration of the tick.
struct SystemState {
  double clock = 0.0;
  std::vector<const Request*> queue;
  std::vector<InstanceFeatures> instances;
  long long kv_capacity_tokens = 0;
  int max_batch_size = 0;

  int num_instances() const { return static_cast<int>(instances.size()); }
  int defer_action() const { return num_instances(); }
  const Request* head() const { return queue.empty() ? nullptr : queue.front(); }
};

// Decision function shared by every heuristic and the RL agent: an action
// in {0..m-1} routes the queue head, m defers.
class RoutingPolicy {
 public:
  virtual ~RoutingPolicy() = default;
  virtual int decide(const SystemState& state) = 0;
  // Policies that re-order the router queue name the index to promote to
  // the head before deciding; everyone else serves in arrival order.
  virtual std::size_t pick_queue_index(const SystemState&) { return 0; }
  virtual std::string name() const = 0;
};

// Requests leave the central queue one at a time, and only toward an
// instance with room for the head's expected footprint.
inline bool can_accept(const InstanceFeatures& inst, const Request& head,
                       int max_batch_size) {
  return inst.free_reserved_kv_tokens >= Instance::reserved_tokens(head) &&
         inst.running_count + inst.waiting_count < max_batch_size;
}

class RoundRobinPolicy final : public RoutingPolicy {
 public:
  int decide(const SystemState& s) override {
    const Request* head = s.head();
    if (!head) return s.defer_action();
    auto target = static_cast<int>(
        next_ % static_cast<std::uint64_t>(s.num_instances()));
    // Strict alternation: wait for the next instance in the rotation.
    if (!can_accept(s.instances[static_cast<std::size_t>(target)], *head,
                    s.max_batch_size)) {
      return s.defer_action();
    }
    ++next_;
    return target;
  }
  std::string name() const override { return "round_robin"; }

 private:
  std::uint64_t next_ = 0;
};

// Instance 0 serves only heavy-decode requests, the rest serve the light
// ones (round robin among them when there is more than one).
class DedicatedSmallLargePolicy final : public RoutingPolicy {
 public:
  DedicatedSmallLargePolicy(const HardwareProfile& profile,
                            const Thresholds& thresholds)
      : heavy_cutoff_(heavy_decode_token_cutoff(profile, thresholds)) {}

  int decide(const SystemState& s) override {
    const Request* head = s.head();
    if (!head) return s.defer_action();
    int m = s.num_instances();
    int target;
    if (m < 2) {
      target = 0;
    } else if (head->decode_estimate() >= heavy_cutoff_) {
      target = 0;
    } else {
      target = 1 + static_cast<int>(light_next_ %
                                    static_cast<std::uint64_t>(m - 1));
    }
    if (!can_accept(s.instances[static_cast<std::size_t>(target)], *head,
                    s.max_batch_size)) {
      return s.defer_action();
    }
    if (m >= 2 && target >= 1) ++light_next_;
    return target;
  }
  std::string name() const override { return "dedicated_small_large"; }

 private:
  long long heavy_cutoff_;
  std::uint64_t light_next_ = 0;
};

// Oracle policy: balances the outstanding *true* decode token sums, as if
// output lengths were known beforehand.
class DecodeBalancerPolicy final : public RoutingPolicy {
 public:
  int decide(const SystemState& s) override {
    const Request* head = s.head();
    if (!head) return s.defer_action();
    int best = -1;
    for (int i = 0; i < s.num_instances(); ++i) {
      if (!can_accept(s.instances[static_cast<std::size_t>(i)], *head,
                      s.max_batch_size)) {
        continue;
      }
      if (best < 0 || s.instances[static_cast<std::size_t>(i)].outstanding_true_decode <
                          s.instances[static_cast<std::size_t>(best)].outstanding_true_decode) {
        best = i;
      }
    }
    return best < 0 ? s.defer_action() : best;
  }
  std::string name() const override { return "decode_balancer"; }
};

// Join Shortest Queue over tokens still to be processed (pending prompt
// plus estimated decode left).
class JsqPolicy final : public RoutingPolicy {
 public:
  int decide(const SystemState& s) override {
    if (!s.head()) return s.defer_action();
    auto load = [&](int i) {
      return s.instances[i].pending_prompt_tokens +
             s.instances[i].outstanding_decode_estimate;
    };
    int best = 0;
    for (int i = 1; i < s.num_instances(); ++i) {
      if (load(i) < load(best)) best = i;
    }
    return best;
  }
  std::string name() const override { return "jsq"; }
};

// Routes the head to the emptiest instance that can take it, acting at
// most once per second.
class MaxCapacityPolicy final : public RoutingPolicy {
 public:
  int decide(const SystemState& s) override {
    const Request* head = s.head();
    if (!head || s.clock < next_allowed_) return s.defer_action();
    int best = 0;
    for (int i = 1; i < s.num_instances(); ++i) {
      if (s.instances[i].capacity > s.instances[best].capacity) best = i;
    }
    if (s.instances[best].free_reserved_kv_tokens <
        Instance::reserved_tokens(*head)) {
      return s.defer_action();
    }
    next_allowed_ = s.clock + 1.0;
    return best;
  }
  std::string name() const override { return "max_capacity"; }

 private:
  double next_allowed_ = 0.0;
};

// Classical Min-Min: the shortest estimated job (prompt tokens plus the
// predicted bucket's upper bound) goes first, to the instance with the
// least estimated work left. The only policy that re-orders the queue.
class MinMinPolicy final : public RoutingPolicy {
 public:
  explicit MinMinPolicy(const HardwareProfile& profile) : profile_(profile) {}

  std::size_t pick_queue_index(const SystemState& s) override {
    std::size_t best = 0;
    double best_time = std::numeric_limits<double>::max();
    for (std::size_t i = 0; i < s.queue.size(); ++i) {
      double t = estimate_request_time(profile_, s.queue[i]->prompt_tokens,
                                       s.queue[i]->decode_estimate());
      if (t < best_time) {
        best_time = t;
        best = i;
      }
    }
    return best;
  }

  int decide(const SystemState& s) override {
    if (!s.head()) return s.defer_action();
    auto ready = [&](int i) {
      return static_cast<double>(s.instances[i].pending_prompt_tokens) *
                 profile_.prompt_time_per_token +
             static_cast<double>(s.instances[i].outstanding_decode_estimate) *
                 profile_.decode_time_base;
    };
    int best = 0;
    for (int i = 1; i < s.num_instances(); ++i) {
      if (ready(i) < ready(best)) best = i;
    }
    return best;
  }
  std::string name() const override { return "min_min"; }

 private:
  HardwareProfile profile_;
};

// Routes the head as soon as any instance has room for it.
class EarliestAvailablePolicy final : public RoutingPolicy {
 public:
  int decide(const SystemState& s) override {
    const Request* head = s.head();
    if (!head) return s.defer_action();
    for (int i = 0; i < s.num_instances(); ++i) {
      if (s.instances[i].free_reserved_kv_tokens >=
          Instance::reserved_tokens(*head)) {
        return i;
      }
    }
    return s.defer_action();
  }
  std::string name() const override { return "earliest_available"; }
};

inline std::unique_ptr<RoutingPolicy> make_policy(const std::string& name,
                                                  const HardwareProfile& profile,
                                                  const Thresholds& thresholds) {
  if (name == "round_robin") return std::make_unique<RoundRobinPolicy>();
  if (name == "dedicated_small_large") {
    return std::make_unique<DedicatedSmallLargePolicy>(profile, thresholds);
  }
  if (name == "decode_balancer") return std::make_unique<DecodeBalancerPolicy>();
  if (name == "jsq") return std::make_unique<JsqPolicy>();
  if (name == "max_capacity") return std::make_unique<MaxCapacityPolicy>();
  if (name == "min_min") return std::make_unique<MinMinPolicy>(profile);
  if (name == "earliest_available") {
    return std::make_unique<EarliestAvailablePolicy>();
  }
  throw std::invalid_argument("unknown routing policy: " + name);
}

}  // namespace routesim
