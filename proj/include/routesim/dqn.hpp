// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "routesim/env.hpp"
#include "routesim/mlp.hpp"
#include "routesim/replay.hpp"
#include "routesim/rng.hpp"

namespace routesim {

struct AgentConfig {
  double learning_rate = 1e-3;
  std::size_t replay_capacity = 100000;
  std::size_t batch_size = 512;
  long long target_sync_interval = 1000;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int exploration_cutoff_episode = 20;
  int hidden = 64;

  void validate() const {
    if (learning_rate <= 0.0) throw std::invalid_argument("agent: lr must be > 0");
    if (batch_size == 0 || batch_size > replay_capacity) {
      throw std::invalid_argument("agent: batch_size must be in [1, replay_capacity]");
    }
    if (target_sync_interval < 1) {
      throw std::invalid_argument("agent: target_sync_interval must be >= 1");
    }
    if (epsilon_start < 0 || epsilon_start > 1 || epsilon_end < 0 ||
        epsilon_end > 1) {
      throw std::invalid_argument("agent: epsilon outside [0, 1]");
    }
    if (exploration_cutoff_episode < 0) {
      throw std::invalid_argument("agent: exploration cutoff must be >= 0");
    }
    if (hidden < 1) throw std::invalid_argument("agent: hidden must be >= 1");
  }
};

// Double-DQN agent over the state encoding, sized (state_dim, 64, 64, m+1)
// by default.
class DqnAgent {
 public:
  DqnAgent(int state_dim, int num_actions, AgentConfig cfg, std::uint64_t seed)
      : cfg_(cfg),
        init_rng_(seed),
        online_(Mlp::random({state_dim, cfg.hidden, cfg.hidden, num_actions},
                            init_rng_)),
        target_(online_),
        adam_(online_.param_count(), cfg.learning_rate) {
    cfg_.validate();
  }

  const AgentConfig& config() const { return cfg_; }
  const Mlp& online() const { return online_; }
  Mlp& online() { return online_; }
  const Mlp& target() const { return target_; }
  int num_actions() const { return online_.output_dim(); }
  long long updates() const { return updates_; }

  // Linear anneal over episodes [0, cutoff]; exactly zero afterwards.
  double epsilon_for(int episode) const {
    if (episode > cfg_.exploration_cutoff_episode) return 0.0;
    if (cfg_.exploration_cutoff_episode == 0) return cfg_.epsilon_end;
    double frac = static_cast<double>(episode) /
                  static_cast<double>(cfg_.exploration_cutoff_episode);
    return cfg_.epsilon_start +
           (cfg_.epsilon_end - cfg_.epsilon_start) * std::min(1.0, frac);
  }

  static int argmax_action(const std::vector<double>& q) {
    int best = 0;
    for (int a = 1; a < static_cast<int>(q.size()); ++a) {
      if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) {
        best = a;  // strict: ties keep the lowest index
      }
    }
    return best;
  }

  int act(const StateVector& state, int episode, Rng& rng) const {
    double eps = epsilon_for(episode);
    if (eps > 0.0 && rng.uniform() < eps) {
      return static_cast<int>(
          rng.uniform_below(static_cast<std::uint64_t>(num_actions())));
    }
    return argmax_action(online_.forward(state));
  }

  int greedy(const StateVector& state) const {
    return argmax_action(online_.forward(state));
  }

  // One double-DQN step: actions picked by the online net, evaluated by
  // the target net. No-op (nullopt) until the buffer can fill a batch.
  std::optional<double> update(const ReplayBuffer& replay, Rng& rng,
                               double discount) {
    if (replay.size() < cfg_.batch_size) return std::nullopt;
    auto batch = replay.sample(cfg_.batch_size, rng);
    std::vector<Mlp::Sample> samples;
    samples.reserve(batch.size());
    for (const Transition* t : batch) {
      double target = t->reward;
      if (!t->done) {
        int a_star = argmax_action(online_.forward(t->next_state));
        target += discount *
                  target_.forward(t->next_state)[static_cast<std::size_t>(a_star)];
      }
      samples.push_back(Mlp::Sample{&t->state, t->action, target});
    }
    double loss = online_.loss_and_gradient(samples, grad_);
    adam_.step(online_.params(), grad_);
    ++updates_;
    if (updates_ % cfg_.target_sync_interval == 0) sync_target();
    return loss;
  }

  void sync_target() { target_ = online_; }

  // Flat little-endian doubles at `path`, shapes and config in a JSON
  // sidecar at `path` + ".json". The target net is rebuilt from the online
  // parameters on load.
  void save(const std::string& path) const {
    std::ofstream bin(path, std::ios::binary);
    if (!bin) throw std::runtime_error("agent save: cannot open " + path);
    for (double d : online_.params()) {
      std::uint64_t u = std::bit_cast<std::uint64_t>(d);
      unsigned char le[8];
      for (int i = 0; i < 8; ++i) {
        le[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
      }
      bin.write(reinterpret_cast<const char*>(le), 8);
    }
    nlohmann::ordered_json side;
    side["layers"] = online_.dims();
    side["param_count"] = online_.param_count();
    side["config"] = {{"learning_rate", cfg_.learning_rate},
                      {"replay_capacity", cfg_.replay_capacity},
                      {"batch_size", cfg_.batch_size},
                      {"target_sync_interval", cfg_.target_sync_interval},
                      {"epsilon_start", cfg_.epsilon_start},
                      {"epsilon_end", cfg_.epsilon_end},
                      {"exploration_cutoff_episode",
                       cfg_.exploration_cutoff_episode},
                      {"hidden", cfg_.hidden}};
    std::ofstream js(path + ".json");
    if (!js) throw std::runtime_error("agent save: cannot open " + path + ".json");
    js << side.dump(2) << '\n';
  }

  static DqnAgent load(const std::string& path) {
    std::ifstream js(path + ".json");
    if (!js) throw std::runtime_error("agent load: cannot open " + path + ".json");
    nlohmann::json side = nlohmann::json::parse(js);
    std::vector<int> dims = side.at("layers").get<std::vector<int>>();
    AgentConfig cfg;
    const auto& c = side.at("config");
    cfg.learning_rate = c.at("learning_rate").get<double>();
    cfg.replay_capacity = c.at("replay_capacity").get<std::size_t>();
    cfg.batch_size = c.at("batch_size").get<std::size_t>();
    cfg.target_sync_interval = c.at("target_sync_interval").get<long long>();
    cfg.epsilon_start = c.at("epsilon_start").get<double>();
    cfg.epsilon_end = c.at("epsilon_end").get<double>();
    cfg.exploration_cutoff_episode =
        c.at("exploration_cutoff_episode").get<int>();
    cfg.hidden = c.at("hidden").get<int>();

    DqnAgent agent(dims.front(), dims.back(), cfg, 0);
    if (agent.online_.dims() != dims) {
      // Hidden sizes other than the default are rebuilt explicitly.
      agent.online_ = Mlp(dims);
      agent.adam_ = AdamOptimizer(agent.online_.param_count(),
                                  cfg.learning_rate);
    }
    std::ifstream bin(path, std::ios::binary);
    if (!bin) throw std::runtime_error("agent load: cannot open " + path);
    for (double& d : agent.online_.params()) {
      unsigned char le[8];
      bin.read(reinterpret_cast<char*>(le), 8);
      if (!bin) throw std::runtime_error("agent load: truncated file " + path);
      std::uint64_t u = 0;
      for (int i = 0; i < 8; ++i) {
        u |= static_cast<std::uint64_t>(le[i]) << (8 * i);
      }
      d = std::bit_cast<double>(u);
    }
    agent.sync_target();
    return agent;
  }

 private:
  AgentConfig cfg_;
  Rng init_rng_;
  Mlp online_;
  Mlp target_;
  AdamOptimizer adam_;
  long long updates_ = 0;
  std::vector<double> grad_;
};

struct EpisodeStats {
  int episode = 0;
  double cumulative_reward = 0.0;
  double mean_e2e = 0.0;
  double makespan = 0.0;
  double epsilon = 0.0;
  double shaping_c = 0.0;
  double discount = 0.0;
  double mean_loss = 0.0;
  long long transitions = 0;
  bool finished = false;
};

// Standard loop: act, step, store, update. The factory builds a fresh
// environment for episode k with its episode_k field set to k; the
// training discount is the episode's guided discount.
template <typename EnvFactory>
std::vector<EpisodeStats> train_agent(DqnAgent& agent, EnvFactory&& make_env,
                                      int episodes, ReplayBuffer& replay,
                                      Rng& rng,
                                      long long max_ticks_per_episode =
                                          2'000'000) {
  if (episodes < 1) throw std::invalid_argument("train: episodes must be >= 1");
  std::vector<EpisodeStats> stats;
  stats.reserve(static_cast<std::size_t>(episodes));
  for (int k = 0; k < episodes; ++k) {
    ClusterSim env = make_env(k);
    double discount = env.config().reward.guided_discount(k);
    EpisodeStats ep;
    ep.episode = k;
    ep.epsilon = agent.epsilon_for(k);
    ep.shaping_c = env.config().reward.shaping_coefficient(k);
    ep.discount = discount;
    StateVector s = env.state_vector();
    double loss_sum = 0.0;
    long long loss_count = 0;
    while (!env.done() && env.tick() < max_ticks_per_episode) {
      int a = agent.act(s, k, rng);
      auto res = env.step(a);
      StateVector next = env.state_vector();
      replay.push(Transition{s, a, res.reward, next, res.done});
      if (auto loss = agent.update(replay, rng, discount)) {
        loss_sum += *loss;
        ++loss_count;
      }
      ep.cumulative_reward += res.reward;
      ++ep.transitions;
      s = std::move(next);
    }
    ep.finished = env.done();
    double e2e_sum = 0.0;
    std::size_t n = 0;
    double last_completion = 0.0;
    double first_arrival = env.pool().empty() ? 0.0
                                              : env.pool().front().arrival_time_s;
    for (const auto& r : env.pool()) {
      double end = r.completed() ? r.completion_time_s : env.clock();
      e2e_sum += end - r.arrival_time_s;
      last_completion = std::max(last_completion, end);
      ++n;
    }
    ep.mean_e2e = n ? e2e_sum / static_cast<double>(n) : 0.0;
    ep.makespan = last_completion - first_arrival;
    ep.mean_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    stats.push_back(ep);
  }
  return stats;
}

// Frozen-agent policy adapter sharing the heuristics' contract.
class RlPolicy final : public RoutingPolicy {
 public:
  explicit RlPolicy(const DqnAgent& agent, BucketScheme state_scheme)
      : agent_(agent), scheme_(std::move(state_scheme)) {}

  int decide(const SystemState& s) override {
    return agent_.greedy(encode_state(s, scheme_));
  }
  std::string name() const override { return "rl"; }

 private:
  const DqnAgent& agent_;
  BucketScheme scheme_;
};

}  // namespace routesim
