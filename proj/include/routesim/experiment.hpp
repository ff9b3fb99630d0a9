// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "routesim/dqn.hpp"
#include "routesim/env.hpp"
#include "routesim/metrics.hpp"
#include "routesim/policies.hpp"
#include "routesim/predictor.hpp"
#include "routesim/workload.hpp"

namespace routesim {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class WorkloadKind { Mixture, Scenario, Trace };

struct PartitionSpec {
  int n_requests = 8;
  double arrival_interval_s = 1.0;
  int min_tokens = 10;
  int max_tokens = 100;
};

struct TrainSpec {
  int episodes = 20;
  std::vector<std::uint64_t> eval_seeds = {1, 2, 3, 4, 5};
  long long max_ticks_per_episode = 2'000'000;
};

// One experiment per file; a "matrix" block expands batching x routing
// cross products in a single invocation.
struct ExperimentConfig {
  HardwareProfile profile;
  Thresholds thresholds;
  ImpactConfig impact;
  RewardConfig reward;
  AgentConfig agent;
  InstanceConfig instance;
  int num_instances = 4;
  double delta_t = 0.02;

  WorkloadKind workload_kind = WorkloadKind::Mixture;
  ScenarioKind scenario = ScenarioKind::AllRandom;
  std::size_t n_requests = 2000;
  ArrivalSpec arrival{ArrivalProcess::Poisson, 20.0};
  std::string trace_path;

  PredictorMode predictor_mode = PredictorMode::Simulated;
  AccuracyTable accuracy = AccuracyTable::dataset_default();
  std::vector<long long> predictor_band_edges =
      EmpiricalPredictor::default_band_edges();

  std::string routing_policy = "round_robin";
  std::string agent_path;

  std::uint64_t seed = 1;
  std::string output_dir = "out";
  bool record_trajectory = true;

  std::vector<std::string> matrix_batching;
  std::vector<std::string> matrix_routing;
  PartitionSpec partition;
  TrainSpec train;

  void validate() const {
    try {
      profile.validate();
      thresholds.validate();
      impact.validate();
      reward.validate();
      agent.validate();
      instance.validate();
      accuracy.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (num_instances < 1) throw ConfigError("cluster.instances: must be >= 1");
    if (delta_t <= 0.0) throw ConfigError("cluster.delta_t_s: must be > 0");
    if (n_requests < 1) throw ConfigError("workload.n_requests: must be >= 1");
    if (arrival.rate_per_s <= 0.0) {
      throw ConfigError("workload.arrival.rate_per_s: must be > 0");
    }
    if (workload_kind == WorkloadKind::Trace && trace_path.empty()) {
      throw ConfigError("workload.trace_path: required for trace workloads");
    }
    if (routing_policy == "rl" && agent_path.empty()) {
      throw ConfigError("routing.agent_path: required for the rl policy");
    }
    if (partition.n_requests < 1 || partition.n_requests > 14) {
      throw ConfigError("partition.n_requests: must be in [1, 14]");
    }
    if (partition.min_tokens < 1 ||
        partition.max_tokens < partition.min_tokens) {
      throw ConfigError("partition: need 1 <= min_tokens <= max_tokens");
    }
    if (train.episodes < 1) throw ConfigError("train.episodes: must be >= 1");
  }

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
      throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return from_json(j);
  }
};

namespace detail {

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception&) {
    throw ConfigError(std::string("bad value for field: ") + key);
  }
}

inline const nlohmann::json* section(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return nullptr;
  if (!j.at(key).is_object()) {
    throw ConfigError(std::string(key) + ": expected an object");
  }
  return &j.at(key);
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  using detail::get_or;
  using detail::section;
  ExperimentConfig cfg;

  if (const auto* p = section(j, "profile")) {
    cfg.profile.prompt_time_per_token =
        get_or(*p, "prompt_time_per_token", cfg.profile.prompt_time_per_token);
    cfg.profile.prompt_time_intercept =
        get_or(*p, "prompt_time_intercept", cfg.profile.prompt_time_intercept);
    cfg.profile.decode_time_per_token =
        get_or(*p, "decode_time_per_token", cfg.profile.decode_time_per_token);
    cfg.profile.decode_time_base =
        get_or(*p, "decode_time_base", cfg.profile.decode_time_base);
  }
  if (const auto* t = section(j, "thresholds")) {
    cfg.thresholds.heavy_prompt_seconds =
        get_or(*t, "heavy_prompt_seconds", cfg.thresholds.heavy_prompt_seconds);
    cfg.thresholds.heavy_decode_seconds =
        get_or(*t, "heavy_decode_seconds", cfg.thresholds.heavy_decode_seconds);
  }
  if (const auto* im = section(j, "impact")) {
    cfg.impact.grad1 = get_or(*im, "grad1", cfg.impact.grad1);
    cfg.impact.grad2 = get_or(*im, "grad2", cfg.impact.grad2);
    cfg.impact.epsilon_s = get_or(*im, "epsilon_s", cfg.impact.epsilon_s);
    cfg.impact.alpha = get_or(*im, "alpha", cfg.impact.alpha);
    cfg.impact.prompt_exponent =
        get_or(*im, "prompt_exponent", cfg.impact.prompt_exponent);
  }
  if (const auto* r = section(j, "reward")) {
    cfg.reward.r_w = get_or(*r, "r_w", cfg.reward.r_w);
    cfg.reward.gamma = get_or(*r, "gamma", cfg.reward.gamma);
    cfg.reward.beta_d = get_or(*r, "beta_d", cfg.reward.beta_d);
    cfg.reward.shaping = shaping_from_string(
        get_or<std::string>(*r, "shaping_mode", to_string(cfg.reward.shaping)));
  }
  if (const auto* a = section(j, "agent")) {
    cfg.agent.learning_rate =
        get_or(*a, "learning_rate", cfg.agent.learning_rate);
    cfg.agent.replay_capacity =
        get_or(*a, "replay_capacity", cfg.agent.replay_capacity);
    cfg.agent.batch_size = get_or(*a, "batch_size", cfg.agent.batch_size);
    cfg.agent.target_sync_interval =
        get_or(*a, "target_sync_interval", cfg.agent.target_sync_interval);
    cfg.agent.epsilon_start =
        get_or(*a, "epsilon_start", cfg.agent.epsilon_start);
    cfg.agent.epsilon_end = get_or(*a, "epsilon_end", cfg.agent.epsilon_end);
    cfg.agent.exploration_cutoff_episode = get_or(
        *a, "exploration_cutoff_episode", cfg.agent.exploration_cutoff_episode);
    cfg.agent.hidden = get_or(*a, "hidden", cfg.agent.hidden);
  }
  if (const auto* c = section(j, "cluster")) {
    cfg.num_instances = get_or(*c, "instances", cfg.num_instances);
    cfg.instance.kv_capacity_tokens =
        get_or(*c, "kv_capacity_tokens", cfg.instance.kv_capacity_tokens);
    cfg.instance.max_batch_size =
        get_or(*c, "max_batch_size", cfg.instance.max_batch_size);
    cfg.instance.batching = batching_from_string(
        get_or<std::string>(*c, "batching_policy",
                            to_string(cfg.instance.batching)));
    if (c->contains("chunk_size") && !c->at("chunk_size").is_null()) {
      cfg.instance.chunk_size = c->at("chunk_size").get<int>();
    }
    cfg.delta_t = get_or(*c, "delta_t_s", cfg.delta_t);
  }
  if (const auto* w = section(j, "workload")) {
    std::string kind = get_or<std::string>(*w, "kind", "mixture");
    if (kind == "mixture") {
      cfg.workload_kind = WorkloadKind::Mixture;
    } else if (kind == "scenario") {
      cfg.workload_kind = WorkloadKind::Scenario;
    } else if (kind == "trace") {
      cfg.workload_kind = WorkloadKind::Trace;
    } else {
      throw ConfigError("workload.kind: unknown kind " + kind);
    }
    cfg.n_requests = get_or<std::size_t>(*w, "n_requests", cfg.n_requests);
    if (w->contains("scenario")) {
      cfg.scenario = scenario_from_string(w->at("scenario").get<std::string>());
    }
    cfg.trace_path = get_or<std::string>(*w, "trace_path", cfg.trace_path);
    if (const auto* ar = section(*w, "arrival")) {
      std::string proc = get_or<std::string>(*ar, "process", "poisson");
      if (proc == "poisson") {
        cfg.arrival.process = ArrivalProcess::Poisson;
      } else if (proc == "fixed") {
        cfg.arrival.process = ArrivalProcess::FixedInterval;
      } else {
        throw ConfigError("workload.arrival.process: unknown process " + proc);
      }
      cfg.arrival.rate_per_s =
          get_or(*ar, "rate_per_s", cfg.arrival.rate_per_s);
    }
  }
  if (const auto* p = section(j, "predictor")) {
    std::string mode = get_or<std::string>(*p, "mode", "simulated");
    if (mode == "simulated") {
      cfg.predictor_mode = PredictorMode::Simulated;
    } else if (mode == "empirical") {
      cfg.predictor_mode = PredictorMode::Empirical;
    } else {
      throw ConfigError("predictor.mode: unknown mode " + mode);
    }
    if (get_or(*p, "perfect", false)) {
      cfg.accuracy = AccuracyTable::perfect();
    }
    if (p->contains("accuracy")) {
      for (const auto& [task, value] : p->at("accuracy").items()) {
        cfg.accuracy.accuracy[task_from_string(task)] = value.get<double>();
      }
    }
  }
  if (const auto* r = section(j, "routing")) {
    cfg.routing_policy = get_or<std::string>(*r, "policy", cfg.routing_policy);
    cfg.agent_path = get_or<std::string>(*r, "agent_path", cfg.agent_path);
  }
  if (const auto* m = section(j, "matrix")) {
    cfg.matrix_batching =
        get_or(*m, "batching", std::vector<std::string>{});
    cfg.matrix_routing = get_or(*m, "routing", std::vector<std::string>{});
  }
  if (const auto* p = section(j, "partition")) {
    cfg.partition.n_requests = get_or(*p, "n_requests", cfg.partition.n_requests);
    cfg.partition.arrival_interval_s =
        get_or(*p, "arrival_interval_s", cfg.partition.arrival_interval_s);
    cfg.partition.min_tokens = get_or(*p, "min_tokens", cfg.partition.min_tokens);
    cfg.partition.max_tokens = get_or(*p, "max_tokens", cfg.partition.max_tokens);
  }
  if (const auto* t = section(j, "train")) {
    cfg.train.episodes = get_or(*t, "episodes", cfg.train.episodes);
    cfg.train.eval_seeds =
        get_or(*t, "eval_seeds", cfg.train.eval_seeds);
    cfg.train.max_ticks_per_episode =
        get_or(*t, "max_ticks_per_episode", cfg.train.max_ticks_per_episode);
  }
  cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
  cfg.output_dir = get_or<std::string>(j, "output_dir", cfg.output_dir);
  cfg.record_trajectory =
      get_or(j, "record_trajectory", cfg.record_trajectory);
  cfg.validate();
  return cfg;
}

inline ArrivalTrace build_workload(const ExperimentConfig& cfg,
                                   std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xB00C));
  switch (cfg.workload_kind) {
    case WorkloadKind::Mixture:
      return generate_dataset_mixture(cfg.profile, cfg.thresholds,
                                      cfg.n_requests, cfg.arrival, rng);
    case WorkloadKind::Scenario:
      return generate_scenario(cfg.scenario, cfg.n_requests, cfg.arrival,
                               cfg.profile, cfg.thresholds, rng);
    case WorkloadKind::Trace:
      return load_trace(cfg.trace_path);
  }
  throw ConfigError("unreachable workload kind");
}

inline ClusterConfig to_cluster_config(const ExperimentConfig& cfg,
                                       int episode_k = 0,
                                       bool record_trajectory = true) {
  ClusterConfig c;
  c.profile = cfg.profile;
  c.thresholds = cfg.thresholds;
  c.impact = cfg.impact;
  c.reward = cfg.reward;
  c.instance = cfg.instance;
  c.num_instances = cfg.num_instances;
  c.delta_t = cfg.delta_t;
  c.predictor_mode = PredictorMode::Simulated;
  c.accuracy = cfg.accuracy;
  c.predictor_seed = mix_seed(cfg.seed, 0x9Ded);
  c.episode_k = episode_k;
  c.record_trajectory = record_trajectory;
  return c;
}

struct RunOutput {
  MetricsReport report;
  std::vector<TickRecord> trajectory;
  std::vector<long long> tokens_per_second;
  bool finished = true;
  long long infeasible_routes = 0;
};

// Builds the workload and environment, plays the episode under the
// configured policy, and aggregates metrics.
inline RunOutput run_experiment(const ExperimentConfig& cfg,
                                const DqnAgent* agent = nullptr) {
  cfg.validate();
  auto trace = build_workload(cfg, cfg.seed);
  auto cluster = to_cluster_config(cfg, 0, cfg.record_trajectory);

  std::optional<EmpiricalPredictor> empirical;
  if (cfg.predictor_mode == PredictorMode::Empirical) {
    Rng rng(mix_seed(cfg.seed, 0xF17));
    auto training = generate_dataset_mixture(cfg.profile, cfg.thresholds,
                                             20000, cfg.arrival, rng);
    empirical = EmpiricalPredictor::fit(training.requests,
                                        cluster.predictor_scheme,
                                        cfg.predictor_band_edges);
    cluster.predictor_mode = PredictorMode::Empirical;
  }

  ClusterSim sim(cluster, std::move(trace),
                 empirical ? &*empirical : nullptr);

  std::unique_ptr<RoutingPolicy> policy;
  std::optional<DqnAgent> loaded;
  if (cfg.routing_policy == "rl") {
    if (!agent) {
      loaded = DqnAgent::load(cfg.agent_path);
      agent = &*loaded;
    }
    policy = std::make_unique<RlPolicy>(*agent, cluster.state_scheme);
  } else {
    policy = make_policy(cfg.routing_policy, cfg.profile, cfg.thresholds);
  }

  RunOutput out;
  out.finished = sim.run_policy(*policy);
  out.infeasible_routes = sim.infeasible_routes();
  if (!out.finished) {
    throw std::runtime_error(
        "run_experiment: episode did not finish (policy starved the queue)");
  }
  out.trajectory = sim.trajectory();
  out.tokens_per_second = sim.tokens_per_second();
  out.report = compute_metrics(sim.pool(), cfg.profile, cfg.thresholds,
                               out.trajectory, out.tokens_per_second);
  return out;
}

struct MatrixCell {
  std::string batching;
  std::string routing;
  MetricsReport report;
};

// Table-style grid: every batching x routing combination on one workload.
inline std::vector<MatrixCell> run_matrix(const ExperimentConfig& cfg) {
  std::vector<std::string> batchings = cfg.matrix_batching;
  std::vector<std::string> routings = cfg.matrix_routing;
  if (batchings.empty()) {
    batchings = {"bin_packing", "least_work_left", "fcfs"};
  }
  if (routings.empty()) {
    routings = {"dedicated_small_large", "round_robin", "decode_balancer"};
  }
  std::vector<MatrixCell> cells;
  for (const auto& b : batchings) {
    for (const auto& r : routings) {
      ExperimentConfig cell = cfg;
      cell.instance.batching = batching_from_string(b);
      cell.routing_policy = r;
      cell.record_trajectory = false;
      MatrixCell mc;
      mc.batching = b;
      mc.routing = r;
      mc.report = run_experiment(cell).report;
      cells.push_back(std::move(mc));
    }
  }
  return cells;
}

struct PartitionAssignment {
  std::uint32_t mask = 0;
  double total_e2e_s = 0.0;
  double makespan_s = 0.0;
};

struct PartitionStudy {
  double best_total_e2e = 0.0;
  double worst_total_e2e = 0.0;
  double mean_total_e2e = 0.0;
  std::uint32_t best_mask = 0;
  std::vector<PartitionAssignment> assignments;
};

// Simulates one instance fed with a fixed subset of requests at their
// arrival times.
inline void run_assigned(Instance& inst, RequestPool& pool,
                         const std::vector<std::uint32_t>& assigned,
                         const HardwareProfile& profile) {
  std::size_t cursor = 0;
  while (cursor < assigned.size() || inst.has_work()) {
    if (!inst.has_work()) {
      double next = pool[assigned[cursor]].arrival_time_s;
      inst.set_clock(std::max(inst.clock(), next));
    }
    while (cursor < assigned.size() &&
           pool[assigned[cursor]].arrival_time_s <= inst.clock()) {
      inst.enqueue(pool, assigned[cursor], pool[assigned[cursor]].arrival_time_s);
      ++cursor;
    }
    inst.step(pool, profile);
  }
}

// Exhaustive two-instance assignment study over at most 14 requests.
inline PartitionStudy brute_force_partition(const std::vector<Request>& base,
                                            const HardwareProfile& profile,
                                            const InstanceConfig& inst_cfg) {
  if (base.empty() || base.size() > 14) {
    throw std::invalid_argument(
        "brute_force_partition: request count must be in [1, 14] "
        "(2^n assignments are simulated)");
  }
  PartitionStudy study;
  auto n = static_cast<std::uint32_t>(base.size());
  std::uint32_t masks = 1u << n;
  study.assignments.reserve(masks);
  double sum = 0.0;
  for (std::uint32_t mask = 0; mask < masks; ++mask) {
    RequestPool pool(base.begin(), base.end());
    std::vector<std::uint32_t> left, right;
    for (std::uint32_t i = 0; i < n; ++i) {
      (mask & (1u << i) ? right : left).push_back(i);
    }
    Instance a(inst_cfg, 0), b(inst_cfg, 1);
    if (!left.empty()) run_assigned(a, pool, left, profile);
    if (!right.empty()) run_assigned(b, pool, right, profile);
    PartitionAssignment pa;
    pa.mask = mask;
    double first_arrival = std::numeric_limits<double>::max();
    double last_completion = 0.0;
    for (const auto& r : pool) {
      pa.total_e2e_s += r.completion_time_s - r.arrival_time_s;
      first_arrival = std::min(first_arrival, r.arrival_time_s);
      last_completion = std::max(last_completion, r.completion_time_s);
    }
    pa.makespan_s = last_completion - first_arrival;
    sum += pa.total_e2e_s;
    if (study.assignments.empty() ||
        pa.total_e2e_s < study.best_total_e2e) {
      study.best_total_e2e = pa.total_e2e_s;
      study.best_mask = mask;
    }
    if (study.assignments.empty() ||
        pa.total_e2e_s > study.worst_total_e2e) {
      study.worst_total_e2e = pa.total_e2e_s;
    }
    study.assignments.push_back(pa);
  }
  study.mean_total_e2e = sum / static_cast<double>(masks);
  return study;
}

inline std::vector<Request> partition_requests(const PartitionSpec& spec,
                                               std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x9A57));
  std::vector<Request> reqs;
  for (int i = 0; i < spec.n_requests; ++i) {
    Request r;
    r.id = static_cast<std::uint64_t>(i);
    r.task = TaskKind::QnA;
    r.prompt_tokens = static_cast<int>(
        rng.uniform_int(spec.min_tokens, spec.max_tokens));
    r.true_decode_tokens = static_cast<int>(
        rng.uniform_int(spec.min_tokens, spec.max_tokens));
    r.arrival_time_s = spec.arrival_interval_s * static_cast<double>(i);
    reqs.push_back(r);
  }
  return reqs;
}

// Least-squares slope/intercept fits of measured iteration latencies.
// CSV columns: phase (prompt|decode), tokens, seconds.
inline HardwareProfile calibrate_profile(const std::string& csv_path,
                                         HardwareProfile base = {}) {
  std::ifstream in(csv_path);
  if (!in) throw ConfigError("calibrate: cannot open " + csv_path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("calibrate: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "phase,tokens,seconds") {
    throw ConfigError("calibrate: header must be phase,tokens,seconds");
  }
  struct Fit {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    long long n = 0;
    void add(double x, double y) {
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++n;
    }
    std::pair<double, double> solve() const {  // slope, intercept
      double denom = static_cast<double>(n) * sxx - sx * sx;
      if (n < 2 || denom == 0.0) {
        throw ConfigError("calibrate: need >= 2 distinct token counts per phase");
      }
      double slope = (static_cast<double>(n) * sxy - sx * sy) / denom;
      double intercept = (sy - slope * sx) / static_cast<double>(n);
      return {slope, intercept};
    }
  };
  Fit prompt, decode;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string phase, tokens, seconds;
    if (!std::getline(ss, phase, ',') || !std::getline(ss, tokens, ',') ||
        !std::getline(ss, seconds)) {
      throw ConfigError("calibrate: line " + std::to_string(lineno) +
                        ": expected 3 fields");
    }
    double x, y;
    try {
      x = std::stod(tokens);
      y = std::stod(seconds);
    } catch (const std::exception&) {
      throw ConfigError("calibrate: line " + std::to_string(lineno) +
                        ": bad number");
    }
    if (phase == "prompt") {
      prompt.add(x, y);
    } else if (phase == "decode") {
      decode.add(x, y);
    } else {
      throw ConfigError("calibrate: line " + std::to_string(lineno) +
                        ": phase must be prompt or decode");
    }
  }
  if (prompt.n == 0 && decode.n == 0) {
    throw ConfigError("calibrate: no samples");
  }
  HardwareProfile out = base;
  if (prompt.n > 0) {
    auto [slope, intercept] = prompt.solve();
    out.prompt_time_per_token = slope;
    out.prompt_time_intercept = intercept;
  }
  if (decode.n > 0) {
    auto [slope, intercept] = decode.solve();
    out.decode_time_per_token = slope;
    out.decode_time_base = intercept;
  }
  out.validate();
  return out;
}

inline nlohmann::ordered_json profile_to_json(const HardwareProfile& p) {
  return nlohmann::ordered_json{
      {"prompt_time_per_token", p.prompt_time_per_token},
      {"prompt_time_intercept", p.prompt_time_intercept},
      {"decode_time_per_token", p.decode_time_per_token},
      {"decode_time_base", p.decode_time_base}};
}

// First-request latency under the request-mixing protocol: a p=1000,d=1000
// request runs alone while p=500,d=500 requests arrive every
// `iterations_between` nominal iteration times.
inline double mixing_protocol_first_request_e2e(
    const HardwareProfile& profile, const InstanceConfig& inst_cfg,
    int iterations_between = 50, double iteration_time = 0.02) {
  RequestPool pool;
  Request first;
  first.id = 0;
  first.prompt_tokens = 1000;
  first.true_decode_tokens = 1000;
  pool.push_back(first);
  Instance inst(inst_cfg, 0);
  inst.enqueue(pool, 0, 0.0);
  double interval = iterations_between * iteration_time;
  double next_arrival = interval;
  long long guard = 0;
  while (!pool[0].completed() && guard++ < 4'000'000) {
    while (inst.clock() >= next_arrival) {
      Request extra;
      extra.id = pool.size();
      extra.prompt_tokens = 500;
      extra.true_decode_tokens = 500;
      extra.arrival_time_s = next_arrival;
      pool.push_back(extra);
      inst.enqueue(pool, static_cast<std::uint32_t>(pool.size() - 1),
                   inst.clock());
      next_arrival += interval;
    }
    inst.step(pool, profile);
  }
  return pool[0].completion_time_s;
}

struct EvaluationRow {
  std::string policy;
  double mean_e2e = 0.0;        // mean over seeds of per-seed mean E2E
  double mean_makespan = 0.0;
  double mean_ttft = 0.0;
  std::vector<double> per_seed_mean_e2e;
};

// Frozen-policy comparison across evaluation seeds; agents are adapted
// through the shared policy contract.
inline EvaluationRow evaluate_policy(const ExperimentConfig& cfg,
                                     const std::string& policy_name,
                                     const std::vector<std::uint64_t>& seeds,
                                     const DqnAgent* agent = nullptr) {
  EvaluationRow row;
  row.policy = policy_name;
  for (auto seed : seeds) {
    ExperimentConfig run = cfg;
    run.seed = seed;
    run.routing_policy = policy_name;
    run.record_trajectory = false;
    auto out = run_experiment(run, agent);
    row.per_seed_mean_e2e.push_back(out.report.e2e.mean);
    row.mean_e2e += out.report.e2e.mean;
    row.mean_makespan += out.report.makespan_s;
    row.mean_ttft += out.report.ttft.mean;
  }
  auto n = static_cast<double>(seeds.size());
  row.mean_e2e /= n;
  row.mean_makespan /= n;
  row.mean_ttft /= n;
  return row;
}

// Trains an agent on freshly sampled episodes of the configured workload.
inline std::pair<DqnAgent, std::vector<EpisodeStats>> train_from_config(
    const ExperimentConfig& cfg, ShapingMode shaping) {
  int state_dim = state_dimension(cfg.num_instances,
                                  BucketScheme::state_default());
  DqnAgent agent(state_dim, cfg.num_instances + 1, cfg.agent,
                 mix_seed(cfg.seed, 0xA6E27));
  ReplayBuffer replay(cfg.agent.replay_capacity);
  Rng rng(mix_seed(cfg.seed, 0x7124));
  auto factory = [&](int episode) {
    ExperimentConfig ecfg = cfg;
    ecfg.reward.shaping = shaping;
    auto trace = build_workload(ecfg, mix_seed(cfg.seed, 0xE0 + episode));
    auto cluster = to_cluster_config(ecfg, episode, false);
    cluster.predictor_seed = mix_seed(cfg.seed, 0x5EED + episode);
    return ClusterSim(cluster, std::move(trace));
  };
  auto stats = train_agent(agent, factory, cfg.train.episodes, replay, rng,
                           cfg.train.max_ticks_per_episode);
  return {std::move(agent), std::move(stats)};
}

}  // namespace routesim
