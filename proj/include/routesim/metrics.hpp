// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "routesim/env.hpp"
#include "routesim/latency.hpp"
#include "routesim/request.hpp"

namespace routesim {

struct RequestMetrics {
  std::uint64_t id = 0;
  TaskKind task = TaskKind::QnA;
  RequestClass cls = RequestClass::LL;
  int prompt_tokens = 0;
  int decode_tokens = 0;
  double arrival_s = 0.0;
  double ttft_s = 0.0;
  double tbt_s = -1.0;  // absent for single-token responses
  double e2e_s = 0.0;
  int preemptions = 0;
  int instance = -1;

  bool has_tbt() const { return tbt_s >= 0.0; }
};

struct Aggregate {
  double mean = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
  double p99 = 0.0;
  long long count = 0;
};

struct MetricsReport {
  std::vector<RequestMetrics> requests;  // ordered by id
  Aggregate e2e;
  Aggregate ttft;
  Aggregate tbt;  // over requests with at least two output tokens
  double total_e2e_s = 0.0;
  double makespan_s = 0.0;
  double mean_router_wait_s = 0.0;
  double mean_instance_waiting = 0.0;  // time-averaged queue length per instance
  double mean_router_queue = 0.0;
  double mean_throughput_tokens_s = 0.0;
  long long total_preemptions = 0;
  long long completed = 0;
  long long total_tokens = 0;
  std::vector<long long> tokens_per_second;
};

inline Aggregate aggregate_of(std::vector<double> values) {
  Aggregate a;
  a.count = static_cast<long long>(values.size());
  if (values.empty()) return a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  auto nearest_rank = [&](double q) {
    auto n = static_cast<double>(values.size());
    auto idx = static_cast<std::size_t>(std::ceil(q * n));
    if (idx > 0) --idx;
    return values[std::min(idx, values.size() - 1)];
  };
  a.p50 = nearest_rank(0.50);
  a.p90 = nearest_rank(0.90);
  a.p99 = nearest_rank(0.99);
  return a;
}

// Aggregates per-request latency metrics from a finished pool plus the
// environment's tick records and token-emission windows.
inline MetricsReport compute_metrics(const RequestPool& pool,
                                     const HardwareProfile& profile,
                                     const Thresholds& thresholds,
                                     const std::vector<TickRecord>& ticks = {},
                                     const std::vector<long long>&
                                         tokens_per_second = {}) {
  MetricsReport rep;
  std::vector<double> e2e, ttft, tbt, waits;
  double first_arrival = std::numeric_limits<double>::max();
  double last_completion = 0.0;
  for (const auto& r : pool) {
    if (!r.completed()) continue;
    RequestMetrics m;
    m.id = r.id;
    m.task = r.task;
    m.cls = classify_request(profile, thresholds, r.prompt_tokens,
                             r.true_decode_tokens);
    m.prompt_tokens = r.prompt_tokens;
    m.decode_tokens = r.true_decode_tokens;
    m.arrival_s = r.arrival_time_s;
    m.e2e_s = r.completion_time_s - r.arrival_time_s;
    m.ttft_s = r.first_token_time_s - r.arrival_time_s;
    if (r.tokens_emitted >= 2) {
      m.tbt_s = (r.completion_time_s - r.first_token_time_s) /
                static_cast<double>(r.tokens_emitted - 1);
      tbt.push_back(m.tbt_s);
    }
    m.preemptions = r.preemption_count;
    m.instance = r.assigned_instance;
    e2e.push_back(m.e2e_s);
    ttft.push_back(m.ttft_s);
    if (r.routed_time_s >= 0.0) waits.push_back(r.routed_time_s - r.arrival_time_s);
    rep.total_e2e_s += m.e2e_s;
    rep.total_preemptions += r.preemption_count;
    rep.total_tokens += r.tokens_emitted;
    first_arrival = std::min(first_arrival, r.arrival_time_s);
    last_completion = std::max(last_completion, r.completion_time_s);
    rep.requests.push_back(m);
  }
  if (rep.requests.empty()) {
    throw std::invalid_argument("compute_metrics: no completed requests");
  }
  std::sort(rep.requests.begin(), rep.requests.end(),
            [](const RequestMetrics& a, const RequestMetrics& b) {
              return a.id < b.id;
            });
  rep.completed = static_cast<long long>(rep.requests.size());
  rep.e2e = aggregate_of(std::move(e2e));
  rep.ttft = aggregate_of(std::move(ttft));
  rep.tbt = aggregate_of(std::move(tbt));
  rep.makespan_s = last_completion - first_arrival;
  if (!waits.empty()) {
    double s = 0.0;
    for (double w : waits) s += w;
    rep.mean_router_wait_s = s / static_cast<double>(waits.size());
  }
  if (!ticks.empty()) {
    double waiting_sum = 0.0;
    double queue_sum = 0.0;
    long long cells = 0;
    for (const auto& t : ticks) {
      queue_sum += t.router_queue_len;
      for (int w : t.instance_waiting) {
        waiting_sum += w;
        ++cells;
      }
    }
    rep.mean_instance_waiting =
        cells ? waiting_sum / static_cast<double>(cells) : 0.0;
    rep.mean_router_queue =
        queue_sum / static_cast<double>(ticks.size());
  }
  rep.tokens_per_second = tokens_per_second;
  if (rep.makespan_s > 0.0) {
    rep.mean_throughput_tokens_s =
        static_cast<double>(rep.total_tokens) / rep.makespan_s;
  }
  return rep;
}

// Shortest-exact would be ideal; %.17g guarantees doubles survive a
// parse round-trip so re-aggregated CSVs match the summary bit for bit.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline nlohmann::ordered_json report_to_json(const MetricsReport& rep) {
  auto agg = [](const Aggregate& a) {
    return nlohmann::ordered_json{{"mean", a.mean},
                                  {"p50", a.p50},
                                  {"p90", a.p90},
                                  {"p99", a.p99},
                                  {"count", a.count}};
  };
  nlohmann::ordered_json j;
  j["completed"] = rep.completed;
  j["total_tokens"] = rep.total_tokens;
  j["total_e2e_s"] = rep.total_e2e_s;
  j["makespan_s"] = rep.makespan_s;
  j["e2e_s"] = agg(rep.e2e);
  j["ttft_s"] = agg(rep.ttft);
  j["tbt_s"] = agg(rep.tbt);
  j["mean_router_wait_s"] = rep.mean_router_wait_s;
  j["mean_router_queue"] = rep.mean_router_queue;
  j["mean_instance_waiting"] = rep.mean_instance_waiting;
  j["mean_throughput_tokens_s"] = rep.mean_throughput_tokens_s;
  j["total_preemptions"] = rep.total_preemptions;
  return j;
}

// Writes summary.json, requests.csv, and timeseries.csv under `dir`.
inline void emit_report(const MetricsReport& rep,
                        const std::vector<TickRecord>& ticks,
                        const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  {
    std::ofstream out(fs::path(dir) / "summary.json");
    if (!out) throw std::runtime_error("emit_report: cannot write summary.json");
    out << report_to_json(rep).dump(2) << '\n';
  }
  {
    std::ofstream out(fs::path(dir) / "requests.csv");
    if (!out) throw std::runtime_error("emit_report: cannot write requests.csv");
    out << "id,task,class,prompt_tokens,decode_tokens,arrival_s,ttft_s,tbt_s,"
           "e2e_s,preemptions,instance\n";
    for (const auto& m : rep.requests) {
      out << m.id << ',' << to_string(m.task) << ',' << to_string(m.cls) << ','
          << m.prompt_tokens << ',' << m.decode_tokens << ','
          << format_double(m.arrival_s) << ',' << format_double(m.ttft_s)
          << ',' << (m.has_tbt() ? format_double(m.tbt_s) : std::string())
          << ',' << format_double(m.e2e_s) << ',' << m.preemptions << ','
          << m.instance << '\n';
    }
  }
  {
    std::ofstream out(fs::path(dir) / "timeseries.csv");
    if (!out) throw std::runtime_error("emit_report: cannot write timeseries.csv");
    int m = ticks.empty() ? 0 : static_cast<int>(ticks.front().instance_waiting.size());
    out << "tick,time_s,action,reward,router_queue";
    for (int i = 0; i < m; ++i) out << ",inst" << i << "_waiting";
    for (int i = 0; i < m; ++i) out << ",inst" << i << "_running";
    out << ",tokens_emitted\n";
    for (const auto& t : ticks) {
      out << t.tick << ',' << format_double(t.time) << ',' << t.action << ','
          << format_double(t.reward.total) << ',' << t.router_queue_len;
      for (int w : t.instance_waiting) out << ',' << w;
      for (int r : t.instance_running) out << ',' << r;
      out << ',' << t.tokens_emitted << '\n';
    }
  }
}

}  // namespace routesim
