// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "routesim/latency.hpp"
#include "routesim/request.hpp"
#include "routesim/rng.hpp"

namespace routesim {

inline constexpr long long kMaxPromptTokens = 1000;
inline constexpr long long kMaxDecodeTokens = 4096;

// Lognormal restricted to [lo, hi]; sampled by rejection, parameterised so
// the truncated mean can be matched exactly.
struct TruncLogNormal {
  double mu = 0.0;
  double sigma = 0.5;
  double lo = 1.0;
  double hi = 4096.0;

  // Phi(b) - Phi(a) in erfc form, stable far out in either tail.
  static double norm_cdf_diff(double a, double b) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    return 0.5 * (std::erfc(a * inv_sqrt2) - std::erfc(b * inv_sqrt2));
  }

  double mean() const {
    double a = (std::log(lo) - mu) / sigma;
    double b = (std::log(hi) - mu) / sigma;
    double denom = norm_cdf_diff(a, b);
    if (denom <= 0.0) return a > 0.0 ? lo : hi;
    double num = norm_cdf_diff(a - sigma, b - sigma);
    return std::exp(mu + 0.5 * sigma * sigma) * num / denom;
  }

  // Solve mu so that mean() == target (sigma, lo, hi fixed). The truncated
  // mean is monotone in mu; targets very near a band edge push mu deep
  // into the tail, hence the wide bracket.
  static TruncLogNormal match_mean(double target, double sigma, double lo,
                                   double hi) {
    if (!(target > lo && target < hi)) {
      throw std::invalid_argument("match_mean: target outside (lo, hi)");
    }
    TruncLogNormal d{0.0, sigma, lo, hi};
    double a = std::log(lo) - 36.0 * sigma;
    double b = std::log(hi) + 36.0 * sigma;
    for (int i = 0; i < 300; ++i) {
      d.mu = 0.5 * (a + b);
      (d.mean() < target ? a : b) = d.mu;
    }
    return d;
  }

  double sample(Rng& rng) const {
    for (int i = 0; i < 10000; ++i) {
      double x = std::exp(rng.normal(mu, sigma));
      if (x >= lo && x <= hi) return x;
    }
    return std::clamp(std::exp(mu), lo, hi);
  }

  // Integer token count clamped into [lo, hi] so class membership is exact.
  long long sample_tokens(Rng& rng) const {
    auto t = static_cast<long long>(std::llround(sample(rng)));
    auto tlo = static_cast<long long>(std::ceil(lo));
    auto thi = static_cast<long long>(std::floor(hi));
    return std::clamp(t, tlo, thi);
  }
};

// Per-task generator: prompts from one truncated lognormal, decode lengths
// from a light/heavy two-component mixture whose heavy mass equals the
// published heavy-decode fraction and whose overall mean matches the
// published mean.
struct TaskSpec {
  TaskKind task = TaskKind::QnA;
  double mean_prompt = 1.0;
  double mean_decode = 1.0;
  double heavy_decode_fraction = 0.0;
  TruncLogNormal prompt_dist;
  TruncLogNormal light_decode;
  TruncLogNormal heavy_decode;

  static TaskSpec make(TaskKind task, double mean_prompt, double mean_decode,
                       double heavy_fraction, long long heavy_cut,
                       double prompt_sigma = 0.7, double light_sigma = 0.6,
                       double heavy_sigma = 0.45) {
    if (heavy_fraction < 0.0 || heavy_fraction > 1.0) {
      throw std::invalid_argument("heavy_fraction outside [0,1]");
    }
    TaskSpec s;
    s.task = task;
    s.mean_prompt = mean_prompt;
    s.mean_decode = mean_decode;
    s.heavy_decode_fraction = heavy_fraction;

    // Means squeezed against a band edge get a tighter sigma so the
    // rejection sampler still accepts and the edge pull stays solvable.
    auto edge_sigma = [](double nominal, double target, double lo, double hi) {
      double room = std::min(target / lo - 1.0, hi / target - 1.0);
      return std::min(nominal, std::max(0.05, room));
    };

    double pcap = static_cast<double>(kMaxPromptTokens);
    s.prompt_dist = TruncLogNormal::match_mean(
        mean_prompt, edge_sigma(prompt_sigma, mean_prompt, 1.0, pcap), 1.0,
        pcap);

    double b = static_cast<double>(heavy_cut);
    double cap = static_cast<double>(kMaxDecodeTokens);
    double q = heavy_fraction;
    auto light_of = [&](double target) {
      return TruncLogNormal::match_mean(
          target, edge_sigma(light_sigma, target, 1.0, b - 1.0), 1.0, b - 1.0);
    };
    auto heavy_of = [&](double target) {
      return TruncLogNormal::match_mean(
          target, edge_sigma(heavy_sigma, target, b, cap), b, cap);
    };
    if (q <= 0.0) {
      s.light_decode = light_of(mean_decode);
      s.heavy_decode = TruncLogNormal{std::log(1.2 * b), 0.1, b, cap};
    } else if (q >= 1.0) {
      s.heavy_decode = heavy_of(mean_decode);
      s.light_decode = TruncLogNormal{0.0, light_sigma, 1.0, b - 1.0};
    } else {
      // Split the target mean across the two components: propose a light
      // mean, solve the heavy mean from the mixture identity, clamp into
      // the heavy band, then re-solve the light mean exactly.
      double ml = std::min(0.6 * b, std::max(1.5, 0.5 * mean_decode));
      double mh = (mean_decode - (1.0 - q) * ml) / q;
      mh = std::clamp(mh, 1.02 * b, 0.9 * cap);
      ml = (mean_decode - q * mh) / (1.0 - q);
      ml = std::clamp(ml, 1.5, 0.98 * (b - 1.0));
      s.light_decode = light_of(ml);
      s.heavy_decode = heavy_of(mh);
    }
    return s;
  }
};

// Table of the five public-dataset tasks: sample weight, mean prompt/decode
// tokens and heavy-decode fraction.
struct TaskStats {
  TaskKind task;
  long long samples;
  double mean_prompt;
  double mean_decode;
  double heavy_fraction;
  double predictor_accuracy;
};

inline const std::array<TaskStats, 5>& dataset_task_table() {
  static const std::array<TaskStats, 5> t = {{
      {TaskKind::Translation, 7351, 29.09, 61.76, 0.0918, 0.9310},
      {TaskKind::QnA, 6988, 29.83, 334.40, 0.5818, 0.7036},
      {TaskKind::SentimentAnalysis, 6564, 211.54, 142.53, 0.4101, 0.7992},
      {TaskKind::InContextQnA, 7122, 125.16, 220.02, 0.4795, 0.6527},
      {TaskKind::EntityRecognition, 3304, 26.41, 64.10, 0.0871, 0.9506},
  }};
  return t;
}

inline std::vector<TaskSpec> dataset_task_specs(const HardwareProfile& profile,
                                                const Thresholds& thresholds) {
  long long cut = heavy_decode_token_cutoff(profile, thresholds);
  std::vector<TaskSpec> specs;
  specs.reserve(dataset_task_table().size());
  for (const auto& row : dataset_task_table()) {
    specs.push_back(TaskSpec::make(row.task, row.mean_prompt, row.mean_decode,
                                   row.heavy_fraction, cut));
  }
  return specs;
}

inline Request sample_request(const TaskSpec& spec, Rng& rng) {
  Request r;
  r.task = spec.task;
  r.prompt_tokens = static_cast<int>(spec.prompt_dist.sample_tokens(rng));
  bool heavy = rng.uniform() < spec.heavy_decode_fraction;
  const TruncLogNormal& d = heavy ? spec.heavy_decode : spec.light_decode;
  r.true_decode_tokens = static_cast<int>(d.sample_tokens(rng));
  return r;
}

enum class ArrivalProcess { Poisson, FixedInterval };

struct ArrivalSpec {
  ArrivalProcess process = ArrivalProcess::Poisson;
  double rate_per_s = 20.0;
};

struct ArrivalTrace {
  std::vector<Request> requests;  // arrival_time_s non-decreasing
};

inline void assign_arrivals(std::vector<Request>& reqs, const ArrivalSpec& a,
                            Rng& rng) {
  double t = 0.0;
  for (auto& r : reqs) {
    t += (a.process == ArrivalProcess::Poisson) ? rng.exponential(a.rate_per_s)
                                                : 1.0 / a.rate_per_s;
    r.arrival_time_s = t;
  }
}

// Sample n requests from the task mixture with Table-proportional weights.
inline ArrivalTrace generate_mixture(const std::vector<TaskSpec>& specs,
                                     const std::vector<double>& weights,
                                     std::size_t n, const ArrivalSpec& arrival,
                                     Rng& rng) {
  if (n == 0) throw std::invalid_argument("generate_mixture: n must be >= 1");
  if (specs.empty() || specs.size() != weights.size()) {
    throw std::invalid_argument("generate_mixture: specs/weights mismatch");
  }
  double total = 0.0;
  for (double w : weights) total += w;
  ArrivalTrace trace;
  trace.requests.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double u = rng.uniform() * total;
    std::size_t k = 0;
    for (; k + 1 < specs.size(); ++k) {
      u -= weights[k];
      if (u < 0.0) break;
    }
    Request r = sample_request(specs[k], rng);
    r.id = i;
    trace.requests.push_back(r);
  }
  assign_arrivals(trace.requests, arrival, rng);
  return trace;
}

inline ArrivalTrace generate_dataset_mixture(const HardwareProfile& profile,
                                             const Thresholds& thresholds,
                                             std::size_t n,
                                             const ArrivalSpec& arrival,
                                             Rng& rng) {
  std::vector<double> weights;
  for (const auto& row : dataset_task_table()) {
    weights.push_back(static_cast<double>(row.samples));
  }
  return generate_mixture(dataset_task_specs(profile, thresholds), weights, n,
                          arrival, rng);
}

enum class ScenarioKind { LH_HL_random, AllRandom, LH_then_HL, HL_then_LH };

inline const char* to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::LH_HL_random: return "lh_hl_random";
    case ScenarioKind::AllRandom: return "all_random";
    case ScenarioKind::LH_then_HL: return "lh_then_hl";
    case ScenarioKind::HL_then_LH: return "hl_then_lh";
  }
  return "?";
}

inline ScenarioKind scenario_from_string(const std::string& s) {
  if (s == "lh_hl_random") return ScenarioKind::LH_HL_random;
  if (s == "all_random") return ScenarioKind::AllRandom;
  if (s == "lh_then_hl") return ScenarioKind::LH_then_HL;
  if (s == "hl_then_lh") return ScenarioKind::HL_then_LH;
  throw std::invalid_argument("unknown scenario: " + s);
}

// Draw one request of the given class. Prompt/decode counts are uniform in
// bands placed strictly inside the light/heavy regions so every generated
// request classifies as intended under the same thresholds.
inline Request sample_class_request(RequestClass cls,
                                    const HardwareProfile& profile,
                                    const Thresholds& thresholds, Rng& rng) {
  long long pcut = heavy_prompt_token_cutoff(profile, thresholds);
  long long dcut = heavy_decode_token_cutoff(profile, thresholds);
  long long light_p_hi = std::min<long long>(256, pcut - 1);
  long long light_d_hi = std::max<long long>(16, dcut - 51);
  Request r;
  bool hp = (cls == RequestClass::HL || cls == RequestClass::HH);
  bool hd = (cls == RequestClass::LH || cls == RequestClass::HH);
  r.prompt_tokens = static_cast<int>(
      hp ? rng.uniform_int(pcut, std::max(pcut + 1, pcut + 1157))
         : rng.uniform_int(16, light_p_hi));
  r.true_decode_tokens = static_cast<int>(
      hd ? rng.uniform_int(dcut, dcut + 900) : rng.uniform_int(16, light_d_hi));
  r.task = hd ? TaskKind::QnA : TaskKind::Translation;
  return r;
}

// Arrival patterns over request classes used by the two-instance studies.
inline ArrivalTrace generate_scenario(ScenarioKind kind, std::size_t n,
                                      const ArrivalSpec& arrival,
                                      const HardwareProfile& profile,
                                      const Thresholds& thresholds, Rng& rng) {
  if (n == 0) throw std::invalid_argument("generate_scenario: n must be >= 1");
  std::vector<RequestClass> order;
  order.reserve(n);
  std::size_t first_half = (n + 1) / 2;
  switch (kind) {
    case ScenarioKind::LH_HL_random:
      for (std::size_t i = 0; i < n; ++i) {
        order.push_back(rng.uniform() < 0.5 ? RequestClass::LH
                                            : RequestClass::HL);
      }
      break;
    case ScenarioKind::AllRandom:
      for (std::size_t i = 0; i < n; ++i) {
        order.push_back(static_cast<RequestClass>(rng.uniform_below(4)));
      }
      break;
    case ScenarioKind::LH_then_HL:
      for (std::size_t i = 0; i < n; ++i) {
        order.push_back(i < first_half ? RequestClass::LH : RequestClass::HL);
      }
      break;
    case ScenarioKind::HL_then_LH:
      for (std::size_t i = 0; i < n; ++i) {
        order.push_back(i < first_half ? RequestClass::HL : RequestClass::LH);
      }
      break;
  }
  ArrivalTrace trace;
  trace.requests.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Request r = sample_class_request(order[i], profile, thresholds, rng);
    r.id = i;
    trace.requests.push_back(r);
  }
  assign_arrivals(trace.requests, arrival, rng);
  return trace;
}

// Trace file format: CSV, header "arrival_time_s,task,prompt_tokens,
// decode_tokens", UTF-8, LF line endings.
inline ArrivalTrace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_trace: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("load_trace: empty file " + path);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "arrival_time_s,task,prompt_tokens,decode_tokens") {
    throw std::runtime_error("load_trace: bad header in " + path);
  }
  ArrivalTrace trace;
  std::size_t lineno = 1;
  double prev_time = -1.0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<std::string, 4> fields;
    std::size_t start = 0;
    for (int f = 0; f < 4; ++f) {
      std::size_t comma = line.find(',', start);
      bool last = (f == 3);
      if (!last && comma == std::string::npos) {
        throw std::runtime_error("load_trace: line " + std::to_string(lineno) +
                                 ": expected 4 fields");
      }
      fields[f] = line.substr(start, last ? std::string::npos : comma - start);
      start = comma + 1;
    }
    Request r;
    try {
      r.arrival_time_s = std::stod(fields[0]);
      r.task = task_from_string(fields[1]);
      r.prompt_tokens = std::stoi(fields[2]);
      r.true_decode_tokens = std::stoi(fields[3]);
    } catch (const std::exception& e) {
      throw std::runtime_error("load_trace: line " + std::to_string(lineno) +
                               ": " + e.what());
    }
    if (r.prompt_tokens < 1) {
      throw std::runtime_error("load_trace: line " + std::to_string(lineno) +
                               ": prompt_tokens must be >= 1");
    }
    if (r.true_decode_tokens < 1) {
      throw std::runtime_error("load_trace: line " + std::to_string(lineno) +
                               ": decode_tokens must be >= 1");
    }
    if (r.arrival_time_s < prev_time) {
      throw std::runtime_error("load_trace: line " + std::to_string(lineno) +
                               ": arrival times must be non-decreasing");
    }
    prev_time = r.arrival_time_s;
    r.id = trace.requests.size();
    trace.requests.push_back(r);
  }
  return trace;
}

inline void save_trace(const ArrivalTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_trace: cannot open " + path);
  out << "arrival_time_s,task,prompt_tokens,decode_tokens\n";
  char buf[64];
  for (const auto& r : trace.requests) {
    std::snprintf(buf, sizeof(buf), "%.9g", r.arrival_time_s);
    out << buf << ',' << to_string(r.task) << ',' << r.prompt_tokens << ','
        << r.true_decode_tokens << '\n';
  }
}

struct TaskSummary {
  long long count = 0;
  double mean_prompt = 0.0;
  double mean_decode = 0.0;
  double heavy_decode_pct = 0.0;
};

struct WorkloadStats {
  std::map<TaskKind, TaskSummary> per_task;
  TaskSummary overall;
};

inline WorkloadStats task_stats(const ArrivalTrace& trace,
                                const Thresholds& thresholds,
                                const HardwareProfile& profile) {
  if (trace.requests.empty()) {
    throw std::invalid_argument("task_stats: empty trace");
  }
  struct Acc {
    long long n = 0;
    double p = 0.0, d = 0.0;
    long long heavy = 0;
  };
  std::map<TaskKind, Acc> acc;
  Acc all;
  for (const auto& r : trace.requests) {
    bool heavy = is_heavy_decode(profile, thresholds, r.true_decode_tokens);
    auto& a = acc[r.task];
    a.n++;
    a.p += r.prompt_tokens;
    a.d += r.true_decode_tokens;
    a.heavy += heavy ? 1 : 0;
    all.n++;
    all.p += r.prompt_tokens;
    all.d += r.true_decode_tokens;
    all.heavy += heavy ? 1 : 0;
  }
  auto summarize = [](const Acc& a) {
    TaskSummary s;
    s.count = a.n;
    s.mean_prompt = a.p / static_cast<double>(a.n);
    s.mean_decode = a.d / static_cast<double>(a.n);
    s.heavy_decode_pct = 100.0 * static_cast<double>(a.heavy) /
                         static_cast<double>(a.n);
    return s;
  };
  WorkloadStats stats;
  for (const auto& [task, a] : acc) stats.per_task[task] = summarize(a);
  stats.overall = summarize(all);
  return stats;
}

}  // namespace routesim
