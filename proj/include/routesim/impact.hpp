// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace routesim {

// Analytic workload-impact estimator. Scores the cost of placing an
// incoming request onto an instance given the token mass already there.
struct ImpactConfig {
  double grad1 = 3.2e-4;
  double grad2 = 3.3e-5;
  double epsilon_s = 0.5;   // latency-impact budget for the prompt penalty
  double alpha = 0.5;       // prompt/decode balance
  int prompt_exponent = 2;  // incoming prompt term p_i^e; printed form is 2

  void validate() const {
    if (grad1 <= 0.0 || grad2 <= 0.0 || epsilon_s <= 0.0) {
      throw std::invalid_argument("impact: grad1, grad2, epsilon_s must be > 0");
    }
    if (alpha < 0.0 || alpha > 1.0) {
      throw std::invalid_argument("impact: alpha outside [0, 1]");
    }
    if (prompt_exponent != 1 && prompt_exponent != 2) {
      throw std::invalid_argument("impact: prompt_exponent must be 1 or 2");
    }
  }
};

// Token counts of the requests already at one instance: (p_j, d_j) pairs,
// p_j the prompt tokens and d_j the tokens emitted so far.
struct InstanceLoad {
  std::vector<std::pair<long long, long long>> requests;

  long long token_sum() const {
    long long s = 0;
    for (const auto& [p, d] : requests) s += p + d;
    return s;
  }
};

struct PromptImpact {
  double t_p = 0.0;  // raw impact score
  double r_p = 0.0;  // penalty: 1 while t_p <= epsilon, else 1 - t_p/epsilon
};

inline PromptImpact prompt_impact(const ImpactConfig& cfg, long long p_i,
                                  const InstanceLoad& load) {
  double pi = static_cast<double>(p_i);
  double lead = (cfg.prompt_exponent == 2) ? pi * pi : pi;
  PromptImpact out;
  out.t_p = cfg.grad1 * (lead + static_cast<double>(load.token_sum()));
  out.r_p = (out.t_p <= cfg.epsilon_s) ? 1.0 : 1.0 - out.t_p / cfg.epsilon_s;
  return out;
}

// Decode-phase penalty of adding (p_i, d_i); the incoming tokens join the
// summed token mass, keeping the value a penalty for any request size.
inline double decode_impact(const ImpactConfig& cfg, long long p_i,
                            long long d_i, const InstanceLoad& load) {
  return -cfg.grad2 *
         static_cast<double>(load.token_sum() + p_i + d_i);
}

inline double mixing_penalty(const ImpactConfig& cfg, double r_p, double r_d) {
  return cfg.alpha * r_p + (1.0 - cfg.alpha) * r_d;
}

inline double mixing_for(const ImpactConfig& cfg, long long p_i, long long d_i,
                         const InstanceLoad& load) {
  return mixing_penalty(cfg, prompt_impact(cfg, p_i, load).r_p,
                        decode_impact(cfg, p_i, d_i, load));
}

// Advantage-style heuristic core: chosen mixing score minus the best one.
// Always <= 0; exactly 0 when the chosen instance has the least mixing
// impact. An action equal to the instance count is the router's no-op and
// scores 0.
inline double heuristic_h_from_scores(std::span<const double> mixing_scores,
                                      std::size_t chosen_action) {
  if (chosen_action > mixing_scores.size()) {
    throw std::invalid_argument("heuristic_h: action out of range");
  }
  if (chosen_action == mixing_scores.size()) return 0.0;
  double best = mixing_scores[0];
  for (double s : mixing_scores) best = std::max(best, s);
  return mixing_scores[chosen_action] - best;
}

inline double heuristic_h(const ImpactConfig& cfg, long long p_i, long long d_i,
                          std::span<const InstanceLoad> loads,
                          std::size_t chosen_action) {
  std::vector<double> scores;
  scores.reserve(loads.size());
  for (const auto& load : loads) {
    scores.push_back(mixing_for(cfg, p_i, d_i, load));
  }
  return heuristic_h_from_scores(scores, chosen_action);
}

}  // namespace routesim
