// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace routesim {

// Calibration constants mapping token counts to simulated seconds.
// Defaults profile a Llama-2-7B-class model on a V100-class device:
// prefill cost grows at 3.2e-4 s per prompt token on top of a 0.026 s
// launch overhead, decode iterations cost 0.0167 s on average plus
// 3.3e-5 s per token in the batch. Any model/hardware pair can be
// re-profiled and loaded from the experiment config.
struct HardwareProfile {
  double prompt_time_per_token = 3.2e-4;
  double prompt_time_intercept = 0.026;
  double decode_time_per_token = 3.3e-5;
  double decode_time_base = 0.0167;

  // Derived: average decode throughput of an unloaded instance.
  double tokens_per_second_decode() const { return 1.0 / decode_time_base; }

  void validate() const {
    if (prompt_time_per_token <= 0.0 || prompt_time_intercept <= 0.0 ||
        decode_time_per_token <= 0.0 || decode_time_base <= 0.0) {
      throw std::invalid_argument("profile: all fields must be > 0");
    }
    if (prompt_time_per_token <= decode_time_per_token) {
      throw std::invalid_argument(
          "profile: prompt_time_per_token must exceed decode_time_per_token");
    }
  }
};

// Latency cutoffs separating light from heavy prompt/decode phases.
struct Thresholds {
  double heavy_prompt_seconds = 0.5;
  double heavy_decode_seconds = 5.0;

  void validate() const {
    if (heavy_prompt_seconds <= 0.0 || heavy_decode_seconds <= 0.0) {
      throw std::invalid_argument("thresholds: values must be > 0");
    }
    if (heavy_decode_seconds <= heavy_prompt_seconds) {
      throw std::invalid_argument(
          "thresholds: heavy_decode_seconds must exceed heavy_prompt_seconds");
    }
  }
};

enum class RequestClass { LL, LH, HL, HH };

inline const char* to_string(RequestClass c) {
  switch (c) {
    case RequestClass::LL: return "LL";
    case RequestClass::LH: return "LH";
    case RequestClass::HL: return "HL";
    case RequestClass::HH: return "HH";
  }
  return "??";
}

// Execution time of one prefill iteration that processes
// `prompt_tokens_in_batch` new prompt tokens while `kv_tokens_in_flight`
// tokens of other context are already resident.
inline double prompt_batch_time(const HardwareProfile& p,
                                long long prompt_tokens_in_batch,
                                long long kv_tokens_in_flight) {
  return p.prompt_time_intercept +
         p.prompt_time_per_token * static_cast<double>(prompt_tokens_in_batch) +
         p.decode_time_per_token * static_cast<double>(kv_tokens_in_flight);
}

// Execution time of one decode iteration generating `tokens_in_flight`
// tokens (one per running request in the batch).
inline double decode_batch_time(const HardwareProfile& p,
                                long long tokens_in_flight) {
  return p.decode_time_base +
         p.decode_time_per_token * static_cast<double>(tokens_in_flight);
}

// Ideal completion time for a request in isolation. Queueing and
// interference are excluded by definition; this is the T^ used by the
// reward's queue term.
inline double estimate_request_time(const HardwareProfile& p,
                                    long long prompt_tokens,
                                    long long decode_tokens) {
  return p.prompt_time_per_token * static_cast<double>(prompt_tokens) +
         p.decode_time_base * static_cast<double>(decode_tokens);
}

// Earliest time until an instance frees up, given the number of decode
// iterations still owed to its shortest running request.
inline double estimate_instance_available(const HardwareProfile& p,
                                          long long iterations_left) {
  return p.decode_time_base * static_cast<double>(iterations_left);
}

inline bool is_heavy_prompt(const HardwareProfile& p, const Thresholds& t,
                            long long prompt_tokens) {
  return p.prompt_time_per_token * static_cast<double>(prompt_tokens) >=
         t.heavy_prompt_seconds;
}

inline bool is_heavy_decode(const HardwareProfile& p, const Thresholds& t,
                            long long decode_tokens) {
  return p.decode_time_base * static_cast<double>(decode_tokens) >=
         t.heavy_decode_seconds;
}

inline RequestClass classify_request(const HardwareProfile& p,
                                     const Thresholds& t,
                                     long long prompt_tokens,
                                     long long decode_tokens) {
  bool hp = is_heavy_prompt(p, t, prompt_tokens);
  bool hd = is_heavy_decode(p, t, decode_tokens);
  if (hp) return hd ? RequestClass::HH : RequestClass::HL;
  return hd ? RequestClass::LH : RequestClass::LL;
}

// Smallest token count that classifies as heavy under the thresholds.
inline long long heavy_prompt_token_cutoff(const HardwareProfile& p,
                                           const Thresholds& t) {
  auto c = static_cast<long long>(
      std::ceil(t.heavy_prompt_seconds / p.prompt_time_per_token - 1e-12));
  while (!is_heavy_prompt(p, t, c)) ++c;
  return c;
}

inline long long heavy_decode_token_cutoff(const HardwareProfile& p,
                                           const Thresholds& t) {
  auto c = static_cast<long long>(
      std::ceil(t.heavy_decode_seconds / p.decode_time_base - 1e-12));
  while (!is_heavy_decode(p, t, c)) ++c;
  return c;
}

}  // namespace routesim
