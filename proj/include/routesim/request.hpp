// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace routesim {

enum class TaskKind {
  Translation,
  QnA,
  SentimentAnalysis,
  InContextQnA,
  EntityRecognition,
};

inline constexpr int kTaskKindCount = 5;

inline const char* to_string(TaskKind t) {
  switch (t) {
    case TaskKind::Translation: return "Translation";
    case TaskKind::QnA: return "QnA";
    case TaskKind::SentimentAnalysis: return "SentimentAnalysis";
    case TaskKind::InContextQnA: return "InContextQnA";
    case TaskKind::EntityRecognition: return "EntityRecognition";
  }
  return "?";
}

inline TaskKind task_from_string(const std::string& s) {
  if (s == "Translation") return TaskKind::Translation;
  if (s == "QnA") return TaskKind::QnA;
  if (s == "SentimentAnalysis") return TaskKind::SentimentAnalysis;
  if (s == "InContextQnA") return TaskKind::InContextQnA;
  if (s == "EntityRecognition") return TaskKind::EntityRecognition;
  throw std::invalid_argument("unknown task: " + s);
}

// One inference job. Timestamps below zero mean "not yet".
struct Request {
  std::uint64_t id = 0;
  TaskKind task = TaskKind::QnA;
  int prompt_tokens = 1;
  int true_decode_tokens = 1;

  // Router-visible decode estimate: the predicted bucket and its upper
  // bound in tokens. Set when the request first reaches the router queue;
  // while unset the true length is used (oracle behaviour).
  int predicted_bucket = -1;
  int decode_estimate_tokens = 0;

  double arrival_time_s = 0.0;
  double routed_time_s = -1.0;
  double first_token_time_s = -1.0;
  double completion_time_s = -1.0;

  int tokens_emitted = 0;
  int preemption_count = 0;
  int assigned_instance = -1;

  int decode_estimate() const {
    return decode_estimate_tokens > 0 ? decode_estimate_tokens
                                      : true_decode_tokens;
  }
  bool completed() const { return completion_time_s >= 0.0; }
  bool started_output() const { return first_token_time_s >= 0.0; }
};

using RequestPool = std::vector<Request>;

}  // namespace routesim
