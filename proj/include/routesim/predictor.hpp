// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <stdexcept>
#include <vector>

#include "routesim/request.hpp"
#include "routesim/rng.hpp"
#include "routesim/workload.hpp"

namespace routesim {

// Half-open token-count intervals [e0,e1),[e1,e2),...,[e_last,inf).
// edges[0] must be 0; edges strictly ascending.
struct BucketScheme {
  std::vector<long long> edges;

  void validate() const {
    if (edges.empty() || edges[0] != 0) {
      throw std::invalid_argument("bucket scheme: first edge must be 0");
    }
    for (std::size_t i = 1; i < edges.size(); ++i) {
      if (edges[i] <= edges[i - 1]) {
        throw std::invalid_argument("bucket scheme: edges must ascend");
      }
    }
  }

  int count() const { return static_cast<int>(edges.size()); }

  int bucket_of(long long tokens) const {
    int b = 0;
    for (std::size_t i = 1; i < edges.size(); ++i) {
      if (tokens >= edges[i]) b = static_cast<int>(i);
    }
    return b;
  }

  // Upper bound in tokens; the open-ended top bucket uses the model's
  // context limit.
  long long upper_bound_tokens(int bucket,
                               long long top_cap = kMaxDecodeTokens) const {
    if (bucket < 0 || bucket >= count()) {
      throw std::invalid_argument("bucket out of range");
    }
    if (bucket + 1 < count()) return edges[static_cast<std::size_t>(bucket) + 1];
    return top_cap;
  }

  // Time-derived decode buckets used by the length predictor.
  static BucketScheme predictor_default() {
    return BucketScheme{{0, 250, 1000, 4000}};
  }

  // Coarser buckets used by the state encoding.
  static BucketScheme state_default() { return BucketScheme{{0, 256, 2048}}; }
};

// Per-task probability that the predicted bucket equals the true one;
// the remaining mass goes to adjacent buckets.
struct AccuracyTable {
  std::map<TaskKind, double> accuracy;

  static AccuracyTable dataset_default() {
    AccuracyTable t;
    for (const auto& row : dataset_task_table()) {
      t.accuracy[row.task] = row.predictor_accuracy;
    }
    return t;
  }

  static AccuracyTable perfect() {
    AccuracyTable t;
    for (const auto& row : dataset_task_table()) t.accuracy[row.task] = 1.0;
    return t;
  }

  double for_task(TaskKind task) const {
    auto it = accuracy.find(task);
    return it == accuracy.end() ? 1.0 : it->second;
  }

  void validate() const {
    for (const auto& [task, a] : accuracy) {
      if (a < 0.0 || a > 1.0) {
        throw std::invalid_argument("accuracy outside [0,1] for task " +
                                    std::string(to_string(task)));
      }
    }
  }
};

// Simulates a trained classifier: correct with the task's configured
// probability, otherwise off by one bucket.
inline int predict_simulated(int true_bucket, TaskKind task,
                             const AccuracyTable& table,
                             const BucketScheme& scheme, Rng& rng) {
  int n = scheme.count();
  if (true_bucket < 0 || true_bucket >= n) {
    throw std::invalid_argument("predict_simulated: bucket out of range");
  }
  if (n == 1) return 0;
  if (rng.uniform() < table.for_task(task)) return true_bucket;
  if (true_bucket == 0) return 1;
  if (true_bucket == n - 1) return n - 2;
  return rng.uniform() < 0.5 ? true_bucket - 1 : true_bucket + 1;
}

// Frequency model over (task, prompt-length band) cells with task-level
// and global fallbacks, in the spirit of fitting a small classifier on
// prompt length plus application name.
class EmpiricalPredictor {
 public:
  EmpiricalPredictor() = default;

  static EmpiricalPredictor fit(const std::vector<Request>& train,
                                const BucketScheme& scheme,
                                std::vector<long long> band_edges) {
    if (train.empty()) {
      throw std::invalid_argument("EmpiricalPredictor::fit: empty trace");
    }
    EmpiricalPredictor m;
    m.scheme_ = scheme;
    m.bands_ = BucketScheme{std::move(band_edges)};
    m.bands_.validate();
    m.global_.assign(static_cast<std::size_t>(scheme.count()), 0);
    for (const auto& r : train) {
      int bucket = scheme.bucket_of(r.true_decode_tokens);
      int band = m.bands_.bucket_of(r.prompt_tokens);
      auto& cell = m.cells_[{r.task, band}];
      if (cell.empty()) cell.assign(static_cast<std::size_t>(scheme.count()), 0);
      cell[static_cast<std::size_t>(bucket)] += 1;
      auto& marg = m.task_marginal_[r.task];
      if (marg.empty()) marg.assign(static_cast<std::size_t>(scheme.count()), 0);
      marg[static_cast<std::size_t>(bucket)] += 1;
      m.global_[static_cast<std::size_t>(bucket)] += 1;
    }
    return m;
  }

  // Argmax of the matched cell; unseen cells fall back to the task
  // marginal, then the global marginal. Ties resolve to the lowest bucket.
  int predict(TaskKind task, int prompt_tokens) const {
    if (global_.empty()) {
      throw std::logic_error("EmpiricalPredictor: not fitted");
    }
    int band = bands_.bucket_of(prompt_tokens);
    if (auto it = cells_.find({task, band}); it != cells_.end()) {
      return argmax(it->second);
    }
    if (auto it = task_marginal_.find(task); it != task_marginal_.end()) {
      return argmax(it->second);
    }
    return argmax(global_);
  }

  const BucketScheme& scheme() const { return scheme_; }

  static std::vector<long long> default_band_edges() {
    return {0, 32, 64, 128, 256, 512, 1024};
  }

 private:
  static int argmax(const std::vector<long long>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
  }

  BucketScheme scheme_;
  BucketScheme bands_;
  std::map<std::pair<TaskKind, int>, std::vector<long long>> cells_;
  std::map<TaskKind, std::vector<long long>> task_marginal_;
  std::vector<long long> global_;
};

struct PredictorReport {
  std::map<TaskKind, double> per_task;
  double overall = 0.0;
  long long total = 0;
};

// Exact match rate of predicted_bucket against bucket_of(true decode).
inline PredictorReport evaluate_predictions(const std::vector<Request>& labeled,
                                            const BucketScheme& scheme) {
  if (labeled.empty()) {
    throw std::invalid_argument("evaluate_predictions: empty trace");
  }
  std::map<TaskKind, std::pair<long long, long long>> hits;  // (correct, n)
  long long correct = 0;
  for (const auto& r : labeled) {
    bool ok = r.predicted_bucket == scheme.bucket_of(r.true_decode_tokens);
    auto& h = hits[r.task];
    h.first += ok ? 1 : 0;
    h.second += 1;
    correct += ok ? 1 : 0;
  }
  PredictorReport rep;
  for (const auto& [task, h] : hits) {
    rep.per_task[task] =
        static_cast<double>(h.first) / static_cast<double>(h.second);
  }
  rep.total = static_cast<long long>(labeled.size());
  rep.overall = static_cast<double>(correct) / static_cast<double>(rep.total);
  return rep;
}

}  // namespace routesim
