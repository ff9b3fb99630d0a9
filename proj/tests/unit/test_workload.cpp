// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "routesim/latency.hpp"
#include "routesim/workload.hpp"

using namespace routesim;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
const HardwareProfile kProfile;
const Thresholds kThresholds;

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}
}  // namespace

TEST_CASE("truncated lognormal matches a requested mean") {
  for (double target : {25.0, 131.8, 306.0, 454.6}) {
    double lo = target < 300 ? 1.0 : 300.0;
    double hi = target < 300 ? 299.0 : 4096.0;
    auto d = TruncLogNormal::match_mean(target, 0.5, lo, hi);
    CHECK_THAT(d.mean(), WithinRel(target, 1e-6));
  }
  CHECK_THROWS_AS(TruncLogNormal::match_mean(500.0, 0.5, 1.0, 299.0),
                  std::invalid_argument);
}

TEST_CASE("translation spec reproduces the published prompt mean and heavy fraction") {
  auto specs = dataset_task_specs(kProfile, kThresholds);
  const TaskSpec& books = specs[0];
  REQUIRE(books.task == TaskKind::Translation);

  Rng rng(42);
  const int n = 100000;
  double prompt_sum = 0.0;
  long long heavy = 0;
  long long cut = heavy_decode_token_cutoff(kProfile, kThresholds);
  for (int i = 0; i < n; ++i) {
    Request r = sample_request(books, rng);
    prompt_sum += r.prompt_tokens;
    heavy += r.true_decode_tokens >= cut ? 1 : 0;
  }
  double mean_prompt = prompt_sum / n;
  double heavy_pct = 100.0 * static_cast<double>(heavy) / n;
  CHECK(std::abs(mean_prompt - 29.09) / 29.09 < 0.05);
  CHECK(std::abs(heavy_pct - 9.18) < 1.0);
}

TEST_CASE("zero heavy fraction never draws a heavy decode") {
  long long cut = heavy_decode_token_cutoff(kProfile, kThresholds);
  auto spec = TaskSpec::make(TaskKind::QnA, 30.0, 60.0, 0.0, cut);
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    CHECK(sample_request(spec, rng).true_decode_tokens < cut);
  }
}

TEST_CASE("sampling is deterministic under a fixed seed") {
  auto specs = dataset_task_specs(kProfile, kThresholds);
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) {
    Request ra = sample_request(specs[i % specs.size()], a);
    Request rb = sample_request(specs[i % specs.size()], b);
    CHECK(ra.prompt_tokens == rb.prompt_tokens);
    CHECK(ra.true_decode_tokens == rb.true_decode_tokens);
  }
}

TEST_CASE("phase-ordered scenarios put classes in the right segments") {
  Rng rng(9);
  auto trace = generate_scenario(ScenarioKind::LH_then_HL, 3000,
                                 {ArrivalProcess::Poisson, 20.0}, kProfile,
                                 kThresholds, rng);
  REQUIRE(trace.requests.size() == 3000);
  for (std::size_t i = 0; i < trace.requests.size(); ++i) {
    const auto& r = trace.requests[i];
    auto cls = classify_request(kProfile, kThresholds, r.prompt_tokens,
                                r.true_decode_tokens);
    if (i < 1500) {
      CHECK(cls == RequestClass::LH);
    } else {
      CHECK(cls == RequestClass::HL);
    }
    if (i > 0) {
      CHECK(trace.requests[i].arrival_time_s >=
            trace.requests[i - 1].arrival_time_s);
    }
  }
}

TEST_CASE("minimal two-request ordered scenario") {
  Rng rng(1);
  auto trace = generate_scenario(ScenarioKind::HL_then_LH, 2,
                                 {ArrivalProcess::FixedInterval, 1.0}, kProfile,
                                 kThresholds, rng);
  REQUIRE(trace.requests.size() == 2);
  CHECK(classify_request(kProfile, kThresholds, trace.requests[0].prompt_tokens,
                         trace.requests[0].true_decode_tokens) ==
        RequestClass::HL);
  CHECK(classify_request(kProfile, kThresholds, trace.requests[1].prompt_tokens,
                         trace.requests[1].true_decode_tokens) ==
        RequestClass::LH);
}

TEST_CASE("all-random scenario covers the four classes uniformly") {
  Rng rng(77);
  auto trace = generate_scenario(ScenarioKind::AllRandom, 10000,
                                 {ArrivalProcess::Poisson, 20.0}, kProfile,
                                 kThresholds, rng);
  std::array<long long, 4> counts{0, 0, 0, 0};
  for (const auto& r : trace.requests) {
    counts[static_cast<int>(classify_request(
        kProfile, kThresholds, r.prompt_tokens, r.true_decode_tokens))]++;
  }
  double expected = 10000.0 / 4.0;
  double chi2 = 0.0;
  for (auto c : counts) {
    CHECK(c > 0);
    double d = static_cast<double>(c) - expected;
    chi2 += d * d / expected;
  }
  CHECK(chi2 < 16.27);  // dof 3, p = 0.001
}

TEST_CASE("scenario generation rejects n = 0") {
  Rng rng(1);
  CHECK_THROWS_AS(generate_scenario(ScenarioKind::AllRandom, 0,
                                    {ArrivalProcess::Poisson, 20.0}, kProfile,
                                    kThresholds, rng),
                  std::invalid_argument);
}

TEST_CASE("trace loader round-trips and validates") {
  auto path = temp_file("routesim_trace_ok.csv");
  {
    std::ofstream out(path);
    out << "arrival_time_s,task,prompt_tokens,decode_tokens\n";
    out << "0.5,QnA,10,20\n";
    out << "1,Translation,30,40\n";
    out << "2.25,QnA,50,60\n";
  }
  auto trace = load_trace(path.string());
  REQUIRE(trace.requests.size() == 3);
  CHECK(trace.requests[1].task == TaskKind::Translation);
  CHECK(trace.requests[2].prompt_tokens == 50);

  // Pre-computed means: prompt (10+30+50)/3 = 30, decode (20+40+60)/3 = 40.
  auto stats = task_stats(trace, kThresholds, kProfile);
  CHECK_THAT(stats.overall.mean_prompt, WithinRel(30.0, 1e-12));
  CHECK_THAT(stats.overall.mean_decode, WithinRel(40.0, 1e-12));

  auto bad = temp_file("routesim_trace_bad.csv");
  {
    std::ofstream out(bad);
    out << "arrival_time_s,task,prompt_tokens,decode_tokens\n";
    out << "0.5,QnA,10,20\n";
    out << "1.5,QnA,10,0\n";
  }
  CHECK_THROWS_WITH(load_trace(bad.string()),
                    Catch::Matchers::ContainsSubstring("line 3"));

  auto nonmono = temp_file("routesim_trace_nonmono.csv");
  {
    std::ofstream out(nonmono);
    out << "arrival_time_s,task,prompt_tokens,decode_tokens\n";
    out << "2,QnA,10,20\n";
    out << "1,QnA,10,20\n";
  }
  CHECK_THROWS_WITH(load_trace(nonmono.string()),
                    Catch::Matchers::ContainsSubstring("non-decreasing"));

  auto badheader = temp_file("routesim_trace_header.csv");
  {
    std::ofstream out(badheader);
    out << "time,task,p,d\n";
  }
  CHECK_THROWS_WITH(load_trace(badheader.string()),
                    Catch::Matchers::ContainsSubstring("header"));
}

TEST_CASE("trace save/load preserves aggregate statistics") {
  Rng rng(31);
  auto trace = generate_dataset_mixture(kProfile, kThresholds, 500,
                                        {ArrivalProcess::Poisson, 20.0}, rng);
  auto path = temp_file("routesim_trace_roundtrip.csv");
  save_trace(trace, path.string());
  auto loaded = load_trace(path.string());
  auto a = task_stats(trace, kThresholds, kProfile);
  auto b = task_stats(loaded, kThresholds, kProfile);
  CHECK(a.overall.count == b.overall.count);
  CHECK_THAT(a.overall.mean_prompt, WithinAbs(b.overall.mean_prompt, 1e-9));
  CHECK_THAT(a.overall.mean_decode, WithinAbs(b.overall.mean_decode, 1e-9));
  CHECK_THAT(a.overall.heavy_decode_pct,
             WithinAbs(b.overall.heavy_decode_pct, 1e-9));
}

TEST_CASE("task stats on degenerate traces") {
  ArrivalTrace trace;
  CHECK_THROWS_AS(task_stats(trace, kThresholds, kProfile),
                  std::invalid_argument);

  Request r;
  r.task = TaskKind::QnA;
  r.prompt_tokens = 12;
  r.true_decode_tokens = 34;
  trace.requests.push_back(r);
  auto one = task_stats(trace, kThresholds, kProfile);
  CHECK(one.overall.count == 1);
  CHECK_THAT(one.overall.mean_prompt, WithinRel(12.0, 1e-12));
  CHECK_THAT(one.overall.mean_decode, WithinRel(34.0, 1e-12));

  trace.requests.push_back(r);
  auto two = task_stats(trace, kThresholds, kProfile);
  CHECK_THAT(two.overall.mean_prompt, WithinRel(one.overall.mean_prompt, 1e-12));
  CHECK_THAT(two.overall.heavy_decode_pct,
             WithinRel(one.overall.heavy_decode_pct, 1e-12));
}

TEST_CASE("full mixture reproduces the published totals") {
  Rng rng(2024);
  auto trace = generate_dataset_mixture(kProfile, kThresholds, 31329,
                                        {ArrivalProcess::Poisson, 20.0}, rng);
  auto stats = task_stats(trace, kThresholds, kProfile);
  CHECK(std::abs(stats.overall.mean_prompt - 89.03) / 89.03 < 0.05);
  CHECK(std::abs(stats.overall.mean_decode - 175.71) / 175.71 < 0.05);
  CHECK(std::abs(stats.overall.heavy_decode_pct - 35.54) < 2.0);

  // Mixture proportions follow the sample weights within multinomial noise.
  double total_weight = 0.0;
  for (const auto& row : dataset_task_table()) total_weight += row.samples;
  for (const auto& row : dataset_task_table()) {
    double p = row.samples / total_weight;
    double expected = p * 31329.0;
    double sigma = std::sqrt(31329.0 * p * (1.0 - p));
    CHECK(std::abs(stats.per_task.at(row.task).count - expected) < 5 * sigma);
  }
}
