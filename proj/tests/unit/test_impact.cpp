// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "routesim/impact.hpp"
#include "routesim/rng.hpp"

using namespace routesim;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
const ImpactConfig kCfg;

InstanceLoad load_of(std::initializer_list<std::pair<long long, long long>> l) {
  InstanceLoad load;
  load.requests.assign(l.begin(), l.end());
  return load;
}
}  // namespace

TEST_CASE("prompt impact on an empty instance") {
  // Hand oracle: T_p = 3.2e-4 * 30^2 = 0.288 <= 0.5 -> r_p = 1.
  auto small = prompt_impact(kCfg, 30, {});
  CHECK_THAT(small.t_p, WithinRel(0.288, 1e-12));
  CHECK(small.r_p == 1.0);

  // Hand oracle: T_p = 3.2e-4 * 2500 = 0.8 -> r_p = 1 - 0.8/0.5 = -0.6.
  auto big = prompt_impact(kCfg, 50, {});
  CHECK_THAT(big.t_p, WithinRel(0.8, 1e-12));
  CHECK_THAT(big.r_p, WithinRel(-0.6, 1e-12));
}

TEST_CASE("prompt penalty strictly decreases with load once over budget") {
  auto base = load_of({{1000, 500}, {200, 100}});
  auto doubled = load_of({{2000, 1000}, {400, 200}});
  auto r1 = prompt_impact(kCfg, 50, base);
  auto r2 = prompt_impact(kCfg, 50, doubled);
  REQUIRE(r1.t_p > kCfg.epsilon_s);
  CHECK(r2.r_p < r1.r_p);
}

TEST_CASE("prompt exponent one keeps the incoming term linear") {
  ImpactConfig linear = kCfg;
  linear.prompt_exponent = 1;
  auto r = prompt_impact(linear, 50, {});
  CHECK_THAT(r.t_p, WithinRel(3.2e-4 * 50, 1e-12));
  CHECK(r.r_p == 1.0);
}

TEST_CASE("decode impact is a negative token-mass penalty") {
  // Hand oracle: -3.3e-5 * 30303 = -0.999999 (the -1 end of the stated
  // range when the instance is empty).
  CHECK_THAT(decode_impact(kCfg, 30000, 303, {}), WithinAbs(-1.0, 1e-3));
  CHECK_THAT(decode_impact(kCfg, 1, 0, {}), WithinRel(-3.3e-5, 1e-12));

  auto loaded = load_of({{100, 50}});
  CHECK(decode_impact(kCfg, 10, 10, loaded) < decode_impact(kCfg, 10, 10, {}));
}

TEST_CASE("mixing penalty blends the two phases") {
  CHECK_THAT(mixing_penalty(kCfg, 1.0, 0.0), WithinRel(0.5, 1e-12));

  ImpactConfig prompt_only = kCfg;
  prompt_only.alpha = 1.0;
  CHECK(mixing_penalty(prompt_only, -0.37, 123.0) == -0.37);

  ImpactConfig decode_only = kCfg;
  decode_only.alpha = 0.0;
  CHECK(mixing_penalty(decode_only, 123.0, -0.4) == -0.4);

  // Hand oracle: 0.5*(-0.6) + 0.5*(-0.4) = -0.5.
  CHECK_THAT(mixing_penalty(kCfg, -0.6, -0.4), WithinRel(-0.5, 1e-12));
}

TEST_CASE("heuristic advantage from precomputed scores") {
  const double scores[] = {0.5, 0.2};
  CHECK(heuristic_h_from_scores(scores, 0) == 0.0);
  CHECK_THAT(heuristic_h_from_scores(scores, 1), WithinRel(-0.3, 1e-12));
  CHECK(heuristic_h_from_scores(scores, 2) == 0.0);  // no-op action
  CHECK_THROWS_AS(heuristic_h_from_scores(scores, 3), std::invalid_argument);
}

TEST_CASE("heuristic is zero on identical loads for every action") {
  std::vector<InstanceLoad> loads(4, load_of({{300, 120}, {40, 10}}));
  for (std::size_t a = 0; a <= loads.size(); ++a) {
    CHECK(heuristic_h(kCfg, 200, 100, loads, a) == 0.0);
  }
}

TEST_CASE("heuristic is nonpositive and zero exactly on the argmax") {
  Rng rng(99);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<InstanceLoad> loads(4);
    for (auto& l : loads) {
      int n = static_cast<int>(rng.uniform_below(6));
      for (int j = 0; j < n; ++j) {
        l.requests.emplace_back(rng.uniform_int(1, 2000),
                                rng.uniform_int(0, 2000));
      }
    }
    long long p = rng.uniform_int(1, 2000);
    long long d = rng.uniform_int(0, 4096);

    double best = -1e300;
    std::size_t argmax = 0;
    for (std::size_t l = 0; l < loads.size(); ++l) {
      double s = mixing_for(kCfg, p, d, loads[l]);
      if (s > best) {
        best = s;
        argmax = l;
      }
    }
    for (std::size_t a = 0; a < loads.size(); ++a) {
      double h = heuristic_h(kCfg, p, d, loads, a);
      CHECK(h <= 0.0);
      if (a == argmax) CHECK(h == 0.0);
      if (h == 0.0) {
        CHECK(mixing_for(kCfg, p, d, loads[a]) == best);
      }
    }
  }
}

TEST_CASE("uniform load scaling preserves the argmax instance") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<InstanceLoad> loads(3);
    std::vector<InstanceLoad> scaled(3);
    for (std::size_t i = 0; i < loads.size(); ++i) {
      int n = 1 + static_cast<int>(rng.uniform_below(5));
      for (int j = 0; j < n; ++j) {
        long long p = rng.uniform_int(1, 1500);
        long long d = rng.uniform_int(0, 1500);
        loads[i].requests.emplace_back(p, d);
        scaled[i].requests.emplace_back(3 * p, 3 * d);
      }
    }
    long long p = rng.uniform_int(1, 2000);
    long long d = rng.uniform_int(0, 2000);
    auto argmax_of = [&](const std::vector<InstanceLoad>& ls) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < ls.size(); ++i) {
        if (mixing_for(kCfg, p, d, ls[i]) >
            mixing_for(kCfg, p, d, ls[best])) {
          best = i;
        }
      }
      return best;
    };
    CHECK(argmax_of(loads) == argmax_of(scaled));
  }
}

TEST_CASE("impact config validation") {
  CHECK_NOTHROW(kCfg.validate());
  ImpactConfig bad = kCfg;
  bad.alpha = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = kCfg;
  bad.prompt_exponent = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = kCfg;
  bad.epsilon_s = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
