// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "routesim/instance.hpp"
#include "routesim/latency.hpp"

using namespace routesim;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
const HardwareProfile kProfile;

std::uint32_t add_request(RequestPool& pool, int prompt, int decode,
                          double arrival = 0.0) {
  Request r;
  r.id = pool.size();
  r.prompt_tokens = prompt;
  r.true_decode_tokens = decode;
  r.arrival_time_s = arrival;
  pool.push_back(r);
  return static_cast<std::uint32_t>(pool.size() - 1);
}

double run_to_completion(Instance& inst, RequestPool& pool) {
  while (inst.has_work()) inst.step(pool, kProfile);
  return inst.clock();
}
}  // namespace

TEST_CASE("enqueue appends in arrival order and rejects duplicates") {
  RequestPool pool;
  Instance inst({}, 0);
  auto a = add_request(pool, 100, 10);
  auto b = add_request(pool, 50, 10);
  inst.enqueue(pool, a, 0.0);
  CHECK(inst.waiting().size() == 1);
  inst.enqueue(pool, b, 0.0);
  REQUIRE(inst.waiting().size() == 2);
  CHECK(inst.waiting()[0] == a);  // same timestamp: call order wins
  CHECK(inst.waiting()[1] == b);
  CHECK_THROWS_AS(inst.enqueue(pool, a, 0.0), std::invalid_argument);
}

TEST_CASE("enqueue rejects a request that can never fit") {
  RequestPool pool;
  InstanceConfig cfg;
  cfg.kv_capacity_tokens = 100;
  Instance inst(cfg, 0);
  auto big = add_request(pool, 80, 30);  // 110 > 100
  CHECK_THROWS_AS(inst.enqueue(pool, big, 0.0), std::invalid_argument);
}

TEST_CASE("enqueue during a long prefill leaves the running set unchanged") {
  RequestPool pool;
  Instance inst({}, 0);
  auto a = add_request(pool, 4000, 50);
  inst.enqueue(pool, a, 0.0);
  inst.step(pool, kProfile);  // prefill of a
  REQUIRE(inst.running().size() == 1);
  auto b = add_request(pool, 10, 10);
  inst.enqueue(pool, b, inst.clock());
  CHECK(inst.running().size() == 1);
  CHECK(inst.waiting().size() == 1);
  CHECK(inst.waiting()[0] == b);
}

TEST_CASE("fcfs admits strictly in arrival order") {
  RequestPool pool;
  InstanceConfig cfg;
  cfg.kv_capacity_tokens = 120;
  Instance inst(cfg, 0);
  auto a = add_request(pool, 100, 10);
  auto b = add_request(pool, 50, 10);
  inst.enqueue(pool, a, 0.0);
  inst.enqueue(pool, b, 0.0);
  auto admitted = inst.admit_waiting(pool);
  REQUIRE(admitted.size() == 1);  // room for one; the head goes first
  CHECK(admitted[0] == a);
}

TEST_CASE("bin packing admits the largest fitting request, ties by fcfs") {
  // Occupant reserves 120 of the 200-token budget; the waiting reservations
  // are {100, 70, 60}, so only the 70 fits and it wins over the 60.
  RequestPool pool;
  InstanceConfig cfg;
  cfg.kv_capacity_tokens = 200;
  cfg.batching = BatchingPolicy::BinPacking;
  Instance inst(cfg, 0);
  auto occupant = add_request(pool, 110, 10);
  inst.enqueue(pool, occupant, 0.0);
  inst.step(pool, kProfile);
  auto a = add_request(pool, 90, 10);
  auto b = add_request(pool, 60, 10);
  auto c = add_request(pool, 50, 10);
  inst.enqueue(pool, a, inst.clock());
  inst.enqueue(pool, b, inst.clock());
  inst.enqueue(pool, c, inst.clock());
  auto admitted = inst.admit_waiting(pool);
  REQUIRE(admitted.size() == 1);
  CHECK(admitted[0] == b);

  // Tie break: equal sizes admit the earlier arrival.
  RequestPool pool2;
  Instance inst2(cfg, 0);
  auto x = add_request(pool2, 60, 10);
  auto y = add_request(pool2, 60, 10);
  inst2.enqueue(pool2, x, 0.0);
  inst2.enqueue(pool2, y, 0.0);
  auto first = inst2.admit_waiting(pool2);
  REQUIRE(first.size() == 2);
  CHECK(first[0] == x);
  CHECK(first[1] == y);
}

TEST_CASE("least work left admits by smallest decode estimate") {
  RequestPool pool;
  InstanceConfig cfg;
  cfg.batching = BatchingPolicy::LeastWorkLeft;
  Instance inst(cfg, 0);
  auto a = add_request(pool, 10, 300);
  auto b = add_request(pool, 10, 100);
  auto c = add_request(pool, 10, 200);
  inst.enqueue(pool, a, 0.0);
  inst.enqueue(pool, b, 0.0);
  inst.enqueue(pool, c, 0.0);
  auto admitted = inst.admit_waiting(pool);
  REQUIRE(admitted.size() == 3);
  CHECK(admitted[0] == b);
  CHECK(admitted[1] == c);
  CHECK(admitted[2] == a);
}

TEST_CASE("solo request completes at the calibrated ideal time") {
  RequestPool pool;
  Instance inst({}, 0);
  auto r = add_request(pool, 1000, 1000);
  inst.enqueue(pool, r, 0.0);
  double t = run_to_completion(inst, pool);

  // Hand oracle: prefill 0.026 + 0.32, then 1000 decode iterations of
  // 0.0167 + 3.3e-5 each.
  double oracle = prompt_batch_time(kProfile, 1000, 0) +
                  1000.0 * decode_batch_time(kProfile, 1);
  CHECK_THAT(t, WithinRel(oracle, 1e-9));
  CHECK(std::abs(t - 17.0) / 17.0 < 0.05);

  double est = estimate_request_time(kProfile, 1000, 1000);
  CHECK(std::abs(t - est) / est < 0.10);

  CHECK(pool[r].completed());
  CHECK(pool[r].tokens_emitted == 1000);
  CHECK(pool[r].first_token_time_s > 0.0);
  CHECK(pool[r].completion_time_s >= pool[r].first_token_time_s);
}

TEST_CASE("periodic injections inflate the first request's latency") {
  // p=500,d=500 requests arrive every 50 iteration-times (50 x 0.02 s)
  // while a p=1000,d=1000 request runs. Solo it finishes near 17 s; the
  // injected prefills stall its decode and push it into the low 30s.
  RequestPool pool;
  Instance inst({}, 0);
  auto first = add_request(pool, 1000, 1000);
  inst.enqueue(pool, first, 0.0);
  const double interval = 50 * 0.02;
  double next_arrival = interval;
  while (!pool[first].completed()) {
    while (inst.clock() >= next_arrival) {
      auto extra = add_request(pool, 500, 500, next_arrival);
      inst.enqueue(pool, extra, inst.clock());
      next_arrival += interval;
    }
    inst.step(pool, kProfile);
  }
  double e2e = pool[first].completion_time_s;
  INFO("first request E2E with injections: " << e2e);
  CHECK(e2e >= 26.0);
  CHECK(e2e <= 36.0);
}

TEST_CASE("a waiting request is admitted and prefilled when nothing runs") {
  RequestPool pool;
  Instance inst({}, 0);
  auto r = add_request(pool, 64, 5);
  inst.enqueue(pool, r, 0.0);
  auto out = inst.step(pool, kProfile);
  CHECK(out.prefill);
  CHECK(out.prompt_tokens_processed == 64);
  CHECK(inst.running().size() == 1);
  CHECK_THAT(out.elapsed, WithinRel(prompt_batch_time(kProfile, 64, 0), 1e-12));
}

TEST_CASE("capacity exactly met causes no preemption") {
  RequestPool pool;
  InstanceConfig cfg;
  cfg.kv_capacity_tokens = 20;
  Instance inst(cfg, 0);
  inst.enqueue(pool, add_request(pool, 5, 5), 0.0);
  inst.enqueue(pool, add_request(pool, 5, 5), 0.0);
  run_to_completion(inst, pool);
  CHECK(inst.preemption_log().empty());
}

TEST_CASE("one token over capacity evicts the newest request") {
  // Both responses overrun their 6-token estimates: footprints grow to
  // 14+14 = 28 > 27 one iteration before either request can finish,
  // forcing exactly the newest one out.
  RequestPool pool;
  InstanceConfig cfg;
  cfg.kv_capacity_tokens = 27;
  Instance inst(cfg, 0);
  auto a = add_request(pool, 5, 10);
  auto b = add_request(pool, 5, 10);
  pool[a].decode_estimate_tokens = 6;
  pool[b].decode_estimate_tokens = 6;
  inst.enqueue(pool, a, 0.0);
  inst.enqueue(pool, b, 0.0);
  bool evicted_b = false;
  while (inst.has_work()) {
    auto out = inst.step(pool, kProfile);
    for (auto p : out.preempted) {
      CHECK(p == b);  // most recently admitted goes first
      evicted_b = true;
    }
  }
  CHECK(evicted_b);
  CHECK(pool[b].preemption_count >= 1);
  CHECK(pool[a].preemption_count == 0);
  CHECK(pool[a].completed());
  CHECK(pool[b].completed());
}

TEST_CASE("saturation hurts latency relative to an uncontended run") {
  // Every response overruns its estimate fourfold, so the tight instance
  // admits eagerly and then preempts under growth.
  auto build_pool = [] {
    RequestPool pool;
    for (int i = 0; i < 6; ++i) {
      auto idx = add_request(pool, 40, 400);
      pool[idx].decode_estimate_tokens = 100;
    }
    return pool;
  };

  RequestPool tight_pool = build_pool();
  InstanceConfig tight;
  tight.kv_capacity_tokens = 1200;
  Instance small(tight, 0);
  for (std::uint32_t i = 0; i < 6; ++i) small.enqueue(tight_pool, i, 0.0);
  double tight_makespan = run_to_completion(small, tight_pool);
  CHECK_FALSE(small.preemption_log().empty());

  RequestPool roomy_pool = build_pool();
  Instance big({}, 0);
  for (std::uint32_t i = 0; i < 6; ++i) big.enqueue(roomy_pool, i, 0.0);
  double roomy_makespan = run_to_completion(big, roomy_pool);
  CHECK(tight_makespan > roomy_makespan);
}

TEST_CASE("conservation: every request completes exactly once") {
  RequestPool pool;
  InstanceConfig cfg;
  cfg.kv_capacity_tokens = 600;
  cfg.batching = BatchingPolicy::BinPacking;
  Instance inst(cfg, 0);
  for (int i = 0; i < 20; ++i) {
    auto idx = add_request(pool, 20 + i, 50 + 7 * i);
    // Half the responses overrun their estimates and get preempted.
    if (i % 2 == 1) pool[idx].decode_estimate_tokens = (50 + 7 * i) / 2;
    inst.enqueue(pool, idx, 0.0);
  }
  std::vector<int> completions(pool.size(), 0);
  while (inst.has_work()) {
    auto out = inst.step(pool, kProfile);
    for (auto c : out.completed) completions[c]++;
  }
  CHECK_FALSE(inst.preemption_log().empty());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    CHECK(completions[i] == 1);
    CHECK(pool[i].completed());
    CHECK(pool[i].tokens_emitted == pool[i].true_decode_tokens);
  }
}

TEST_CASE("running requests are never displaced by admission") {
  RequestPool pool;
  InstanceConfig cfg;
  cfg.kv_capacity_tokens = 150;
  cfg.batching = BatchingPolicy::BinPacking;
  Instance inst(cfg, 0);
  auto small = add_request(pool, 30, 60);
  inst.enqueue(pool, small, 0.0);
  inst.step(pool, kProfile);  // small is running
  auto big = add_request(pool, 100, 40);
  inst.enqueue(pool, big, inst.clock());
  inst.step(pool, kProfile);
  bool small_still_running = false;
  for (const auto& e : inst.running()) {
    if (e.req == small) small_still_running = true;
  }
  CHECK(small_still_running);
}

TEST_CASE("chunked prefill bounds per-iteration prompt tokens") {
  RequestPool pool;
  InstanceConfig cfg;
  cfg.chunk_size = 256;
  Instance inst(cfg, 0);
  auto r = add_request(pool, 1000, 4);
  inst.enqueue(pool, r, 0.0);
  int prefill_iters = 0;
  while (inst.has_work()) {
    auto out = inst.step(pool, kProfile);
    CHECK(out.prompt_tokens_processed <= 256);
    if (out.prefill) ++prefill_iters;
  }
  CHECK(prefill_iters == 4);  // 256+256+256+232
}

TEST_CASE("with chunking, co-running decodes advance during prefill chunks") {
  RequestPool pool;
  InstanceConfig cfg;
  cfg.chunk_size = 128;
  Instance inst(cfg, 0);
  auto a = add_request(pool, 16, 50);
  inst.enqueue(pool, a, 0.0);
  inst.step(pool, kProfile);  // prefill a
  inst.step(pool, kProfile);  // a decodes its first token
  int emitted_before = pool[a].tokens_emitted;
  auto b = add_request(pool, 512, 5);
  inst.enqueue(pool, b, inst.clock());
  auto out = inst.step(pool, kProfile);
  CHECK(out.prefill);
  CHECK(pool[a].tokens_emitted == emitted_before + 1);

  // Without chunking, the same co-running decode would stall.
  RequestPool pool2;
  Instance plain({}, 0);
  auto a2 = add_request(pool2, 16, 50);
  plain.enqueue(pool2, a2, 0.0);
  plain.step(pool2, kProfile);
  plain.step(pool2, kProfile);
  int before2 = pool2[a2].tokens_emitted;
  auto b2 = add_request(pool2, 512, 5);
  plain.enqueue(pool2, b2, plain.clock());
  auto out2 = plain.step(pool2, kProfile);
  CHECK(out2.prefill);
  CHECK(pool2[a2].tokens_emitted == before2);
}

TEST_CASE("capacity fraction reflects resident kv tokens") {
  RequestPool pool;
  Instance inst({}, 0);
  CHECK_THAT(inst.capacity_fraction(pool), WithinRel(1.0, 1e-12));

  auto r = add_request(pool, 1000, 50);
  inst.enqueue(pool, r, 0.0);
  inst.step(pool, kProfile);  // prefill only: 1000 tokens resident
  CHECK_THAT(inst.capacity_fraction(pool),
             WithinRel(1.0 - 1000.0 / 16384.0, 1e-12));

  RequestPool pool2;
  InstanceConfig cfg;
  cfg.kv_capacity_tokens = 2000;
  Instance half(cfg, 0);
  auto h = add_request(pool2, 1000, 50);
  half.enqueue(pool2, h, 0.0);
  half.step(pool2, kProfile);
  CHECK_THAT(half.capacity_fraction(pool2), WithinRel(0.5, 1e-12));
}

TEST_CASE("snapshot reports bucket counts, capacity, and availability") {
  RequestPool pool;
  Instance inst({}, 0);
  const long long prompt_edges[] = {0, 256, 2048};
  const long long decode_edges[] = {0, 256, 2048};

  auto empty = inst.snapshot(pool, kProfile, prompt_edges, decode_edges);
  CHECK(empty.capacity == 1.0);
  CHECK(empty.t_hat_c == 0.0);
  for (auto c : empty.prompt_bucket_counts) CHECK(c == 0);
  for (auto c : empty.decode_bucket_counts) CHECK(c == 0);

  // One running request with 100 decode tokens left.
  auto r = add_request(pool, 64, 110);
  inst.enqueue(pool, r, 0.0);
  inst.step(pool, kProfile);  // prefill
  for (int i = 0; i < 10; ++i) inst.step(pool, kProfile);
  auto snap = inst.snapshot(pool, kProfile, prompt_edges, decode_edges);
  CHECK(snap.decode_bucket_counts[0] == 1);
  CHECK_THAT(snap.t_hat_c,
             WithinRel(estimate_instance_available(kProfile, 100), 1e-12));

  // Conservation: counts cover running plus waiting.
  auto w = add_request(pool, 300, 20);
  inst.enqueue(pool, w, inst.clock());
  auto snap2 = inst.snapshot(pool, kProfile, prompt_edges, decode_edges);
  int total = 0;
  for (auto c : snap2.prompt_bucket_counts) total += c;
  for (auto c : snap2.decode_bucket_counts) total += c;
  CHECK(total == static_cast<int>(inst.running().size() +
                                  inst.waiting().size()));
}

TEST_CASE("run_until completes boundary-spanning iterations") {
  RequestPool pool;
  Instance inst({}, 0);
  auto r = add_request(pool, 2000, 3);
  inst.enqueue(pool, r, 0.0);
  inst.run_until(pool, kProfile, 0.02);
  // The 2000-token prefill (~0.666 s) spans the boundary and completes.
  CHECK(inst.clock() > 0.6);
  CHECK(pool[r].prompt_tokens - inst.running()[0].prompt_remaining == 2000);

  Instance idle({}, 1);
  RequestPool none;
  idle.run_until(none, kProfile, 5.0);
  CHECK(idle.clock() == 5.0);
}

TEST_CASE("clock is monotone across iterations") {
  RequestPool pool;
  InstanceConfig cfg;
  cfg.kv_capacity_tokens = 700;
  Instance inst(cfg, 0);
  for (int i = 0; i < 8; ++i) inst.enqueue(pool, add_request(pool, 30, 120), 0.0);
  double last = inst.clock();
  while (inst.has_work()) {
    auto out = inst.step(pool, kProfile);
    CHECK(out.elapsed > 0.0);
    CHECK(inst.clock() > last);
    last = inst.clock();
  }
}
