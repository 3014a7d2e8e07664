/*
 * Copyright 2026 The shotcache Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "shotcache/errors.hpp"
#include "shotcache/simulator.hpp"

using namespace shotcache;

namespace {

SimConfig small_config(PolicyKind policy, double lamT = 50.0, std::uint32_t L = 4) {
  SimConfig c;
  c.snm.lambda = lamT;
  c.snm.shot_duration = 1.0;
  c.snm.mu_bar = 10.0;
  c.snm.alpha = 0.8;
  c.snm.horizon = 5.0;
  c.snm.seed = 11;
  c.topology.num_caches = L;
  c.policy = policy;
  c.xi = L;
  return c;
}

// Naive LRU: vector with the most recent entry at the back.
struct RefCache {
  std::size_t cap;
  std::vector<std::uint32_t> items;
  bool touch(std::uint32_t id) {
    auto it = std::find(items.begin(), items.end(), id);
    if (it == items.end()) return false;
    items.erase(it);
    items.push_back(id);
    return true;
  }
  void insert(std::uint32_t id) {
    if (touch(id)) return;
    if (items.size() == cap) items.erase(items.begin());
    items.push_back(id);
  }
};

// Straight re-implementation of the request loop for the LRU family.
SimMetrics reference_run(const SimConfig& cfg, const std::vector<Shot>& catalog, const RequestTrace& trace,
                         const PolicyTables& tables) {
  const double T = cfg.snm.shot_duration, t0 = cfg.window_start(), t1 = cfg.window_end();
  std::vector<RefCache> caches(cfg.topology.num_caches, RefCache{cfg.capacity(), {}});
  std::vector<unsigned> n(catalog.size(), 0);
  const bool gated = cfg.policy != PolicyKind::lru;
  const bool pre = cfg.policy == PolicyKind::lru_prefetch;
  auto pass = [&](std::uint32_t id, double t, double beta) {
    return tables.book.score(n[id], t - catalog[id].arrival_time, beta) == 1;
  };
  SimMetrics m;
  m.xi = cfg.xi;
  auto cycle = [&](double t) {
    for (const Shot& s : catalog) {
      if (s.arrival_time < t - T || s.arrival_time > t || !pass(s.id, t, cfg.scores.beta2)) continue;
      for (auto& c : caches) {
        if (c.touch(s.id)) continue;
        c.insert(s.id);
        if (t >= t0 && t < t1) {
          ++m.backhaul_transmissions;
          ++m.prefetch_fetches;
        }
      }
    }
  };
  long k = static_cast<long>(std::ceil(trace.start / cfg.period()));
  for (const auto& e : trace.events) {
    while (pre && k * cfg.period() <= e.time && k * cfg.period() < t1) cycle(k++ * cfg.period());
    if (e.time >= t1) break;
    auto& c = caches[e.cache_id];
    const bool hit = c.touch(e.content_id);
    if (!hit && (!gated || pass(e.content_id, e.time, cfg.scores.beta1))) c.insert(e.content_id);
    ++n[e.content_id];
    if (e.time >= t0) {
      ++m.real_requests;
      if (hit) {
        ++m.hits;
      } else {
        ++m.misses;
        ++m.backhaul_transmissions;
      }
    }
  }
  while (pre && k * cfg.period() < t1) cycle(k++ * cfg.period());
  return m;
}

}  // namespace

TEST_CASE("LRU cache state") {
  CacheState c(3);
  CHECK_FALSE(c.touch(1));
  CHECK_FALSE(c.insert(1));
  CHECK_FALSE(c.insert(2));
  CHECK_FALSE(c.insert(3));
  CHECK(c.touch(1));
  CHECK(c.contents() == std::vector<std::uint32_t>{1, 3, 2});
  CHECK(c.insert(4) == std::optional<std::uint32_t>(2));
  CHECK(c.contents() == std::vector<std::uint32_t>{4, 1, 3});
  CHECK(c.consistent());

  // Random operations against the naive list.
  std::mt19937_64 rng(5);
  CacheState a(7);
  RefCache r{7, {}};
  for (int i = 0; i < 20000; ++i) {
    const auto id = static_cast<std::uint32_t>(rng() % 20);
    if (rng() % 2) {
      CHECK(a.touch(id) == r.touch(id));
    } else {
      a.insert(id);
      r.insert(id);
    }
    REQUIRE(a.size() <= a.capacity());
  }
  CHECK(a.consistent());
  std::vector<std::uint32_t> want(r.items.rbegin(), r.items.rend());
  CHECK(a.contents() == want);
}

TEST_CASE("LRU on hand-made traces") {
  SimConfig cfg = small_config(PolicyKind::lru, 1.0, 1);
  cfg.snm.horizon = 3.0;
  cfg.t_start = 1.0;
  std::vector<Shot> cat{{0, 0.5, 1.0, 0.5, {}}, {1, 0.5, 1.0, 0.5, {}}};
  // capacity max(1, round(0.1)) = 1
  REQUIRE(cfg.capacity() == 1);
  RequestTrace tr{-1.0, 3.0, {}};
  for (int i = 0; i < 8; ++i) tr.events.push_back({1.0 + 0.1 * i, 0, 0});
  auto m = run(cfg, cat, tr);
  CHECK(m.real_requests == 8);
  CHECK(m.hits == 7);  // one compulsory miss

  tr.events.clear();
  for (int i = 0; i < 8; ++i) tr.events.push_back({1.0 + 0.1 * i, static_cast<std::uint32_t>(i % 2), 0});
  m = run(cfg, cat, tr);
  CHECK(m.hits == 0);
  CHECK(m.backhaul_transmissions == 8);
  CHECK(m.transmissions_per_request() == 1.0);

  // Events before the window warm the cache but are not counted.
  tr.events = {{0.9, 0, 0}, {1.2, 0, 0}};
  m = run(cfg, cat, tr);
  CHECK(m.real_requests == 1);
  CHECK(m.hits == 1);
}

TEST_CASE("LRU family against the naive reference") {
  for (auto policy : {PolicyKind::lru, PolicyKind::gated_lru, PolicyKind::lru_prefetch}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      SimConfig cfg = small_config(policy);
      cfg.snm.seed = seed;
      if (seed == 3) cfg.prefetch_period = 0.3;
      const PolicyTables tables(cfg.snm);
      const auto cat = generate_catalog(cfg.snm);
      const auto tr = generate_requests(cat, cfg.snm, cfg.topology);
      const auto m = run(cfg, cat, tr, &tables);
      CAPTURE(to_string(policy));
      CHECK(m == reference_run(cfg, cat, tr, tables));
      // conservation
      CHECK(m.hits + m.misses == m.real_requests);
      CHECK(m.backhaul_transmissions == m.misses + m.prefetch_fetches);
      if (policy != PolicyKind::lru_prefetch) CHECK(m.prefetch_fetches == 0);
    }
  }
}

TEST_CASE("coordinator counts") {
  SimConfig cfg = small_config(PolicyKind::lru, 80.0, 3);
  const auto cat = generate_catalog(cfg.snm);
  const auto tr = generate_requests(cat, cfg.snm, cfg.topology);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, cfg.snm.horizon);
  for (int probe = 0; probe < 100; ++probe) {
    const double t = u(rng);
    const auto got = coordinator_counts(cat, tr, t, 1.0);
    std::vector<ContentCount> want;
    for (const Shot& s : cat) {
      if (s.arrival_time > t || s.arrival_time < t - 1.0) continue;
      const auto n = std::count_if(tr.events.begin(), tr.events.end(),
                                   [&](const RequestEvent& e) { return e.content_id == s.id && e.time <= t; });
      want.push_back({s.id, static_cast<unsigned>(n), t - s.arrival_time});
    }
    REQUIRE(got == want);
  }
  Coordinator c(cat);
  for (const auto& e : tr.events) c.observe(e);
  std::uint64_t sum = 0;
  for (const Shot& s : cat) sum += c.count(s.id);
  CHECK(sum == c.total());
  CHECK(c.total() == tr.events.size());
}

TEST_CASE("oracle matches decide at every request") {
  SimConfig cfg = small_config(PolicyKind::oracle_abt, 40.0, 1);
  cfg.snm.mu_bar = 5.0;
  cfg.snm.horizon = 4.0;
  const PolicyTables tables(cfg.snm);
  const ThresholdTable& table = tables.book.table(cfg.capacity_fraction);
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    cfg.snm.seed = seed;
    const auto cat = generate_catalog(cfg.snm);
    const auto tr = generate_requests(cat, cfg.snm, cfg.topology);
    std::vector<unsigned> n(cat.size(), 0);
    std::uint64_t hits = 0, reqs = 0;
    for (const auto& e : tr.events) {
      if (e.time >= cfg.window_end()) break;
      if (e.time >= cfg.window_start()) {
        std::vector<ContentState> alive;
        std::size_t me = 0;
        for (const Shot& s : cat) {
          const double age = e.time - s.arrival_time;
          if (age < 0.0 || age > 1.0) continue;
          if (s.id == e.content_id) me = alive.size();
          alive.push_back({s.id, n[s.id], age, &table});
        }
        hits += decide(alive, cfg.capacity())[me].cached;
        ++reqs;
      }
      ++n[e.content_id];
    }
    const auto m = run(cfg, cat, tr, &tables);
    CAPTURE(seed);
    CHECK(m.real_requests == reqs);
    CHECK(m.hits == hits);
  }
}

TEST_CASE("determinism and sweeps") {
  SimConfig cfg = small_config(PolicyKind::gated_lru);
  CHECK(simulate(cfg) == simulate(cfg));

  std::vector<SimConfig> cs{cfg, small_config(PolicyKind::lru)};
  const auto a = sweep(cs, 3);
  const auto b = sweep(cs, 3);
  REQUIRE(a.size() == 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].runs == b[i].runs);
    CHECK(a[i].seeds == std::vector<std::uint64_t>{11, 12, 13});
    CHECK(a[i].hit_half_width.has_value());
  }
  SimConfig c12 = cfg;
  c12.snm.seed = 12;
  CHECK(a[0].runs[1] == simulate(c12));

  const auto one = sweep(cs, 1);
  CHECK_FALSE(one[0].hit_half_width.has_value());
  const std::vector<std::uint64_t> same{4, 4};
  const auto flat = sweep(cs, same);
  CHECK(*flat[0].hit_half_width == 0.0);
  CHECK(flat[0].hit_mean == flat[0].runs[0].hit_probability());

  std::ostringstream csv;
  write_metrics_csv(csv, a);
  const std::string text = csv.str();
  std::string header;
  std::istringstream in(text);
  std::getline(in, header);
  CHECK(header == "policy,T,lambda,L,gamma_C,beta1,beta2,xi,seed,hit_prob,tx_per_req,bandwidth_overhead");
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);
  std::ostringstream js;
  write_sweep_json(js, a);
  CHECK(nlohmann::json::parse(js.str()).is_array());
}

TEST_CASE("configuration checks") {
  SimConfig cfg = small_config(PolicyKind::lru);
  cfg.t_start = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.t_start = 2.0;
  cfg.t_end = 2.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.t_end = 6.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.t_end = 4.0;
  CHECK_NOTHROW(cfg.validate());
  cfg.xi = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.xi = 1.0;
  cfg.policy = PolicyKind::gated_lru;
  cfg.scores.beta2 = 0.2;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  CHECK(parse_policy("lru_prefetch") == PolicyKind::lru_prefetch);
  CHECK_THROWS_AS(parse_policy("fifo"), ValidationError);

  // A trace that does not reach the window end.
  SimConfig ok = small_config(PolicyKind::lru);
  const auto cat = generate_catalog(ok.snm);
  auto tr = generate_requests(cat, ok.snm, ok.topology);
  tr.horizon = 3.0;
  CHECK_THROWS_AS(run(ok, cat, tr), ValidationError);
}
