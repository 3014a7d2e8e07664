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
#include <atomic>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "shotcache/errors.hpp"
#include "shotcache/policy.hpp"
#include "shotcache/quadrature.hpp"

using namespace shotcache;

namespace {

// (1/T) int_0^T P(N >= Ntilde(tau) | tau) dtau, panel by panel between breakpoints.
double storage_fraction(const ThresholdTable& t) {
  const PopularityPrior& pr = t.estimation_prior();
  double acc = 0.0;
  for (std::size_t i = 0; i < t.breakpoints.size(); ++i) {
    const double a = t.breakpoints[i].tau;
    const double b = i + 1 < t.breakpoints.size() ? t.breakpoints[i + 1].tau : t.shot_duration;
    const unsigned k = t.breakpoints[i].k;
    if (k == 0) {
      acc += b - a;
      continue;
    }
    // a^(1/alpha)-like behaviour near 0 on the first step: split geometrically.
    std::vector<double> cuts{b};
    double c = b;
    for (int l = 0; l < 30 && a == 0.0; ++l) cuts.push_back(c *= 0.5);
    cuts.push_back(a);
    std::sort(cuts.begin(), cuts.end());
    acc += integrate_panels([&](double tau) { return pass_probability(pr, k, tau); }, cuts, 24);
  }
  return acc / t.shot_duration;
}

std::uint64_t poisson_draw(double mean, std::mt19937_64& rng) {
  return std::poisson_distribution<std::uint64_t>(mean)(rng);
}

// Fraction of (mu, tau, N) draws passing the table; mu = kappa(X) * V.
template <class Factor>
double mc_pass_fraction(const ThresholdTable& t, int n, std::uint64_t seed, Factor kappa) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  long pass = 0;
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - u(rng);
    const double mu = kappa(u(rng)) * t.prior.volume(z);
    const double tau = t.shot_duration * u(rng);
    const unsigned k = t.threshold(tau);
    const double m = mu * tau;
    // Beyond 1e6 expected requests every threshold in these tables is passed.
    if (m > 1e6) {
      REQUIRE(k < 1e5);
      ++pass;
      continue;
    }
    if (poisson_draw(m, rng) >= k) ++pass;
  }
  return static_cast<double>(pass) / n;
}

void check_table_invariants(const ThresholdTable& t) {
  REQUIRE_FALSE(t.breakpoints.empty());
  CHECK(t.breakpoints.front().tau == 0.0);
  for (std::size_t i = 1; i < t.breakpoints.size(); ++i) {
    REQUIRE(t.breakpoints[i].tau > t.breakpoints[i - 1].tau);
    REQUIRE(t.breakpoints[i].k > t.breakpoints[i - 1].k);
  }
  CHECK(t.breakpoints.back().tau <= t.shot_duration);
  const PopularityPrior& pr = t.estimation_prior();
  for (std::size_t i = 0; i < t.breakpoints.size(); ++i) {
    const double a = t.breakpoints[i].tau;
    const double b = i + 1 < t.breakpoints.size() ? t.breakpoints[i + 1].tau : t.shot_duration;
    for (double tau : {a + 1e-3 * (b - a), 0.5 * (a + b), b - 1e-3 * (b - a)}) {
      const unsigned k = t.threshold(tau);
      CHECK(k == t.breakpoints[i].k);
      CHECK(posterior_mean({k, tau}, pr) >= t.theta * (1 - 1e-9));
      if (k > 0) CHECK(posterior_mean({k - 1, tau}, pr) < t.theta * (1 + 1e-9));
    }
  }
}

}  // namespace

TEST_CASE("ABT table for the reference prior") {
  const ParetoPrior prior(20.0, 0.8);
  const auto t = build_threshold_table(0.1, prior, 1.0);
  check_table_invariants(t);
  CHECK(std::abs(storage_fraction(t) - 0.1) < 1e-3);

  const int n = 1000000;
  const double se = std::sqrt(0.1 * 0.9 / n);
  CHECK(std::abs(mc_pass_fraction(t, n, 77, [](double) { return 1.0; }) - 0.1) < 3.0 * se);

  // Higher than the straight line at small ages.
  CHECK(t.threshold(0.1) / 0.1 > t.threshold(0.9) / 0.9);
  CHECK(t.threshold(1.0) == t.breakpoints.back().k);
  CHECK(t.threshold(0.0) == t.breakpoints.front().k);
}

TEST_CASE("tables for budgets near one are empty") {
  const ParetoPrior prior(20.0, 0.8);
  const auto t = build_threshold_table(1.0 - 1e-9, prior, 1.0);
  REQUIRE(t.breakpoints.size() == 1);
  CHECK(t.breakpoints[0].k == 0);
  for (double tau : {0.0, 0.3, 1.0}) CHECK(t.passes(0, tau));

  CHECK_THROWS_AS(build_threshold_table(0.0, prior, 1.0), ValidationError);
  CHECK_THROWS_AS(build_threshold_table(1.0, prior, 1.0), ValidationError);
}

TEST_CASE("table json round-trip") {
  const ParetoPrior prior(5.0, 0.6);
  const auto t = build_threshold_table(0.2, prior, 2.0);
  std::ostringstream out;
  write_table_json(out, t);
  std::istringstream in(out.str());
  const auto back = read_table_json(in);
  CHECK(back == t);
  CHECK(back.estimation_prior().is_plain());

  const auto c = build_cluster_threshold_table(0.1, 0.3, {"quartic", {}}, prior, 2.0);
  std::ostringstream cout_;
  write_table_json(cout_, c);
  std::istringstream cin_(cout_.str());
  const auto cb = read_table_json(cin_);
  CHECK(cb == c);
  for (unsigned k : {0u, 3u, 17u}) {
    CHECK(posterior_mean({k, 0.7}, cb.estimation_prior()) == posterior_mean({k, 0.7}, c.estimation_prior()));
  }

  std::istringstream bad(R"({"gamma":0.1,"theta":1,"T":1,"prior":{"mu_bar":1,"alpha":0.5},"breakpoints":[[0.2,1]]})");
  CHECK_THROWS_AS(read_table_json(bad), ValidationError);
}

TEST_CASE("decide") {
  const ParetoPrior prior(20.0, 0.8);
  const auto t = build_threshold_table(0.3, prior, 1.0);
  CHECK(decide({}, 3).empty());

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t m = 1 + rng() % 15;
    std::vector<ContentState> cs(m);
    for (std::size_t i = 0; i < m; ++i) {
      cs[i].content_id = static_cast<std::uint32_t>(rng() % 20);  // duplicates allowed
      cs[i].age = u(rng);
      cs[i].count = static_cast<unsigned>(rng() % 30);
      cs[i].table = &t;
      if (rep % 7 == 0 && i > 0) cs[i] = cs[i - 1];  // exact ties
    }
    const std::size_t cap = rng() % (m + 2);
    const auto d = decide(cs, cap);
    REQUIRE(d.size() == m);

    std::vector<std::size_t> passing;
    std::size_t kept = 0;
    double kept_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      REQUIRE(d[i].content_id == cs[i].content_id);
      const bool raw = cs[i].count >= t.threshold(cs[i].age);
      if (raw) passing.push_back(i);
      if (!raw) REQUIRE_FALSE(d[i].cached);
      if (d[i].cached) {
        ++kept;
        kept_sum += posterior_mean({cs[i].count, cs[i].age}, prior);
      }
    }
    REQUIRE(kept == std::min(cap, passing.size()));
    if (cap >= passing.size()) continue;

    // Exhaustive oracle over cap-subsets of the passing set.
    double best = -1.0;
    const std::size_t p = passing.size();
    for (std::uint32_t mask = 0; mask < (1u << p); ++mask) {
      if (static_cast<std::size_t>(__builtin_popcount(mask)) != cap) continue;
      double s = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        if (mask >> j & 1u) s += posterior_mean({cs[passing[j]].count, cs[passing[j]].age}, prior);
      }
      best = std::max(best, s);
    }
    REQUIRE(kept_sum == doctest::Approx(best).epsilon(1e-12));
  }

  // Ties go against the larger id.
  std::vector<ContentState> tie{{9, 10, 0.5, &t}, {4, 10, 0.5, &t}, {6, 10, 0.5, &t}};
  REQUIRE(t.passes(10, 0.5));
  const auto d = decide(tie, 2);
  CHECK_FALSE(d[0].cached);
  CHECK(d[1].cached);
  CHECK(d[2].cached);
  CHECK(std::isnan(decide(std::vector<ContentState>{{1, 0, 1.0, &t}}, 1)[0].estimate));

  std::vector<ContentState> old{{1, 0, 1.5, &t}};
  CHECK_THROWS_AS(decide(old, 1), ValidationError);
}

TEST_CASE("scores") {
  ScoreSpec s;
  CHECK_NOTHROW(s.validate());
  s.beta2 = 0.1;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = ScoreSpec{1.0, 0.0, 0.1};
  CHECK_NOTHROW(s.validate());
  s = ScoreSpec{1.1, 0.0, 0.1};
  CHECK_THROWS_AS(s.validate(), ValidationError);

  const ParetoPrior prior(10.0, 0.8);
  const ScoreBook book(prior, 1.0);
  CHECK(book.score(0, 0.5, 1.0) == 1);
  CHECK(book.score(1000, 0.5, 0.0) == 0);

  // Nested thresholds.
  for (double tau = 0.0; tau <= 1.0; tau += 1.0 / 64) {
    for (unsigned n = 0; n < 80; ++n) {
      const int a = book.score(n, tau, 0.5), b = book.score(n, tau, 0.1), c = book.score(n, tau, 0.05);
      REQUIRE(a >= b);
      REQUIRE(b >= c);
    }
  }
  for (double beta : {0.05, 0.1, 0.5}) {
    if (book.table(beta).theta <= prior.mu_bar) CHECK(book.score(0, 0.0, beta) == 1);
  }
  CHECK(book.table(0.5).theta <= prior.mu_bar);

  // Storage fraction by Monte Carlo.
  const int n = 1000000;
  for (double beta : {0.05, 0.1, 0.5}) {
    const double se = std::sqrt(beta * (1 - beta) / n);
    const double f = mc_pass_fraction(book.table(beta), n, 100 + static_cast<int>(100 * beta),
                                      [](double) { return 1.0; });
    CHECK(std::abs(f - beta) < 3.0 * se);
  }
}

TEST_CASE("score book builds each table once under contention") {
  const ScoreBook book(ParetoPrior(20.0, 0.8), 1.0);
  std::vector<const ThresholdTable*> seen(8);
  std::vector<std::thread> pool;
  std::atomic<int> go{0};
  for (int i = 0; i < 8; ++i) {
    pool.emplace_back([&, i] {
      ++go;
      while (go.load() < 8) std::this_thread::yield();
      seen[i] = &book.table(0.25);
    });
  }
  for (auto& th : pool) th.join();
  for (auto* p : seen) CHECK(p == seen[0]);
  CHECK(storage_fraction(*seen[0]) == doctest::Approx(0.25).epsilon(4e-3));
}

TEST_CASE("cluster prior") {
  const ParetoPrior prior(20.0, 0.8);
  const Kernel q = make_kernel({"quartic", {}});
  const auto whole = cluster_prior(prior, q, 1.0);
  CHECK(whole.is_plain());

  for (double omega : {0.05, 0.3}) {
    const auto mix = cluster_prior(prior, q, omega);
    // E[K_omega(X)] = omega
    CHECK(mix.factor_mean() == doctest::Approx(omega).epsilon(1e-6));
    CHECK(mix.mean() == doctest::Approx(prior.mu_bar * omega).epsilon(1e-6));
    double e2 = 0.0;
    const int m = 20000;
    for (int i = 0; i < m; ++i) e2 += std::pow(smoothed_kernel(q, omega, (i + 0.5) / m), 2);
    e2 /= m;
    double mix2 = 0.0;
    for (std::size_t i = 0; i < mix.factors().size(); ++i) mix2 += mix.weights()[i] * mix.factors()[i] * mix.factors()[i];
    CHECK(mix2 == doctest::Approx(e2).epsilon(1e-5));
  }
  CHECK_THROWS_AS(cluster_prior(prior, q, 0.0), ValidationError);
}

TEST_CASE("cluster tables") {
  const KernelSpec quartic{"quartic", {}};
  {
    const ParetoPrior prior(20.0, 0.8);
    const auto g = build_threshold_table(0.1, prior, 1.0);
    const auto c = build_cluster_threshold_table(0.1, 1.0, quartic, prior, 1.0);
    CHECK(c.cluster.has_value());
    CHECK(c.theta == doctest::Approx(g.theta).epsilon(1e-9));
    CHECK(c.breakpoints.size() == g.breakpoints.size());
    for (double tau = 0.0; tau <= 1.0; tau += 1.0 / 512) CHECK(c.threshold(tau) == g.threshold(tau));

    const auto full = build_cluster_threshold_table(1.0 - 1e-9, 0.2, quartic, prior, 1.0);
    REQUIRE(full.breakpoints.size() == 1);
    CHECK(full.breakpoints[0].k == 0);
  }

  const ParetoPrior prior(1.0, 0.8);
  const double omega = 0.1;
  const auto t = build_cluster_threshold_table(0.1, omega, quartic, prior, 10.0);
  check_table_invariants(t);
  CHECK(std::abs(storage_fraction(t) - 0.1) < 1e-3);

  const Kernel q = make_kernel(quartic);
  const int n = 1000000;
  const double se = std::sqrt(0.1 * 0.9 / n);
  const double f = mc_pass_fraction(t, n, 991, [&](double x) { return smoothed_kernel(q, omega, x); });
  CHECK(std::abs(f - 0.1) < 3.0 * se);
}
