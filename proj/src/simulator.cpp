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

#include "shotcache/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <ostream>
#include <queue>

#include "json.hpp"

#include "shotcache/errors.hpp"

namespace shotcache {
namespace {

constexpr double kZ95 = 1.959963984540054;

// Contents passing the gamma_C table, kept up to date between events, and the
// capacity rule of decide() evaluated for one requested content.
class OracleState {
 public:
  OracleState(const ThresholdTable& table, const PosteriorLattice& lattice,
              std::span<const Shot> catalog, const Coordinator& coord, std::size_t capacity)
      : table_(table), lattice_(lattice), catalog_(catalog), coord_(coord), capacity_(capacity),
        pos_(catalog.size(), -1) {}

  // Births with a zero threshold and expiries up to `now`.
  void advance(double now) {
    const double T = table_.shot_duration;
    while (born_ < catalog_.size() && catalog_[born_].arrival_time <= now) {
      const auto id = static_cast<std::uint32_t>(born_++);
      if (now - catalog_[id].arrival_time <= T) refresh(id, now);
    }
    while (!flips_.empty() && flips_.top().time <= now) {
      const Flip f = flips_.top();
      flips_.pop();
      if (pos_[f.id] >= 0 && coord_.count(f.id) == f.count) refresh(f.id, now);
    }
  }

  // Passing status of `id` after its count changed.
  void refresh(std::uint32_t id, double now) {
    const double T = table_.shot_duration;
    const double tau = now - catalog_[id].arrival_time;
    const unsigned n = coord_.count(id);
    const bool pass = tau <= T && table_.passes(n, tau);
    if (!pass) {
      remove(id);
      return;
    }
    if (pos_[id] < 0) {
      pos_[id] = static_cast<std::int64_t>(passing_.size());
      passing_.push_back(id);
    }
    // Passing ends at the first step above n, or at death.
    double end = T;
    for (const auto& b : table_.breakpoints) {
      if (b.k > n) {
        end = std::max(b.tau, tau);
        break;
      }
    }
    // A content of age exactly T still counts as alive.
    const double at = catalog_[id].arrival_time + end;
    flips_.push({end >= T ? std::nextafter(at, INFINITY) : at, id, n});
  }

  bool served(std::uint32_t m, double now) const {
    if (pos_[m] < 0) return false;
    if (passing_.size() <= capacity_) return true;
    // m survives iff at least `excess` passing contents rank below it
    // (smaller estimate, or equal estimate and larger id).
    const std::size_t excess = passing_.size() - capacity_;
    const unsigned nm = coord_.count(m);
    const double tm = now - catalog_[m].arrival_time;
    const PopularityPrior& pr = table_.estimation_prior();
    std::size_t below = 0;
    std::vector<std::uint32_t> unsure;
    for (std::uint32_t j : passing_) {
      if (j == m) continue;
      const unsigned nj = coord_.count(j);
      const double tj = now - catalog_[j].arrival_time;
      if (nj == nm && tj == tm) {
        below += j > m;
      } else if (nj <= nm && tj >= tm) {
        ++below;  // estimate decreases in tau and increases in N
      } else if (!(nj >= nm && tj <= tm)) {
        unsure.push_back(j);
      }
      if (below >= excess) return true;
    }
    // Lattice brackets settle most comparisons; exact means only on overlap.
    const auto [lo_m, hi_m] = bracket(nm, tm);
    double em = -1.0;
    for (std::uint32_t j : unsure) {
      const unsigned nj = coord_.count(j);
      const double tj = now - catalog_[j].arrival_time;
      const auto [lo_j, hi_j] = bracket(nj, tj);
      if (hi_j < lo_m) {
        ++below;
      } else if (lo_j <= hi_m) {
        if (em < 0.0) em = posterior_mean({nm, tm}, pr);
        const double ej = posterior_mean({nj, tj}, pr);
        if (ej < em || (ej == em && j > m)) ++below;
      }
      if (below >= excess) return true;
    }
    return false;
  }

 private:
  struct Flip {
    double time;
    std::uint32_t id;
    unsigned count;
    bool operator>(const Flip& o) const { return time > o.time || (time == o.time && id > o.id); }
  };

  // Cheap bounds on E[mu | n, tau]. With the plain prior the posterior is a
  // Gamma(n - p, tau) law cut below at mu_min: the cut only raises the mean,
  // and for shape >= 1 (increasing failure rate) the mean residual life above
  // mu_min is at most the untruncated mean. Otherwise use the lattice.
  std::pair<double, double> bracket(unsigned n, double tau) const {
    const PopularityPrior& pr = table_.estimation_prior();
    if (pr.is_plain() && tau > 0.0) {
      const double shape = n - pr.base().tail_index();
      if (shape >= 1.0) {
        const double lo = std::max(pr.base().support_min(), shape / tau);
        const double hi = pr.base().support_min() + shape / tau;
        return {lo * (1.0 - 1e-12), hi * (1.0 + 1e-12)};
      }
    }
    return grid_bracket(n, tau);
  }

  // Estimate at (n, tau) lies between its values at the neighbouring grid ages.
  std::pair<double, double> grid_bracket(unsigned n, double tau) const {
    const std::size_t last = lattice_.size() - 1;
    const double x = tau / table_.shot_duration * static_cast<double>(last);
    std::size_t i = std::min(last - 1, static_cast<std::size_t>(std::max(0.0, x)));
    while (i > 0 && lattice_.age(i) > tau) --i;
    while (i + 1 < last && lattice_.age(i + 1) < tau) ++i;
    return {lattice_.at(n, i + 1), lattice_.at(n, i)};
  }

  void remove(std::uint32_t id) {
    const std::int64_t p = pos_[id];
    if (p < 0) return;
    const std::uint32_t last = passing_.back();
    passing_[p] = last;
    pos_[last] = p;
    passing_.pop_back();
    pos_[id] = -1;
  }

  const ThresholdTable& table_;
  const PosteriorLattice& lattice_;
  std::span<const Shot> catalog_;
  const Coordinator& coord_;
  std::size_t capacity_;
  std::vector<std::int64_t> pos_;
  std::vector<std::uint32_t> passing_;
  std::size_t born_ = 0;
  std::priority_queue<Flip, std::vector<Flip>, std::greater<>> flips_;
};

void finish(SweepPoint& p) {
  const double n = static_cast<double>(p.runs.size());
  double h = 0, h2 = 0, t = 0, t2 = 0, o = 0;
  for (const auto& m : p.runs) {
    h += m.hit_probability();
    h2 += m.hit_probability() * m.hit_probability();
    t += m.transmissions_per_request();
    t2 += m.transmissions_per_request() * m.transmissions_per_request();
    o += m.bandwidth_overhead();
  }
  p.hit_mean = h / n;
  p.tx_mean = t / n;
  p.overhead_mean = o / n;
  if (p.runs.size() > 1) {
    const auto half = [n](double s, double s2) {
      const double var = std::max(0.0, (s2 - s * s / n) / (n - 1.0));
      return kZ95 * std::sqrt(var / n);
    };
    p.hit_half_width = half(h, h2);
    p.tx_half_width = half(t, t2);
  }
}

}  // namespace

CacheState::CacheState(std::size_t capacity) : capacity_(capacity) {
  require(capacity >= 1, "cache: capacity must be >= 1");
  where_.reserve(capacity + 1);
}

bool CacheState::touch(std::uint32_t id) {
  const auto it = where_.find(id);
  if (it == where_.end()) return false;
  order_.splice(order_.begin(), order_, it->second);
  return true;
}

std::optional<std::uint32_t> CacheState::insert(std::uint32_t id) {
  if (touch(id)) return std::nullopt;
  order_.push_front(id);
  where_.emplace(id, order_.begin());
  if (order_.size() <= capacity_) return std::nullopt;
  const std::uint32_t victim = order_.back();
  where_.erase(victim);
  order_.pop_back();
  return victim;
}

bool CacheState::consistent() const {
  if (order_.size() != where_.size() || order_.size() > capacity_) return false;
  for (auto it = order_.begin(); it != order_.end(); ++it) {
    const auto w = where_.find(*it);
    if (w == where_.end() || w->second != it) return false;
  }
  return true;
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::lru: return "lru";
    case PolicyKind::gated_lru: return "gated_lru";
    case PolicyKind::lru_prefetch: return "lru_prefetch";
    case PolicyKind::oracle_abt: return "oracle_abt";
  }
  return "?";
}

PolicyKind parse_policy(const std::string& name) {
  for (auto k : {PolicyKind::lru, PolicyKind::gated_lru, PolicyKind::lru_prefetch, PolicyKind::oracle_abt}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("unknown policy: " + name);
}

std::size_t SimConfig::capacity() const {
  const double c = std::round(capacity_fraction * snm.lambda * snm.shot_duration);
  return static_cast<std::size_t>(std::max(1.0, c));
}

void SimConfig::validate() const {
  snm.validate();
  topology.validate();
  require(capacity_fraction > 0.0 && capacity_fraction < 1.0, "sim: gamma_C must lie in (0, 1)");
  require(xi >= 1.0, "sim: xi must be >= 1");
  require(period() > 0.0, "sim: prefetch_period must be positive");
  if (policy == PolicyKind::gated_lru || policy == PolicyKind::lru_prefetch) scores.validate();
  if (policy != PolicyKind::lru) require(snm.alpha > 0.0, "sim: score policies need alpha > 0");
  // Trace starts at -T; caches and counters warm up over [-T, T].
  require(window_start() >= snm.shot_duration, "sim: measurement must start after warm-up (t >= T)");
  require(window_end() > window_start(), "sim: empty measurement window");
  require(window_end() <= snm.horizon, "sim: measurement window exceeds the trace horizon");
}

double SimMetrics::hit_probability() const {
  return real_requests ? static_cast<double>(hits) / static_cast<double>(real_requests) : 0.0;
}

double SimMetrics::transmissions_per_request() const {
  return real_requests ? static_cast<double>(backhaul_transmissions) / static_cast<double>(real_requests)
                       : 0.0;
}

Coordinator::Coordinator(std::span<const Shot> catalog) : catalog_(catalog), counts_(catalog.size(), 0) {
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    require(catalog[i].id == i, "coordinator: catalog ids must be dense and in order");
  }
}

void Coordinator::observe(const RequestEvent& e) {
  require(e.content_id < counts_.size(), "coordinator: unknown content id");
  ++counts_[e.content_id];
  ++total_;
}

std::vector<ContentCount> coordinator_counts(std::span<const Shot> catalog, const RequestTrace& trace,
                                             double time, double shot_duration) {
  Coordinator c(catalog);
  for (const auto& e : trace.events) {
    if (e.time > time) break;
    c.observe(e);
  }
  std::vector<ContentCount> out;
  for (const Shot& s : catalog) {
    const double age = time - s.arrival_time;
    if (age >= 0.0 && age <= shot_duration) out.push_back({s.id, c.count(s.id), age});
  }
  return out;
}

PolicyTables::PolicyTables(const SnmConfig& snm)
    : prior(snm.prior()), shot_duration(snm.shot_duration), book(snm.prior(), snm.shot_duration) {}

SimMetrics run(const SimConfig& config, std::span<const Shot> catalog, const RequestTrace& trace,
               const PolicyTables* tables) {
  config.validate();
  require(trace.horizon >= config.window_end(), "sim: trace does not cover the measurement window");
  require(trace.start <= config.window_start() - 2.0 * config.snm.shot_duration,
          "sim: trace does not cover the warm-up");

  std::unique_ptr<PolicyTables> own;
  if (config.policy != PolicyKind::lru) {
    if (tables == nullptr) {
      own = std::make_unique<PolicyTables>(config.snm);
      tables = own.get();
    }
    require(tables->prior == config.snm.prior() && tables->shot_duration == config.snm.shot_duration,
            "sim: policy tables built for another prior");
  }

  const double T = config.snm.shot_duration;
  const double t0 = config.window_start(), t1 = config.window_end();
  const std::uint32_t L = config.topology.num_caches;
  const std::size_t C = config.capacity();
  const bool gated = config.policy == PolicyKind::gated_lru || config.policy == PolicyKind::lru_prefetch;
  const bool prefetch = config.policy == PolicyKind::lru_prefetch;

  Coordinator coord(catalog);
  std::vector<CacheState> caches;
  if (config.policy != PolicyKind::oracle_abt) {
    caches.reserve(L);
    for (std::uint32_t l = 0; l < L; ++l) caches.emplace_back(C);
  }
  std::optional<OracleState> oracle;
  if (config.policy == PolicyKind::oracle_abt) {
    oracle.emplace(tables->book.table(config.capacity_fraction), tables->book.distribution().lattice(),
                   catalog, coord, C);
  }

  SimMetrics m;
  m.xi = config.xi;
  const auto in_window = [&](double t) { return t >= t0 && t < t1; };
  const auto score = [&](std::uint32_t id, double t, double beta) {
    return tables->book.score(coord.count(id), t - catalog[id].arrival_time, beta) == 1;
  };

  // Prefetch cycles at k * period.
  const double period = config.period();
  double k = std::ceil(trace.start / period);
  std::size_t alive_lo = 0;

  const auto cycle = [&](double t) {
    while (alive_lo < catalog.size() && catalog[alive_lo].arrival_time < t - T) ++alive_lo;
    const bool counted = in_window(t);
    for (std::size_t id = alive_lo; id < catalog.size() && catalog[id].arrival_time <= t; ++id) {
      const auto cid = static_cast<std::uint32_t>(id);
      if (!score(cid, t, config.scores.beta2)) continue;
      for (auto& cache : caches) {
        if (cache.touch(cid)) continue;
        cache.insert(cid);
        if (counted) {
          ++m.backhaul_transmissions;
          ++m.prefetch_fetches;
        }
      }
    }
  };

  for (const RequestEvent& e : trace.events) {
    require(e.cache_id < L, "sim: event for an unknown cache");
    require(e.content_id < catalog.size(), "sim: event for an unknown content");
    if (prefetch) {
      for (double c = k * period; c <= e.time && c < t1; c = ++k * period) cycle(c);
    }
    if (e.time >= t1) break;
    const bool counted = in_window(e.time);
    bool hit;
    if (oracle) {
      oracle->advance(e.time);
      hit = oracle->served(e.content_id, e.time);
    } else {
      CacheState& cache = caches[e.cache_id];
      hit = cache.touch(e.content_id);
      if (!hit && (!gated || score(e.content_id, e.time, config.scores.beta1))) cache.insert(e.content_id);
    }
    coord.observe(e);
    if (oracle) oracle->refresh(e.content_id, e.time);
    if (counted) {
      ++m.real_requests;
      if (hit) {
        ++m.hits;
      } else {
        ++m.misses;
        ++m.backhaul_transmissions;
      }
    }
  }
  if (prefetch) {
    for (double c = k * period; c < t1; c = ++k * period) cycle(c);
  }
  return m;
}

SimMetrics simulate(const SimConfig& config, const PolicyTables* tables) {
  config.validate();
  const auto catalog = generate_catalog(config.snm, config.topology.correlated());
  const auto trace = generate_requests(catalog, config.snm, config.topology);
  return run(config, catalog, trace, tables);
}

namespace {

std::vector<SweepPoint> sweep_seeds(std::span<const SimConfig> configs,
                                    std::vector<std::vector<std::uint64_t>> seeds) {
  for (const auto& c : configs) c.validate();

  // One set of lazily built tables per (prior, T).
  std::vector<std::shared_ptr<PolicyTables>> tables(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (configs[i].policy == PolicyKind::lru) continue;
    for (std::size_t j = 0; j < i; ++j) {
      if (tables[j] && tables[j]->prior == configs[i].snm.prior() &&
          tables[j]->shot_duration == configs[i].snm.shot_duration) {
        tables[i] = tables[j];
        break;
      }
    }
    if (!tables[i]) tables[i] = std::make_shared<PolicyTables>(configs[i].snm);
  }

  std::vector<SweepPoint> out(configs.size());
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    out[i].config = configs[i];
    out[i].seeds = std::move(seeds[i]);
    out[i].runs.resize(out[i].seeds.size());
    for (std::size_t r = 0; r < out[i].seeds.size(); ++r) jobs.emplace_back(i, r);
  }
  std::exception_ptr err;
  const auto n = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    const auto [i, r] = jobs[j];
    try {
      SimConfig c = configs[i];
      c.snm.seed = out[i].seeds[r];
      out[i].runs[r] = simulate(c, tables[i].get());
    } catch (...) {
#pragma omp critical(shotcache_sweep_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  for (auto& p : out) finish(p);
  return out;
}

}  // namespace

std::vector<SweepPoint> sweep(std::span<const SimConfig> configs, unsigned replications) {
  require(replications >= 1, "sweep: need at least one replication");
  std::vector<std::vector<std::uint64_t>> seeds(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    for (unsigned r = 0; r < replications; ++r) seeds[i].push_back(configs[i].snm.seed + r);
  }
  return sweep_seeds(configs, std::move(seeds));
}

std::vector<SweepPoint> sweep(std::span<const SimConfig> configs, std::span<const std::uint64_t> seeds) {
  require(!seeds.empty(), "sweep: need at least one seed");
  return sweep_seeds(configs, std::vector<std::vector<std::uint64_t>>(
                                  configs.size(), std::vector<std::uint64_t>(seeds.begin(), seeds.end())));
}

void write_metrics_csv(std::ostream& out, std::span<const SweepPoint> points) {
  out << "policy,T,lambda,L,gamma_C,beta1,beta2,xi,seed,hit_prob,tx_per_req,bandwidth_overhead\n";
  for (const auto& p : points) {
    const SimConfig& c = p.config;
    for (std::size_t r = 0; r < p.runs.size(); ++r) {
      const SimMetrics& m = p.runs[r];
      out << std::setprecision(6) << to_string(c.policy) << ',' << c.snm.shot_duration << ','
          << c.snm.lambda << ',' << c.topology.num_caches << ',' << c.capacity_fraction << ','
          << c.scores.beta1 << ',' << c.scores.beta2 << ',' << c.xi << ',' << p.seeds[r] << ','
          << std::setprecision(17) << m.hit_probability() << ',' << m.transmissions_per_request() << ','
          << m.bandwidth_overhead() << '\n';
    }
  }
}

void write_sweep_json(std::ostream& out, std::span<const SweepPoint> points) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : points) {
    const SimConfig& c = p.config;
    nlohmann::json j;
    j["policy"] = to_string(c.policy);
    j["T"] = c.snm.shot_duration;
    j["lambda"] = c.snm.lambda;
    j["mu_bar"] = c.snm.mu_bar;
    j["alpha"] = c.snm.alpha;
    j["L"] = c.topology.num_caches;
    j["gamma_C"] = c.capacity_fraction;
    j["capacity"] = c.capacity();
    j["beta1"] = c.scores.beta1;
    j["beta2"] = c.scores.beta2;
    j["xi"] = c.xi;
    j["window"] = {c.window_start(), c.window_end()};
    j["replications"] = p.runs.size();
    j["hit_prob"] = p.hit_mean;
    j["tx_per_req"] = p.tx_mean;
    j["bandwidth_overhead"] = p.overhead_mean;
    j["hit_prob_ci95"] = p.hit_half_width ? nlohmann::json(*p.hit_half_width) : nlohmann::json("n/a");
    j["tx_per_req_ci95"] = p.tx_half_width ? nlohmann::json(*p.tx_half_width) : nlohmann::json("n/a");
    std::uint64_t req = 0, fetch = 0;
    for (const auto& m : p.runs) {
      req += m.real_requests;
      fetch += m.prefetch_fetches;
    }
    j["real_requests"] = req;
    j["prefetch_fetches"] = fetch;
    arr.push_back(std::move(j));
  }
  out << arr.dump(2) << '\n';
}

std::vector<double> fig6_shot_durations() { return {0.2, 0.5, 1, 2, 5, 10, 20, 50, 100}; }

}  // namespace shotcache
