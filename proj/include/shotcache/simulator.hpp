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

#pragma once

// Event-driven simulation of L local LRU caches behind a global coordinator.

#include <cstdint>
#include <iosfwd>
#include <list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "shotcache/policy.hpp"
#include "shotcache/traffic.hpp"

namespace shotcache {

/// LRU list, head = most recently used.
class CacheState {
 public:
  explicit CacheState(std::size_t capacity);
  CacheState(CacheState&&) = default;
  CacheState& operator=(CacheState&&) = default;

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return order_.size(); }
  bool contains(std::uint32_t id) const { return where_.count(id) != 0; }
  /// Moves `id` to the head if present.
  bool touch(std::uint32_t id);
  /// Inserts at the head (or moves there); returns the evicted tail, if any.
  std::optional<std::uint32_t> insert(std::uint32_t id);
  /// Head to tail.
  std::vector<std::uint32_t> contents() const { return {order_.begin(), order_.end()}; }
  /// List and index agree, no duplicates, size <= capacity.
  bool consistent() const;

 private:
  std::size_t capacity_;
  std::list<std::uint32_t> order_;
  std::unordered_map<std::uint32_t, std::list<std::uint32_t>::iterator> where_;
};

enum class PolicyKind { lru, gated_lru, lru_prefetch, oracle_abt };
std::string to_string(PolicyKind kind);
PolicyKind parse_policy(const std::string& name);

struct SimConfig {
  SnmConfig snm;
  Topology topology;
  PolicyKind policy = PolicyKind::lru;
  ScoreSpec scores;
  double capacity_fraction = 0.1;        // gamma_C
  double xi = 1.0;                       // chunking factor
  std::optional<double> prefetch_period; // default T
  std::optional<double> t_start;         // default T
  std::optional<double> t_end;           // default snm.horizon

  /// Per local cache: max(1, round(gamma_C lambda T)).
  std::size_t capacity() const;
  double period() const { return prefetch_period.value_or(snm.shot_duration); }
  double window_start() const { return t_start.value_or(snm.shot_duration); }
  double window_end() const { return t_end.value_or(snm.horizon); }
  void validate() const;
};

struct SimMetrics {
  std::uint64_t real_requests = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t backhaul_transmissions = 0;
  std::uint64_t prefetch_fetches = 0;
  double xi = 1.0;

  double hit_probability() const;
  double transmissions_per_request() const;
  double bandwidth_overhead() const { return transmissions_per_request() / xi; }

  friend bool operator==(const SimMetrics&, const SimMetrics&) = default;
};

/// Aggregate counts of a content at some time.
struct ContentCount {
  std::uint32_t content_id = 0;
  unsigned count = 0;
  double age = 0.0;
  friend bool operator==(const ContentCount&, const ContentCount&) = default;
};

/// Incremental global request counter. Feed events in time order.
class Coordinator {
 public:
  explicit Coordinator(std::span<const Shot> catalog);

  void observe(const RequestEvent& e);
  unsigned count(std::uint32_t id) const { return counts_[id]; }
  double age(std::uint32_t id, double time) const { return time - catalog_[id].arrival_time; }
  std::uint64_t total() const { return total_; }

 private:
  std::span<const Shot> catalog_;
  std::vector<unsigned> counts_;
  std::uint64_t total_ = 0;
};

/// (N, tau) of every content alive at `time` (0 <= tau <= T), counting the
/// events with timestamp <= time, in id order.
std::vector<ContentCount> coordinator_counts(std::span<const Shot> catalog, const RequestTrace& trace,
                                             double time, double shot_duration);

/// Tables used by a run; built lazily and shareable between runs with the
/// same prior and T.
struct PolicyTables {
  explicit PolicyTables(const SnmConfig& snm);
  ParetoPrior prior;
  double shot_duration;
  ScoreBook book;
};

/// Runs one policy over a trace generated from (config.snm, config.topology).
SimMetrics run(const SimConfig& config, std::span<const Shot> catalog, const RequestTrace& trace,
               const PolicyTables* tables = nullptr);

/// Generates catalog and trace from config.snm and runs.
SimMetrics simulate(const SimConfig& config, const PolicyTables* tables = nullptr);

struct SweepPoint {
  SimConfig config;
  std::vector<std::uint64_t> seeds;
  std::vector<SimMetrics> runs;
  double hit_mean = 0.0;
  double tx_mean = 0.0;
  double overhead_mean = 0.0;
  // Normal-approximation 95% half-widths; empty for a single replication.
  std::optional<double> hit_half_width;
  std::optional<double> tx_half_width;
};

/// Replication r uses seed config.snm.seed + r. Runs are spread over threads;
/// results do not depend on the thread count.
std::vector<SweepPoint> sweep(std::span<const SimConfig> configs, unsigned replications);
/// Explicit seeds for every config.
std::vector<SweepPoint> sweep(std::span<const SimConfig> configs, std::span<const std::uint64_t> seeds);

/// One row per run: policy,T,lambda,L,gamma_C,beta1,beta2,xi,seed,hit_prob,tx_per_req,bandwidth_overhead
void write_metrics_csv(std::ostream& out, std::span<const SweepPoint> points);
void write_sweep_json(std::ostream& out, std::span<const SweepPoint> points);

/// T values of the hit-probability figure.
std::vector<double> fig6_shot_durations();

}  // namespace shotcache
