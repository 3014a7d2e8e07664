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

// Age-based threshold tables, cache decisions and scores.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shotcache/estimator.hpp"
#include "shotcache/traffic.hpp"

namespace shotcache {

/// Cluster covering [0, omega] of the location torus.
struct ClusterSpec {
  double omega = 1.0;
  KernelSpec kernel;

  friend bool operator==(const ClusterSpec&, const ClusterSpec&) = default;
};

/// Prior of mu^S = mu * K_omega(X) with X uniform on the torus, as a mixture
/// over feature quadrature atoms. omega = 1 collapses to the plain prior.
PopularityPrior cluster_prior(const ParetoPrior& prior, const Kernel& kernel, double omega,
                              const Numerics& num = {});

/// Step function Ntilde(tau; gamma) on [0, T]: value breakpoints[i].k on
/// [breakpoints[i].tau, breakpoints[i + 1].tau).
struct ThresholdTable {
  double gamma = 0.1;
  double theta = 0.0;
  double shot_duration = 1.0;
  ParetoPrior prior;
  std::optional<ClusterSpec> cluster;
  std::vector<Breakpoint> breakpoints;

  unsigned threshold(double age) const;
  bool passes(unsigned count, double age) const { return count >= threshold(age); }

  /// Estimation prior the table was built for (mixture for clusters).
  std::shared_ptr<const PopularityPrior> estimator;
  const PopularityPrior& estimation_prior() const { return *estimator; }

  friend bool operator==(const ThresholdTable& a, const ThresholdTable& b) {
    return a.gamma == b.gamma && a.theta == b.theta && a.shot_duration == b.shot_duration &&
           a.prior == b.prior && a.cluster == b.cluster && a.breakpoints == b.breakpoints;
  }
};

ThresholdTable build_threshold_table(double gamma, const ParetoPrior& prior, double shot_duration,
                                     const Numerics& num = {});
/// Reuses the posterior lattice of `dist` (several budgets, same prior and T).
ThresholdTable build_threshold_table(double gamma, const EstimateDistribution& dist);
ThresholdTable build_cluster_threshold_table(double gamma, double omega, const KernelSpec& kernel,
                                             const ParetoPrior& prior, double shot_duration,
                                             const Numerics& num = {});

/// {gamma, theta, T, prior:{mu_bar, alpha}, breakpoints:[[tau, k], ...]}
/// plus "cluster":{omega, kernel} for cluster tables.
void write_table_json(std::ostream& out, const ThresholdTable& table);
ThresholdTable read_table_json(std::istream& in);

// ---------------------------------------------------------------------------

struct ContentState {
  std::uint32_t content_id = 0;
  unsigned count = 0;
  double age = 0.0;
  const ThresholdTable* table = nullptr;
};

struct CachingDecision {
  std::uint32_t content_id = 0;
  bool cached = false;
  double estimate = 0.0;  // posterior mean; NaN for contents below threshold

  friend bool operator==(const CachingDecision&, const CachingDecision&) = default;
};

/// Threshold test for every content, then, if more than `capacity` pass, the
/// ones with the smallest posterior mean are dropped (larger id first on ties).
/// Output is in input order.
std::vector<CachingDecision> decide(std::span<const ContentState> contents, std::size_t capacity);

// ---------------------------------------------------------------------------

struct ScoreSpec {
  double beta1 = 0.5;
  double beta2 = 0.05;
  double gamma_c = 0.1;

  /// 1 >= beta1 > gamma_c > beta2 >= 0.
  void validate() const;
  friend bool operator==(const ScoreSpec&, const ScoreSpec&) = default;
};

/// Lazily built threshold tables keyed by budget beta, sharing one posterior
/// lattice. Safe for concurrent use; each table is built exactly once.
class ScoreBook {
 public:
  ScoreBook(const ParetoPrior& prior, double shot_duration, const Numerics& num = {});

  /// 1{N >= Ntilde(tau; beta)}. beta >= 1 always passes, beta <= 0 never does.
  int score(unsigned count, double age, double beta) const;
  const ThresholdTable& table(double beta) const;
  const EstimateDistribution& distribution() const { return dist_; }

 private:
  struct Entry {
    std::once_flag once;
    ThresholdTable table;
  };
  EstimateDistribution dist_;
  mutable std::mutex mu_;
  mutable std::map<double, std::unique_ptr<Entry>> tables_;
};

}  // namespace shotcache
