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

#include <cmath>
#include <cstddef>
#include <deque>
#include <unordered_map>
#include <limits>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace shotcache {

/// Pareto popularity prior: mu = mu_bar (1 - alpha) z^-alpha with z ~ U(0, 1].
/// Tail index 1/alpha, support [mu_bar (1 - alpha), inf), mean mu_bar.
struct ParetoPrior {
  double mu_bar = 1.0;
  double alpha = 0.8;

  ParetoPrior() = default;
  ParetoPrior(double mu_bar, double alpha);

  double support_min() const { return mu_bar * (1.0 - alpha); }
  double volume(double z) const { return support_min() * std::pow(z, -alpha); }
  double density(double x) const;
  /// 1/alpha; +inf for the degenerate alpha == 0 prior.
  double tail_index() const {
    return alpha > 0.0 ? 1.0 / alpha : std::numeric_limits<double>::infinity();
  }

  friend bool operator==(const ParetoPrior&, const ParetoPrior&) = default;
};

/// Popularity law mu = kappa * V, V ~ ParetoPrior, kappa an independent discrete
/// location factor given by (factor, weight) atoms. A single atom kappa = 1 is
/// the plain prior; clusters use the smoothed kernel sampled at feature nodes.
class PopularityPrior {
 public:
  PopularityPrior() : PopularityPrior(ParetoPrior{}) {}
  explicit PopularityPrior(ParetoPrior base);
  PopularityPrior(ParetoPrior base, std::vector<double> factors, std::vector<double> weights);

  const ParetoPrior& base() const { return base_; }
  std::span<const double> factors() const { return factors_; }
  std::span<const double> weights() const { return weights_; }
  bool is_plain() const { return factors_.size() == 1 && factors_[0] == 1.0; }

  /// E[mu].
  double mean() const { return base_.mu_bar * factor_mean_; }
  double factor_mean() const { return factor_mean_; }
  /// E[kappa^(n+1)] / E[kappa^n].
  double factor_moment_ratio(unsigned n) const;

 private:
  ParetoPrior base_;
  std::vector<double> factors_;
  std::vector<double> weights_;
  double factor_mean_ = 1.0;
};

/// Quadrature resolutions shared by the estimator, policy and analytics code.
struct Numerics {
  int posterior_nodes = 64;  // per side of the integrand mode
  int tau_grid = 1024;       // uniform threshold grid on [0, T]
  int panel_nodes = 16;      // Gauss nodes per age panel
  int feature_nodes = 16;    // Gauss nodes per feature-space panel (clusters)

  /// Every resolution doubled.
  Numerics refined() const {
    return {2 * posterior_nodes, 2 * tau_grid, 2 * panel_nodes, 2 * feature_nodes};
  }
};

struct PosteriorQuery {
  unsigned count = 0;
  double age = 0.0;
};

/// Poisson likelihood (mu tau)^N e^(-mu tau) / N!, evaluated in log space.
double likelihood(unsigned count, double rate_age);

/// E[mu | N, tau]. At tau == 0 this is the prior moment ratio, which is +inf
/// ("unbounded estimate") once alpha (N + 1) >= 1.
double posterior_mean(const PosteriorQuery& q, const ParetoPrior& prior);
double posterior_mean(const PosteriorQuery& q, const PopularityPrior& prior,
                      const Numerics& num = {});

inline bool is_unbounded(double estimate) { return std::isinf(estimate); }

/// Posterior means at counts N and N + 1 for the same age. Their product is
/// E[mu^2 | N, tau], so d/dtau E[mu | N, tau] = -first * (second - first).
struct PosteriorPair {
  double first = 0.0;
  double second = 0.0;
};
PosteriorPair posterior_pair(unsigned count, double age, const PopularityPrior& prior,
                             const Numerics& num = {});

/// P(N >= k | tau) with mu drawn from the prior.
double pass_probability(const PopularityPrior& prior, unsigned k, double age,
                        const Numerics& num = {});

/// E[mu 1{N >= k} | tau] / E[mu].
double captured_mass(const PopularityPrior& prior, unsigned k, double age,
                     const Numerics& num = {});

/// One step of an age-dependent integer threshold: value k for ages in
/// [tau, next breakpoint).
struct Breakpoint {
  double tau = 0.0;
  unsigned k = 0;
  friend bool operator==(const Breakpoint&, const Breakpoint&) = default;
};

/// Memo of posterior means on the (count, grid age) lattice, filled on
/// demand. Each grid age has its own lock so concurrent readers of different
/// ages never contend.
class PosteriorLattice {
 public:
  PosteriorLattice(PopularityPrior prior, double shot_duration, const Numerics& num);

  std::size_t size() const { return ages_.size(); }
  double age(std::size_t i) const { return ages_[i]; }
  double at(unsigned k, std::size_t i) const;
  const PopularityPrior& prior() const { return prior_; }
  const Numerics& numerics() const { return num_; }

 private:
  struct Row {
    std::mutex mu;
    std::unordered_map<unsigned, double> values;
  };
  PopularityPrior prior_;
  Numerics num_;
  std::vector<double> ages_;
  mutable std::deque<Row> rows_;
};

/// Law of the estimate mu_hat = E[mu | N, tau] with tau ~ U[0, T],
/// N | mu, tau ~ Pois(mu tau), mu ~ prior.
class EstimateDistribution {
 public:
  EstimateDistribution(PopularityPrior prior, double shot_duration, Numerics num = {});

  const PopularityPrior& prior() const { return lattice_->prior(); }
  double shot_duration() const { return shot_duration_; }
  const Numerics& numerics() const { return lattice_->numerics(); }
  const PosteriorLattice& lattice() const { return *lattice_; }

  /// Smallest attainable estimate, E[mu | N = 0, tau = T].
  double infimum() const;

  /// Step function Ntilde_theta(tau) = min{k : E[mu | k, tau] >= theta}.
  /// Throws NumericError when the table would need more than ~10^7 steps.
  std::vector<Breakpoint> threshold_steps(double theta) const;

  /// P(mu_hat >= theta).
  double tail(double theta) const;

  /// theta with tail(theta) == gamma.
  double quantile(double gamma) const;

 private:
  double shot_duration_;
  std::shared_ptr<PosteriorLattice> lattice_;
};

double estimate_tail(double theta, const EstimateDistribution& dist);
double theta_quantile(double gamma_c, const EstimateDistribution& dist);

}  // namespace shotcache
