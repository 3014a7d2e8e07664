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

#include "shotcache/estimator.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/tools/toms748_solve.hpp>

#include "shotcache/errors.hpp"
#include "shotcache/kernels.hpp"
#include "shotcache/special.hpp"

namespace shotcache {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMaxSteps = 1e7;

double log_sum_exp(std::span<const double> xs) {
  double peak = -kInf;
  for (double x : xs) peak = std::max(peak, x);
  if (!std::isfinite(peak)) return peak;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - peak);
  return peak + std::log(acc);
}

// E[V^(n+1)] / E[V^n] for the Pareto part; +inf once the numerator diverges.
double pareto_moment_ratio(const ParetoPrior& b, unsigned n) {
  if (b.alpha == 0.0) return b.mu_bar;
  const double p = 1.0 / b.alpha;
  if (n + 1.0 >= p) return kInf;
  return b.support_min() * (p - n) / (p - n - 1.0);
}

double moment_ratio_at_zero(const PopularityPrior& prior, unsigned n) {
  const double r = pareto_moment_ratio(prior.base(), n);
  return std::isinf(r) ? r : r * prior.factor_moment_ratio(n);
}

}  // namespace

ParetoPrior::ParetoPrior(double mu_bar_, double alpha_) : mu_bar(mu_bar_), alpha(alpha_) {
  require(std::isfinite(mu_bar) && mu_bar > 0.0, "prior: mu_bar must be positive");
  require(alpha >= 0.0 && alpha < 1.0, "prior: alpha must lie in [0, 1)");
}

double ParetoPrior::density(double x) const {
  const double xm = support_min();
  if (alpha == 0.0 || x < xm) return 0.0;
  const double shape = 1.0 / alpha;
  return shape * std::pow(xm, shape) / std::pow(x, shape + 1.0);
}

PopularityPrior::PopularityPrior(ParetoPrior base) : base_(base), factors_{1.0}, weights_{1.0} {}

PopularityPrior::PopularityPrior(ParetoPrior base, std::vector<double> factors,
                                 std::vector<double> weights)
    : base_(base), factors_(std::move(factors)), weights_(std::move(weights)) {
  require(!factors_.empty() && factors_.size() == weights_.size(),
          "prior: factors and weights must be non-empty and of equal length");
  double total = 0.0;
  for (std::size_t j = 0; j < factors_.size(); ++j) {
    require(factors_[j] > 0.0 && std::isfinite(factors_[j]), "prior: factors must be positive");
    require(weights_[j] > 0.0, "prior: weights must be positive");
    total += weights_[j];
  }
  for (double& w : weights_) w /= total;
  factor_mean_ = 0.0;
  for (std::size_t j = 0; j < factors_.size(); ++j) factor_mean_ += weights_[j] * factors_[j];
}

double PopularityPrior::factor_moment_ratio(unsigned n) const {
  if (is_plain()) return 1.0;
  std::vector<double> num(factors_.size());
  std::vector<double> den(factors_.size());
  for (std::size_t j = 0; j < factors_.size(); ++j) {
    const double lk = std::log(factors_[j]);
    den[j] = std::log(weights_[j]) + n * lk;
    num[j] = den[j] + lk;
  }
  return std::exp(log_sum_exp(num) - log_sum_exp(den));
}

double likelihood(unsigned count, double rate_age) {
  require(rate_age >= 0.0, "likelihood: rate * age must be nonnegative");
  return std::exp(poisson_log_pmf(count, rate_age));
}

PosteriorPair posterior_pair(unsigned count, double age, const PopularityPrior& prior,
                             const Numerics& num) {
  require(age >= 0.0, "posterior: age must be nonnegative");
  const ParetoPrior& b = prior.base();
  if (b.alpha == 0.0) {
    require(prior.is_plain(), "posterior: alpha = 0 is only supported for the plain prior");
    return {b.mu_bar, b.mu_bar};
  }
  if (age == 0.0) return {moment_ratio_at_zero(prior, count), moment_ratio_at_zero(prior, count + 1)};

  const double p = 1.0 / b.alpha;
  const double s = count - p;
  const auto factors = prior.factors();
  const auto weights = prior.weights();
  std::vector<double> t0(factors.size()), t1(factors.size()), t2(factors.size());
  for (std::size_t j = 0; j < factors.size(); ++j) {
    const double a = b.support_min() * factors[j] * age;
    const double la = std::log(a);
    // log Gamma(s + i, a) for i = 0, 1, 2; upward recurrence only where it adds
    // positive terms.
    const double g0 = log_upper_gamma(s, a, num.posterior_nodes);
    double g1;
    if (s >= 0.0) {
      g1 = g0 + std::log(s + std::exp(s * la - a - g0));
    } else {
      g1 = log_upper_gamma(s + 1.0, a, num.posterior_nodes);
    }
    double g2;
    if (s + 1.0 >= 0.0) {
      g2 = g1 + std::log(s + 1.0 + std::exp((s + 1.0) * la - a - g1));
    } else {
      g2 = log_upper_gamma(s + 2.0, a, num.posterior_nodes);
    }
    const double base = std::log(weights[j]) + p * la;
    t0[j] = base + g0;
    t1[j] = base + g1;
    t2[j] = base + g2;
  }
  const double l0 = log_sum_exp(t0);
  const double l1 = log_sum_exp(t1);
  const double l2 = log_sum_exp(t2);
  const PosteriorPair out{std::exp(l1 - l0) / age, std::exp(l2 - l1) / age};
  if (!std::isfinite(out.first) || !std::isfinite(out.second)) {
    throw NumericError("posterior: non-finite estimate");
  }
  return out;
}

double posterior_mean(const PosteriorQuery& q, const PopularityPrior& prior,
                      const Numerics& num) {
  return posterior_pair(q.count, q.age, prior, num).first;
}

double posterior_mean(const PosteriorQuery& q, const ParetoPrior& prior) {
  return posterior_mean(q, PopularityPrior(prior));
}

double pass_probability(const PopularityPrior& prior, unsigned k, double age,
                        const Numerics& num) {
  if (k == 0) return 1.0;
  if (age <= 0.0) return 0.0;
  const ParetoPrior& b = prior.base();
  const auto factors = prior.factors();
  const auto weights = prior.weights();
  double acc = 0.0;
  for (std::size_t j = 0; j < factors.size(); ++j) {
    const double a = (b.alpha == 0.0 ? b.mu_bar : b.support_min()) * factors[j] * age;
    double v = poisson_upper_tail(k, a);
    if (b.alpha > 0.0) {
      const double p = 1.0 / b.alpha;
      v += std::exp(p * std::log(a) + log_upper_gamma(k - p, a, num.posterior_nodes) -
                    std::lgamma(static_cast<double>(k)));
    }
    acc += weights[j] * std::min(v, 1.0);
  }
  return acc;
}

double captured_mass(const PopularityPrior& prior, unsigned k, double age, const Numerics& num) {
  if (k == 0) return 1.0;
  if (age <= 0.0) return 0.0;
  const ParetoPrior& b = prior.base();
  const auto factors = prior.factors();
  const auto weights = prior.weights();
  double acc = 0.0;
  for (std::size_t j = 0; j < factors.size(); ++j) {
    const double a = (b.alpha == 0.0 ? b.mu_bar : b.support_min()) * factors[j] * age;
    double v = poisson_upper_tail(k, a);
    if (b.alpha > 0.0) {
      const double p = 1.0 / b.alpha;
      v += std::exp((p - 1.0) * std::log(a) + log_upper_gamma(k - p + 1.0, a, num.posterior_nodes) -
                    std::lgamma(static_cast<double>(k)));
    }
    acc += weights[j] * factors[j] * std::min(v, 1.0);
  }
  return acc / prior.factor_mean();
}

PosteriorLattice::PosteriorLattice(PopularityPrior prior, double shot_duration,
                                   const Numerics& num)
    : prior_(std::move(prior)), num_(num), rows_(num.tau_grid) {
  require(shot_duration > 0.0 && std::isfinite(shot_duration),
          "lattice: shot duration must be positive");
  require(num.tau_grid >= 2, "lattice: need at least two grid ages");
  ages_.resize(num.tau_grid);
  for (int i = 0; i < num.tau_grid; ++i) {
    ages_[i] = shot_duration * i / (num.tau_grid - 1);
  }
  ages_.back() = shot_duration;
}

double PosteriorLattice::at(unsigned k, std::size_t i) const {
  Row& row = rows_[i];
  std::lock_guard lock(row.mu);
  const auto [it, fresh] = row.values.try_emplace(k, 0.0);
  if (fresh) it->second = posterior_pair(k, ages_[i], prior_, num_).first;
  return it->second;
}

EstimateDistribution::EstimateDistribution(PopularityPrior prior, double shot_duration,
                                           Numerics num)
    : shot_duration_(shot_duration),
      lattice_(std::make_shared<PosteriorLattice>(std::move(prior), shot_duration, num)) {}

double EstimateDistribution::infimum() const {
  return lattice_->at(0, lattice_->size() - 1);
}

std::vector<Breakpoint> EstimateDistribution::threshold_steps(double theta) const {
  require(theta > 0.0, "threshold: theta must be positive");
  if (theta * shot_duration_ + prior().base().tail_index() > kMaxSteps) {
    throw NumericError("threshold: theta * T too large to tabulate");
  }
  const auto grid_k = kernels::omp::grid_thresholds(*lattice_, theta);
  return kernels::omp::refine_breakpoints(*lattice_, theta, grid_k);
}

double EstimateDistribution::tail(double theta) const {
  require(theta > 0.0, "estimate_tail: theta must be positive");
  if (theta <= infimum()) return 1.0;
  const auto steps = threshold_steps(theta);
  return kernels::omp::step_integral(prior(), shot_duration_, steps, kernels::Weighting::count,
                                     numerics());
}

double EstimateDistribution::quantile(double gamma) const {
  require(gamma > 0.0 && gamma < 1.0, "theta_quantile: gamma must lie in (0, 1)");
  require(prior().base().alpha > 0.0, "theta_quantile: degenerate prior (alpha = 0)");
  const double lo = infimum();
  // tail(lo) == 1 is already within tolerance
  if (1.0 - gamma < 1e-6) return lo;
  double hi = std::max(prior().mean(), lo) * 2.0;
  double f_hi = tail(hi) - gamma;
  for (int i = 0; f_hi > 0.0; ++i) {
    if (i > 200) throw NumericError("theta_quantile: cannot bracket the quantile");
    hi *= 2.0;
    f_hi = tail(hi) - gamma;
  }
  const double f_lo = 1.0 - gamma;
  // Stop as soon as the storage fraction is within 1e-6.
  const auto f = [&](double theta) {
    const double d = tail(theta) - gamma;
    return std::abs(d) < 1e-6 ? 0.0 : d;
  };
  const auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-10 * std::abs(b); };
  boost::uintmax_t max_iter = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, f_lo, f_hi, tol, max_iter);
  if (max_iter >= 200) throw NumericError("theta_quantile: no convergence");
  return 0.5 * (a + b);
}

double estimate_tail(double theta, const EstimateDistribution& dist) { return dist.tail(theta); }

double theta_quantile(double gamma_c, const EstimateDistribution& dist) {
  return dist.quantile(gamma_c);
}

}  // namespace shotcache
