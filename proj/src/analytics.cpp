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

#include "shotcache/analytics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "shotcache/errors.hpp"
#include "shotcache/kernels.hpp"
#include "shotcache/policy.hpp"
#include "shotcache/quadrature.hpp"

namespace shotcache {
namespace {

constexpr int kGradingLevels = 48;

void check_budget(double gamma_c) {
  require(gamma_c > 0.0 && gamma_c < 1.0, "hit: gamma_c must lie in (0, 1)");
}

void check_age_prior(const ParetoPrior& prior, double shot_duration) {
  require(prior.alpha > 0.0 && prior.alpha < 1.0, "hit: alpha must lie in (0, 1)");
  require(prior.mu_bar > 0.0, "hit: mu_bar must be positive");
  require(std::isfinite(shot_duration) && shot_duration > 0.0, "hit: T must be positive");
}

// int_0^hi f, with panels halving towards 0 (integrands behave like s^c there)
// and extra cuts at interior kinks.
template <class F>
double graded_integral(F&& f, double hi, std::vector<double> kinks, int nodes) {
  if (!(hi > 0.0)) return 0.0;
  std::vector<double> cuts{0.0, hi};
  double c = hi;
  for (int l = 0; l < kGradingLevels; ++l) cuts.push_back(c *= 0.5);
  for (double k : kinks) {
    if (k > 0.0 && k < hi) cuts.push_back(k);
  }
  std::sort(cuts.begin(), cuts.end());
  return integrate_panels(f, cuts, nodes);
}

// Known popularity mu = mu_min e^v, v ~ Exp(1/alpha). A content is stored at
// distance d iff mu g(d) >= theta, i.e. d <= g^-1(theta e^-v / mu_min).
struct KnownPopularity {
  const ParetoPrior& prior;
  const Kernel& kernel;
  int nodes;

  double p() const { return 1.0 / prior.alpha; }

  double reach(double theta, double v) const {
    return kernel.inverse(theta * std::exp(-v) / prior.support_min());
  }

  // ages where g^-1 is not smooth: t = g(0) and t = g(1/2)
  std::vector<double> kink_levels(double theta) const {
    std::vector<double> v;
    for (double g : {kernel.profile(0.0), kernel.profile(0.5)}) {
      if (g > 0.0) v.push_back(std::log(theta / (prior.support_min() * g)));
    }
    return v;
  }

  // P(mu g(d) >= theta), in s = e^(-p v).
  double storage(double theta) const {
    std::vector<double> kinks;
    for (double v : kink_levels(theta)) kinks.push_back(std::exp(-p() * v));
    return graded_integral(
        [&](double s) { return 2.0 * reach(theta, -std::log(s) / p()); }, 1.0, kinks, nodes);
  }

  // E[mu 1{mu g(d) >= theta}] / mu_bar, in u = e^(-(p - 1) v). The Jacobian
  // p / (p - 1) cancels mu_min / mu_bar exactly.
  double hit(double theta) const {
    const double q = p() - 1.0;
    std::vector<double> kinks;
    for (double v : kink_levels(theta)) kinks.push_back(std::exp(-q * v));
    return graded_integral(
        [&](double u) { return 2.0 * kernel.primitive(reach(theta, -std::log(u) / q)); }, 1.0,
        kinks, nodes);
  }
};

template <class Eval>
std::vector<double> eval_grid(std::span<const double> grid, Eval&& eval) {
  require(!grid.empty(), "curve: empty parameter grid");
  for (double x : grid) require(std::isfinite(x) && x > 0.0, "curve: grid values must be positive");
  std::vector<double> out(grid.size());
  std::exception_ptr err;
  const auto n = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = eval(grid[i]);
    } catch (...) {
#pragma omp critical(shotcache_curve_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return out;
}

CurveMeta meta_for(std::string mode, const ParetoPrior& prior, double gamma_c) {
  CurveMeta m;
  m.mode = std::move(mode);
  m.prior = prior;
  m.gamma_c = gamma_c;
  return m;
}

std::string mode_tag(const CurveMeta& m) {
  std::ostringstream s;
  s << m.mode;
  if (m.omega) s << "(omega=" << *m.omega << ')';
  if (m.xi) s << "(xi=" << *m.xi << ')';
  if (m.num_caches) s << "(L=" << *m.num_caches << ')';
  return s.str();
}

void write_rows(std::ostream& out, const CurveMeta& meta, std::span<const double> x,
                std::span<const double> y) {
  out << "abscissa,value,mode,gamma_c,alpha,mu_bar\n";
  std::ostringstream tail;
  tail << ',' << mode_tag(meta) << ',' << meta.gamma_c << ',' << meta.prior.alpha << ','
       << meta.prior.mu_bar << '\n';
  // shortest text that reads back to the same double
  const auto exact = [](double v) {
    char buf[32];
    return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
  };
  for (std::size_t i = 0; i < x.size(); ++i) out << exact(x[i]) << ',' << exact(y[i]) << tail.str();
}

}  // namespace

double asymptotic_hit(const ParetoPrior& prior, double shot_duration, double gamma_c,
                      const Numerics& num) {
  check_age_prior(prior, shot_duration);
  check_budget(gamma_c);
  const EstimateDistribution dist(PopularityPrior(prior), shot_duration, num);
  const auto steps = dist.threshold_steps(dist.quantile(gamma_c));
  return kernels::omp::step_integral(dist.prior(), shot_duration, steps, kernels::Weighting::mass, num);
}

double static_hit(const ParetoPrior& prior, double gamma_c) {
  require(gamma_c > 0.0 && gamma_c <= 1.0, "hit: gamma_c must lie in (0, 1]");
  return std::pow(gamma_c, 1.0 - prior.alpha);
}

double aggregation_gain(const ParetoPrior& prior, double shot_duration, double num_caches,
                        double gamma_c, const Numerics& num) {
  require(num_caches >= 1.0, "gain: need L >= 1");
  if (num_caches == 1.0) return 0.0;
  return asymptotic_hit(prior, shot_duration, gamma_c, num) -
         asymptotic_hit(prior, shot_duration / num_caches, gamma_c, num);
}

double local_known_threshold(const ParetoPrior& prior, const Kernel& kernel, double gamma_c,
                             const Numerics& num) {
  check_age_prior(prior, 1.0);
  check_budget(gamma_c);
  const KnownPopularity kp{prior, kernel, num.feature_nodes};
  // storage() decreases in theta; bracket in log theta.
  double lo = prior.mu_bar, hi = prior.mu_bar;
  for (int i = 0; kp.storage(hi) > gamma_c; ++i) {
    if (i > 200) throw NumericError("local threshold: cannot bracket");
    hi *= 2.0;
  }
  for (int i = 0; kp.storage(lo) < gamma_c; ++i) {
    if (i > 200) throw NumericError("local threshold: cannot bracket");
    lo *= 0.5;
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = std::sqrt(lo * hi);
    const double c = kp.storage(mid);
    if (std::abs(c - gamma_c) <= 1e-8 * gamma_c || hi - lo <= 1e-15 * hi) return mid;
    (c > gamma_c ? lo : hi) = mid;
  }
  throw NumericError("local threshold: no convergence");
}

double local_hit_known_popularity(const ParetoPrior& prior, const Kernel& kernel, double gamma_c,
                                  const Numerics& num) {
  const double theta = local_known_threshold(prior, kernel, gamma_c, num);
  return KnownPopularity{prior, kernel, num.feature_nodes}.hit(theta);
}

double clustered_hit(const ParetoPrior& prior, const KernelSpec& kernel, double omega,
                     double shot_duration, double gamma_c, const Numerics& num) {
  check_age_prior(prior, shot_duration);
  check_budget(gamma_c);
  const auto t = build_cluster_threshold_table(gamma_c, omega, kernel, prior, shot_duration, num);
  // Normalized by E[mu^S] = mu_bar omega.
  return kernels::omp::step_integral(t.estimation_prior(), shot_duration, t.breakpoints,
                                     kernels::Weighting::mass, num);
}

double whole_file_baseline(const ParetoPrior& prior, double shot_duration, double gamma_c, double xi,
                           const Numerics& num) {
  require(xi >= 1.0, "whole-file: xi must be >= 1");
  require(gamma_c / xi > 0.0, "whole-file: gamma_c / xi must be positive");
  return asymptotic_hit(prior, shot_duration, gamma_c / xi, num);
}

HitCurve global_hit_curve(const ParetoPrior& prior, std::span<const double> shot_durations,
                          double gamma_c, const Numerics& num) {
  HitCurve c{{shot_durations.begin(), shot_durations.end()}, {}, meta_for("global", prior, gamma_c)};
  c.values = eval_grid(shot_durations, [&](double T) { return asymptotic_hit(prior, T, gamma_c, num); });
  return c;
}

HitCurve local_hit_curve(const ParetoPrior& prior, std::span<const double> shot_durations,
                         double num_caches, double gamma_c, const Numerics& num) {
  require(num_caches >= 1.0, "local curve: need L >= 1");
  HitCurve c{{shot_durations.begin(), shot_durations.end()}, {}, meta_for("local", prior, gamma_c)};
  c.meta.num_caches = num_caches;
  c.values = eval_grid(shot_durations,
                       [&](double T) { return asymptotic_hit(prior, T / num_caches, gamma_c, num); });
  return c;
}

HitCurve cluster_hit_curve(const ParetoPrior& prior, const KernelSpec& kernel, double omega,
                           std::span<const double> shot_durations, double gamma_c,
                           const Numerics& num) {
  HitCurve c{{shot_durations.begin(), shot_durations.end()}, {}, meta_for("cluster", prior, gamma_c)};
  c.meta.omega = omega;
  c.meta.kernel = kernel;
  c.values = eval_grid(shot_durations, [&](double T) {
    return clustered_hit(prior, kernel, omega, T, gamma_c, num);
  });
  return c;
}

HitCurve whole_file_curve(const ParetoPrior& prior, std::span<const double> shot_durations,
                          double gamma_c, double xi, const Numerics& num) {
  HitCurve c{{shot_durations.begin(), shot_durations.end()}, {}, meta_for("whole-file", prior, gamma_c)};
  c.meta.xi = xi;
  c.values = eval_grid(shot_durations,
                       [&](double T) { return whole_file_baseline(prior, T, gamma_c, xi, num); });
  return c;
}

GainCurve gain_curve(const ParetoPrior& prior, std::span<const double> shot_durations,
                     double num_caches, double gamma_c, const Numerics& num) {
  GainCurve c{{shot_durations.begin(), shot_durations.end()}, {}, meta_for("gain", prior, gamma_c)};
  c.meta.num_caches = num_caches;
  c.gains = eval_grid(shot_durations, [&](double T) {
    return aggregation_gain(prior, T, num_caches, gamma_c, num);
  });
  return c;
}

void write_curve_csv(std::ostream& out, const HitCurve& curve) {
  write_rows(out, curve.meta, curve.abscissa, curve.values);
}

void write_curve_csv(std::ostream& out, const GainCurve& curve) {
  write_rows(out, curve.meta, curve.shot_durations, curve.gains);
}

void write_curve_meta_json(std::ostream& out, const CurveMeta& meta) {
  nlohmann::json j;
  j["mode"] = meta.mode;
  j["gamma_c"] = meta.gamma_c;
  j["prior"] = {{"mu_bar", meta.prior.mu_bar}, {"alpha", meta.prior.alpha}};
  if (meta.omega) j["omega"] = *meta.omega;
  if (meta.xi) j["xi"] = *meta.xi;
  if (meta.num_caches) j["L"] = *meta.num_caches;
  if (meta.kernel) j["kernel"] = {{"family", meta.kernel->family}, {"params", meta.kernel->params}};
  j["columns"] = {"abscissa", "value", "mode", "gamma_c", "alpha", "mu_bar"};
  out << j.dump(2) << '\n';
}

}  // namespace shotcache
