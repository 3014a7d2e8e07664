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

#include "shotcache/policy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include "json.hpp"

#include "shotcache/errors.hpp"
#include "shotcache/quadrature.hpp"

namespace shotcache {

PopularityPrior cluster_prior(const ParetoPrior& prior, const Kernel& kernel, double omega,
                              const Numerics& num) {
  require(omega > 0.0 && omega <= 1.0, "cluster: omega must lie in (0, 1]");
  // K_omega is symmetric about omega / 2, so x runs over half the torus with
  // doubled weight. Kinks at x = omega and x = 1/2.
  const double lo = 0.5 * omega;
  const double hi = lo + 0.5;
  std::vector<double> cuts{lo, hi};
  for (double c : {omega, 0.5}) {
    if (c > lo && c < hi) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  const GaussRule& rule = gauss_legendre(num.feature_nodes);
  std::vector<double> factors, weights;
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    const double half = 0.5 * (cuts[p + 1] - cuts[p]);
    const double mid = 0.5 * (cuts[p + 1] + cuts[p]);
    if (!(half > 0.0)) continue;
    for (std::size_t i = 0; i < rule.size(); ++i) {
      factors.push_back(smoothed_kernel(kernel, omega, mid + half * rule.nodes[i]));
      weights.push_back(2.0 * half * rule.weights[i]);
    }
  }
  const auto [mn, mx] = std::minmax_element(factors.begin(), factors.end());
  if (*mx - *mn <= 1e-13 * *mx) {
    // Flat smoothed kernel: a single atom. Snap to 1 for omega = 1.
    const double f = std::abs(*mx - 1.0) <= 1e-12 ? 1.0 : *mx;
    return PopularityPrior(prior, {f}, {1.0});
  }
  return PopularityPrior(prior, std::move(factors), std::move(weights));
}

unsigned ThresholdTable::threshold(double age) const {
  require(!breakpoints.empty(), "threshold table is empty");
  const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), age,
                                   [](double a, const Breakpoint& b) { return a < b.tau; });
  return it == breakpoints.begin() ? breakpoints.front().k : std::prev(it)->k;
}

ThresholdTable build_threshold_table(double gamma, const EstimateDistribution& dist) {
  require(gamma > 0.0 && gamma < 1.0, "threshold table: gamma must lie in (0, 1)");
  ThresholdTable t;
  t.gamma = gamma;
  t.theta = dist.quantile(gamma);
  t.shot_duration = dist.shot_duration();
  t.prior = dist.prior().base();
  t.estimator = std::make_shared<const PopularityPrior>(dist.prior());
  t.breakpoints = dist.threshold_steps(t.theta);
  return t;
}

ThresholdTable build_threshold_table(double gamma, const ParetoPrior& prior, double shot_duration,
                                     const Numerics& num) {
  return build_threshold_table(gamma, EstimateDistribution(PopularityPrior(prior), shot_duration, num));
}

ThresholdTable build_cluster_threshold_table(double gamma, double omega, const KernelSpec& kernel,
                                             const ParetoPrior& prior, double shot_duration,
                                             const Numerics& num) {
  const auto mix = cluster_prior(prior, make_kernel(kernel), omega, num);
  ThresholdTable t = build_threshold_table(gamma, EstimateDistribution(mix, shot_duration, num));
  t.cluster = ClusterSpec{omega, kernel};
  return t;
}

void write_table_json(std::ostream& out, const ThresholdTable& table) {
  nlohmann::json j;
  j["gamma"] = table.gamma;
  j["theta"] = table.theta;
  j["T"] = table.shot_duration;
  j["prior"] = {{"mu_bar", table.prior.mu_bar}, {"alpha", table.prior.alpha}};
  if (table.cluster) {
    j["cluster"] = {{"omega", table.cluster->omega},
                    {"kernel", {{"family", table.cluster->kernel.family},
                                {"params", table.cluster->kernel.params}}}};
  }
  auto& bp = j["breakpoints"] = nlohmann::json::array();
  for (const auto& b : table.breakpoints) bp.push_back({b.tau, b.k});
  out << j.dump() << '\n';
}

ThresholdTable read_table_json(std::istream& in) {
  const auto j = nlohmann::json::parse(in);
  ThresholdTable t;
  t.gamma = j.at("gamma").get<double>();
  t.theta = j.at("theta").get<double>();
  t.shot_duration = j.at("T").get<double>();
  t.prior = ParetoPrior(j.at("prior").at("mu_bar").get<double>(), j.at("prior").at("alpha").get<double>());
  for (const auto& row : j.at("breakpoints")) {
    t.breakpoints.push_back({row.at(0).get<double>(), row.at(1).get<unsigned>()});
  }
  require(!t.breakpoints.empty() && t.breakpoints.front().tau == 0.0,
          "threshold table: breakpoints must start at tau = 0");
  if (j.contains("cluster")) {
    const auto& c = j.at("cluster");
    ClusterSpec spec{c.at("omega").get<double>(),
                     {c.at("kernel").at("family").get<std::string>(),
                      c.at("kernel").at("params").get<std::vector<double>>()}};
    t.estimator = std::make_shared<const PopularityPrior>(
        cluster_prior(t.prior, make_kernel(spec.kernel), spec.omega));
    t.cluster = std::move(spec);
  } else {
    t.estimator = std::make_shared<const PopularityPrior>(t.prior);
  }
  return t;
}

std::vector<CachingDecision> decide(std::span<const ContentState> contents, std::size_t capacity) {
  std::vector<CachingDecision> out(contents.size());
  std::vector<std::size_t> passing;
  for (std::size_t i = 0; i < contents.size(); ++i) {
    const ContentState& c = contents[i];
    require(c.table != nullptr, "decide: content without a threshold table");
    require(c.age >= 0.0 && c.age <= c.table->shot_duration, "decide: age outside [0, T]");
    out[i].content_id = c.content_id;
    out[i].estimate = std::numeric_limits<double>::quiet_NaN();
    if (c.table->passes(c.count, c.age)) {
      out[i].cached = true;
      out[i].estimate = posterior_mean({c.count, c.age}, c.table->estimation_prior());
      passing.push_back(i);
    }
  }
  if (passing.size() > capacity) {
    // Drop order: smallest estimate first, larger id first among equals.
    std::sort(passing.begin(), passing.end(), [&](std::size_t a, std::size_t b) {
      if (out[a].estimate != out[b].estimate) return out[a].estimate < out[b].estimate;
      return out[a].content_id > out[b].content_id;
    });
    for (std::size_t r = 0; r < passing.size() - capacity; ++r) out[passing[r]].cached = false;
  }
  return out;
}

void ScoreSpec::validate() const {
  require(beta1 <= 1.0 && beta1 > gamma_c && gamma_c > beta2 && beta2 >= 0.0,
          "scores: need 1 >= beta1 > gamma_c > beta2 >= 0");
}

ScoreBook::ScoreBook(const ParetoPrior& prior, double shot_duration, const Numerics& num)
    : dist_(PopularityPrior(prior), shot_duration, num) {
  require(prior.alpha > 0.0, "scores: alpha must be positive");
}

const ThresholdTable& ScoreBook::table(double beta) const {
  require(beta > 0.0 && beta < 1.0, "scores: table budget must lie in (0, 1)");
  Entry* e;
  {
    std::lock_guard lock(mu_);
    auto& slot = tables_[beta];
    if (!slot) slot = std::make_unique<Entry>();
    e = slot.get();
  }
  std::call_once(e->once, [&] { e->table = build_threshold_table(beta, dist_); });
  return e->table;
}

int ScoreBook::score(unsigned count, double age, double beta) const {
  if (beta >= 1.0) return 1;
  if (beta <= 0.0) return 0;
  return table(beta).passes(count, age) ? 1 : 0;
}

}  // namespace shotcache
