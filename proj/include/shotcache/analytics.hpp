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

// Many-contents hit probabilities of the ABT policy.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shotcache/estimator.hpp"
#include "shotcache/traffic.hpp"

namespace shotcache {

/// h(T): captured request mass of the gamma_c table, (1/mu_bar T) int int mu P(N >= Ntilde) dz dtau.
double asymptotic_hit(const ParetoPrior& prior, double shot_duration, double gamma_c,
                      const Numerics& num = {});

/// T -> inf limit with known popularities, gamma_c^(1 - alpha).
double static_hit(const ParetoPrior& prior, double gamma_c);

/// Global minus local learning, h(T) - h(T / L), with `prior` the aggregate
/// volume law. Equals h_l(T L) - h_l(T) under the per-cache prior mu_bar / L.
double aggregation_gain(const ParetoPrior& prior, double shot_duration, double num_caches,
                        double gamma_c, const Numerics& num = {});

/// Local cache with known local popularity mu g(d) in the L -> inf limit.
double local_hit_known_popularity(const ParetoPrior& prior, const Kernel& kernel, double gamma_c,
                                  const Numerics& num = {});

/// Rescaled local threshold L theta^l solving the gamma_c storage constraint.
double local_known_threshold(const ParetoPrior& prior, const Kernel& kernel, double gamma_c,
                             const Numerics& num = {});

/// Hit probability when estimates pool the requests of a cluster of width omega.
double clustered_hit(const ParetoPrior& prior, const KernelSpec& kernel, double omega,
                     double shot_duration, double gamma_c, const Numerics& num = {});

/// Whole files in a cache of relative size gamma_c / xi.
double whole_file_baseline(const ParetoPrior& prior, double shot_duration, double gamma_c, double xi,
                           const Numerics& num = {});

// ---------------------------------------------------------------------------

struct CurveMeta {
  std::string mode;  // global | local | cluster | whole-file | local-known | gain
  double gamma_c = 0.1;
  ParetoPrior prior;
  std::optional<double> omega;
  std::optional<double> xi;
  std::optional<double> num_caches;
  std::optional<KernelSpec> kernel;
};

struct HitCurve {
  std::vector<double> abscissa;
  std::vector<double> values;
  CurveMeta meta;
};

struct GainCurve {
  std::vector<double> shot_durations;
  std::vector<double> gains;
  CurveMeta meta;
};

/// Grid points are independent and evaluated in parallel.
HitCurve global_hit_curve(const ParetoPrior& prior, std::span<const double> shot_durations,
                          double gamma_c, const Numerics& num = {});
/// Local estimation at one of L thinned caches: h(T / L).
HitCurve local_hit_curve(const ParetoPrior& prior, std::span<const double> shot_durations,
                         double num_caches, double gamma_c, const Numerics& num = {});
HitCurve cluster_hit_curve(const ParetoPrior& prior, const KernelSpec& kernel, double omega,
                           std::span<const double> shot_durations, double gamma_c,
                           const Numerics& num = {});
HitCurve whole_file_curve(const ParetoPrior& prior, std::span<const double> shot_durations,
                          double gamma_c, double xi, const Numerics& num = {});
GainCurve gain_curve(const ParetoPrior& prior, std::span<const double> shot_durations,
                     double num_caches, double gamma_c, const Numerics& num = {});

/// Rows "abscissa,value,mode,gamma_c,alpha,mu_bar".
void write_curve_csv(std::ostream& out, const HitCurve& curve);
void write_curve_csv(std::ostream& out, const GainCurve& curve);
void write_curve_meta_json(std::ostream& out, const CurveMeta& meta);

}  // namespace shotcache
