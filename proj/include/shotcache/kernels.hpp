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

// Hot loops behind the threshold tables and the age/popularity integrals.
// Each kernel has a serial reference version and an OpenMP version; the
// library calls the OpenMP ones, tests pin them against the serial ones.

#include <span>
#include <vector>

#include "shotcache/estimator.hpp"

namespace shotcache::kernels {

enum class Weighting {
  count,  // P(N >= Ntilde(tau)): storage fraction
  mass,   // E[mu 1{N >= Ntilde(tau)}] / E[mu]: hit probability
};

/// Age panel [lo, hi] on which the threshold equals k.
struct Panel {
  double lo = 0.0;
  double hi = 0.0;
  unsigned k = 0;
  int nodes = 0;
};

/// Splits the step function into quadrature panels: long panels are cut to at
/// most T/32, the panel touching tau = 0 is graded geometrically, and narrow
/// panels get a reduced node count.
std::vector<Panel> make_panels(double shot_duration, std::span<const Breakpoint> steps,
                               const Numerics& num);

/// Crossing age s with E[mu | j, s] == theta inside (lo, hi]; the posterior
/// mean is >= theta at lo and < theta at hi.
double solve_crossing(const PopularityPrior& prior, unsigned j, double theta, double lo,
                      double hi, const Numerics& num);

/// Integrand value on one panel node.
double weighted_pass(const PopularityPrior& prior, unsigned k, double age, Weighting w,
                     const Numerics& num);

namespace serial {

/// Ntilde_theta at every lattice age (two-pointer sweep).
std::vector<unsigned> grid_thresholds(const PosteriorLattice& lattice, double theta);

/// Exact jump ages between grid points.
std::vector<Breakpoint> refine_breakpoints(const PosteriorLattice& lattice, double theta,
                                           std::span<const unsigned> grid_k);

/// (1/T) int_0^T weighted_pass(Ntilde(tau), tau) dtau.
double step_integral(const PopularityPrior& prior, double shot_duration,
                     std::span<const Breakpoint> steps, Weighting w, const Numerics& num);

}  // namespace serial

namespace omp {

std::vector<unsigned> grid_thresholds(const PosteriorLattice& lattice, double theta);
std::vector<Breakpoint> refine_breakpoints(const PosteriorLattice& lattice, double theta,
                                           std::span<const unsigned> grid_k);
double step_integral(const PopularityPrior& prior, double shot_duration,
                     std::span<const Breakpoint> steps, Weighting w, const Numerics& num);

}  // namespace omp

/// Number of OpenMP threads available (1 without OpenMP).
int max_threads();

}  // namespace shotcache::kernels
