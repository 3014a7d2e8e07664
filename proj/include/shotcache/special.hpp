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

namespace shotcache {

/// log of the upper incomplete gamma function Gamma(c, a) = int_a^inf t^(c-1) e^-t dt,
/// for any real c and a > 0. For a == 0 returns lgamma(c) when c > 0 and +inf
/// otherwise.
///
/// Evaluated by Gauss-Legendre quadrature in u = log t, where the integrand
/// exp(c*u - e^u) is log-concave. The window is cut where the integrand falls
/// 46 nats below its maximum; `nodes_per_panel` nodes are used on each side
/// of the mode. For c > 0 the regularized Boost tail is used instead unless it
/// underflows.
double log_upper_gamma(double c, double a, int nodes_per_panel = 64);

/// log P(Pois(m) = k). Exact 0 at (k = 0, m = 0).
double poisson_log_pmf(unsigned k, double m);

/// P(Pois(m) >= k), via the regularized lower incomplete gamma P(k, m).
double poisson_upper_tail(unsigned k, double m);

}  // namespace shotcache
