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

#include "shotcache/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>

#include "shotcache/errors.hpp"
#include "shotcache/quadrature.hpp"

namespace shotcache {
namespace {

constexpr double kWindowDepth = 46.0;

// Stay in double: the default promotion to long double runs on x87 and
// dominated the cost of large threshold tables.
using DoublePolicy = boost::math::policies::policy<boost::math::policies::promote_double<false>>;

// Point where phi drops kWindowDepth below phi(from), walking in direction
// dir (+1 or -1) but never past `limit`. phi must be concave.
template <class Phi>
double window_edge(const Phi& phi, double from, int dir, double limit) {
  const double target = phi(from) - kWindowDepth;
  double step = 1.0;
  double inside = from;
  double outside = from + dir * step;
  while (phi(outside) > target) {
    if (dir < 0 && outside <= limit) return limit;
    inside = outside;
    step *= 2.0;
    outside = from + dir * step;
  }
  if (dir < 0 && outside < limit) outside = limit;
  for (int i = 0; i < 40; ++i) {
    const double mid = 0.5 * (inside + outside);
    (phi(mid) > target ? inside : outside) = mid;
  }
  return outside;
}

}  // namespace

double log_upper_gamma(double c, double a, int nodes_per_panel) {
  if (!(a >= 0.0) || !std::isfinite(c)) {
    throw ValidationError("log_upper_gamma: need a >= 0 and finite c");
  }
  if (a == 0.0) {
    return c > 0.0 ? std::lgamma(c) : std::numeric_limits<double>::infinity();
  }
  if (std::isinf(a)) return -std::numeric_limits<double>::infinity();
  if (c > 0.0) {
    // Regularized tail is cheap and exact while it stays in normal range.
    double q;
    try {
      q = boost::math::gamma_q(c, a, DoublePolicy());
    } catch (const std::overflow_error&) {
      q = boost::math::gamma_q(c, a);  // large c with a far below it
    }
    if (q > 1e-280) return std::lgamma(c) + std::log(q);
  }

  const auto phi = [c](double u) { return c * u - std::exp(u); };
  const double lower = std::log(a);
  const double mode = (c > 0.0) ? std::max(lower, std::log(c)) : lower;
  const double peak = phi(mode);

  const double hi = window_edge(phi, mode, +1, 0.0);
  const double lo = (mode > lower) ? window_edge(phi, mode, -1, lower) : lower;

  const GaussRule& rule = gauss_legendre(nodes_per_panel);
  double acc = 0.0;
  const auto panel = [&](double x0, double x1) {
    if (!(x1 > x0)) return;
    const double half = 0.5 * (x1 - x0);
    const double mid = 0.5 * (x1 + x0);
    double s = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) {
      s += rule.weights[i] * std::exp(phi(mid + half * rule.nodes[i]) - peak);
    }
    acc += s * half;
  };
  panel(lo, mode);
  panel(mode, hi);
  return peak + std::log(acc);
}

double poisson_log_pmf(unsigned k, double m) {
  if (m == 0.0) {
    return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  return k * std::log(m) - m - std::lgamma(k + 1.0);
}

double poisson_upper_tail(unsigned k, double m) {
  if (k == 0) return 1.0;
  if (m <= 0.0) return 0.0;
  if (std::isinf(m)) return 1.0;
  return boost::math::gamma_p(static_cast<double>(k), m);
}

}  // namespace shotcache
