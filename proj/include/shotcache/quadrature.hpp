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

#include <cstddef>
#include <span>
#include <vector>

namespace shotcache {

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::size_t size() const { return nodes.size(); }
};

/// Cached rule of order n. The returned reference stays valid for the life of
/// the process; concurrent first use is safe.
const GaussRule& gauss_legendre(int n);

/// Computes an n-point rule from scratch (Newton iteration on P_n).
GaussRule make_gauss_legendre(int n);

template <class F>
double integrate(F&& f, double lo, double hi, int n) {
  const GaussRule& rule = gauss_legendre(n);
  const double half = 0.5 * (hi - lo);
  const double mid = 0.5 * (hi + lo);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
  }
  return acc * half;
}

/// Composite rule over consecutive panels [cuts[i], cuts[i+1]].
template <class F>
double integrate_panels(F&& f, std::span<const double> cuts, int n) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (cuts[i + 1] > cuts[i]) acc += integrate(f, cuts[i], cuts[i + 1], n);
  }
  return acc;
}

}  // namespace shotcache
