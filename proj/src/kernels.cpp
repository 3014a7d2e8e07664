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

#include "shotcache/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/tools/roots.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "shotcache/errors.hpp"
#include "shotcache/quadrature.hpp"

namespace shotcache::kernels {
namespace {

constexpr int kGradingLevels = 24;
constexpr double kMaxPanelFraction = 1.0 / 32.0;
constexpr double kNarrowPanelFraction = 1.0 / 256.0;
constexpr int kNarrowNodes = 4;

// Smallest k at grid age i, given a known lower bound.
unsigned sweep_from(const PosteriorLattice& lat, double theta, std::size_t i, unsigned k) {
  while (lat.at(k, i) < theta) ++k;
  return k;
}

// Binary search for the threshold at grid age i. Since the posterior mean is
// at least (k - 1/alpha) / tau, k = theta * tau + 1/alpha always passes.
unsigned search(const PosteriorLattice& lat, double theta, std::size_t i) {
  const double p = lat.prior().base().tail_index();
  const double ub = std::ceil(theta * lat.age(i) + p) + 1.0;
  unsigned lo = 0;
  unsigned hi = static_cast<unsigned>(ub);
  if (lat.at(lo, i) >= theta) return 0;
  while (hi - lo > 1) {
    const unsigned mid = lo + (hi - lo) / 2;
    (lat.at(mid, i) >= theta ? hi : lo) = mid;
  }
  return hi;
}

struct Crossing {
  std::size_t grid;  // left grid index
  unsigned j;        // count whose mean drops below theta
};

std::vector<Crossing> crossings(std::span<const unsigned> grid_k) {
  std::vector<Crossing> out;
  for (std::size_t i = 0; i + 1 < grid_k.size(); ++i) {
    for (unsigned j = grid_k[i]; j < grid_k[i + 1]; ++j) out.push_back({i, j});
  }
  return out;
}

std::vector<Breakpoint> assemble(std::span<const unsigned> grid_k,
                                 std::span<const Crossing> cross, std::span<const double> at) {
  std::vector<Breakpoint> steps{{0.0, grid_k.front()}};
  for (std::size_t c = 0; c < cross.size(); ++c) {
    const double tau = std::max(at[c], steps.back().tau);
    steps.push_back({tau, cross[c].j + 1});
  }
  return steps;
}

double panel_value(const PopularityPrior& prior, const Panel& pn, Weighting w,
                   const Numerics& num) {
  if (pn.nodes == 0) return pn.hi - pn.lo;
  const GaussRule& rule = gauss_legendre(pn.nodes);
  const double half = 0.5 * (pn.hi - pn.lo);
  const double mid = 0.5 * (pn.hi + pn.lo);
  double s = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    s += rule.weights[i] * weighted_pass(prior, pn.k, mid + half * rule.nodes[i], w, num);
  }
  return s * half;
}

}  // namespace

std::vector<Panel> make_panels(double shot_duration, std::span<const Breakpoint> steps,
                               const Numerics& num) {
  require(!steps.empty() && steps.front().tau == 0.0, "panels: steps must start at tau = 0");
  const double max_width = shot_duration * kMaxPanelFraction;
  const double narrow = shot_duration * kNarrowPanelFraction;
  std::vector<Panel> out;
  const auto emit = [&](double lo, double hi, unsigned k) {
    if (!(hi > lo)) return;
    if (k == 0) {
      out.push_back({lo, hi, 0, 0});
      return;
    }
    const int pieces = std::max(1, static_cast<int>(std::ceil((hi - lo) / max_width)));
    const double width = (hi - lo) / pieces;
    for (int m = 0; m < pieces; ++m) {
      const double a = lo + m * width;
      const double b = (m + 1 == pieces) ? hi : a + width;
      out.push_back({a, b, k, (b - a) < narrow ? kNarrowNodes : num.panel_nodes});
    }
  };
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const double lo = steps[s].tau;
    const double hi = (s + 1 < steps.size()) ? steps[s + 1].tau : shot_duration;
    const unsigned k = steps[s].k;
    if (lo == 0.0 && k > 0 && hi > 0.0) {
      // Pass probabilities behave like fractional powers of tau near 0.
      const double first = std::min(hi, max_width);
      double a = 0.0;
      for (int level = kGradingLevels; level >= 0; --level) {
        const double b = std::ldexp(first, -level);
        out.push_back({a, b, k, num.panel_nodes});
        a = b;
      }
      emit(first, hi, k);
    } else {
      emit(lo, hi, k);
    }
  }
  return out;
}

double solve_crossing(const PopularityPrior& prior, unsigned j, double theta, double lo, double hi,
                      const Numerics& num) {
  if (lo == 0.0) {
    lo = hi;
    for (int i = 0; i < 400; ++i) {
      lo *= 0.5;
      if (posterior_pair(j, lo, prior, num).first >= theta) break;
    }
  }
  const double log_theta = std::log(theta);
  const auto f = [&](double u) {
    const double tau = std::exp(u);
    const auto pp = posterior_pair(j, tau, prior, num);
    const double value = std::log(pp.first) - log_theta;
    const double slope = -tau * (pp.second - pp.first);
    return std::make_pair(value, slope);
  };
  const double ulo = std::log(lo);
  const double uhi = std::log(hi);
  boost::uintmax_t iters = 100;
  const double u = boost::math::tools::newton_raphson_iterate(f, 0.5 * (ulo + uhi), ulo, uhi, 44,
                                                              iters);
  return std::clamp(std::exp(u), lo, hi);
}

double weighted_pass(const PopularityPrior& prior, unsigned k, double age, Weighting w,
                     const Numerics& num) {
  return w == Weighting::count ? pass_probability(prior, k, age, num)
                               : captured_mass(prior, k, age, num);
}

namespace serial {

std::vector<unsigned> grid_thresholds(const PosteriorLattice& lattice, double theta) {
  std::vector<unsigned> out(lattice.size());
  unsigned k = 0;
  for (std::size_t i = 0; i < lattice.size(); ++i) {
    k = sweep_from(lattice, theta, i, k);
    out[i] = k;
  }
  return out;
}

std::vector<Breakpoint> refine_breakpoints(const PosteriorLattice& lattice, double theta,
                                           std::span<const unsigned> grid_k) {
  const auto cross = crossings(grid_k);
  std::vector<double> at(cross.size());
  for (std::size_t c = 0; c < cross.size(); ++c) {
    at[c] = solve_crossing(lattice.prior(), cross[c].j, theta, lattice.age(cross[c].grid),
                           lattice.age(cross[c].grid + 1), lattice.numerics());
  }
  return assemble(grid_k, cross, at);
}

double step_integral(const PopularityPrior& prior, double shot_duration,
                     std::span<const Breakpoint> steps, Weighting w, const Numerics& num) {
  const auto panels = make_panels(shot_duration, steps, num);
  double acc = 0.0;
  for (const Panel& pn : panels) acc += panel_value(prior, pn, w, num);
  return acc / shot_duration;
}

}  // namespace serial

namespace omp {

std::vector<unsigned> grid_thresholds(const PosteriorLattice& lattice, double theta) {
  const auto n = static_cast<std::ptrdiff_t>(lattice.size());
  std::vector<unsigned> out(lattice.size());
  constexpr std::ptrdiff_t chunk = 64;
  const std::ptrdiff_t chunks = (n + chunk - 1) / chunk;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t c = 0; c < chunks; ++c) {
    const std::ptrdiff_t begin = c * chunk;
    const std::ptrdiff_t end = std::min(n, begin + chunk);
    unsigned k = search(lattice, theta, begin);
    out[begin] = k;
    for (std::ptrdiff_t i = begin + 1; i < end; ++i) {
      k = sweep_from(lattice, theta, i, k);
      out[i] = k;
    }
  }
  return out;
}

std::vector<Breakpoint> refine_breakpoints(const PosteriorLattice& lattice, double theta,
                                           std::span<const unsigned> grid_k) {
  const auto cross = crossings(grid_k);
  std::vector<double> at(cross.size());
  const auto n = static_cast<std::ptrdiff_t>(cross.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t c = 0; c < n; ++c) {
    at[c] = solve_crossing(lattice.prior(), cross[c].j, theta, lattice.age(cross[c].grid),
                           lattice.age(cross[c].grid + 1), lattice.numerics());
  }
  return assemble(grid_k, cross, at);
}

double step_integral(const PopularityPrior& prior, double shot_duration,
                     std::span<const Breakpoint> steps, Weighting w, const Numerics& num) {
  const auto panels = make_panels(shot_duration, steps, num);
  std::vector<double> parts(panels.size());
  const auto n = static_cast<std::ptrdiff_t>(panels.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) parts[i] = panel_value(prior, panels[i], w, num);
  // Summed in panel order so the result does not depend on the thread count.
  double acc = 0.0;
  for (double v : parts) acc += v;
  return acc / shot_duration;
}

}  // namespace omp

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace shotcache::kernels
