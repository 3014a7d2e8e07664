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

// Shot Noise Model catalogs and request traces.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shotcache/estimator.hpp"

namespace shotcache {

struct Shot {
  std::uint32_t id = 0;
  double arrival_time = 0.0;
  double volume = 0.0;  // requests per second while alive
  double z = 1.0;       // uniform seed of the volume
  std::optional<double> feature;

  friend bool operator==(const Shot&, const Shot&) = default;
};

struct SnmConfig {
  double lambda = 1000.0;  // shots per second
  double shot_duration = 1.0;
  double mu_bar = 20.0;
  double alpha = 0.8;
  double horizon = 3.0;  // trace covers [-shot_duration, horizon)
  std::uint64_t seed = 1;

  void validate() const;
  ParetoPrior prior() const { return {mu_bar, alpha}; }
};

// ---------------------------------------------------------------------------
// Kernels

/// Torus distance min(|x - y|, 1 - |x - y|) for x, y in [0, 1).
double torus_distance(double x, double y);

struct KernelSpec {
  std::string family = "quartic";
  std::vector<double> params;

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

/// Profile g on [0, 1/2]; K(x, y) = g(torus_distance(x, y)).
class Kernel {
 public:
  /// Validates that g is nonincreasing on [0, 1/2] and 2 int_0^1/2 g = 1
  /// (within 1e-9).
  Kernel(std::string name, std::function<double(double)> profile);

  const std::string& name() const { return name_; }
  double profile(double d) const { return g_(d); }
  double operator()(double x, double y) const { return g_(torus_distance(x, y)); }

  /// sup{d in [0, 1/2] : g(d) >= t}; 0 when t > g(0) and 1/2 when t <= g(1/2).
  double inverse(double t) const;

  /// int_0^d g(s) ds for d in [0, 1/2].
  double primitive(double d) const;

 private:
  std::string name_;
  std::function<double(double)> g_;
};

using KernelFactory = std::function<std::function<double(double)>(std::span<const double>)>;

/// Adds (or replaces) a kernel family. "quartic", g(d) = 5 (1 - 2d)^4, is
/// registered by default.
void register_kernel(const std::string& family, KernelFactory factory);
std::vector<std::string> kernel_families();
Kernel make_kernel(const KernelSpec& spec);

/// int_0^omega g(d(x, y)) dy: effective kernel of a cluster covering [0, omega].
double smoothed_kernel(const Kernel& kernel, double omega, double x);

struct Topology {
  std::uint32_t num_caches = 1;
  std::vector<double> cache_features;
  std::optional<KernelSpec> kernel;

  void validate() const;
  bool correlated() const { return kernel.has_value(); }
};

/// Finite-L local rate mu * K(X, Y_l) / sum_l' K(X, Y_l').
double local_popularity(const Shot& shot, std::uint32_t cache, const Topology& topology);
/// All L local rates of one shot; they sum to shot.volume.
std::vector<double> local_popularities(const Shot& shot, const Topology& topology);

// ---------------------------------------------------------------------------
// Traces

struct RequestEvent {
  double time = 0.0;
  std::uint32_t content_id = 0;
  std::uint32_t cache_id = 0;

  friend bool operator==(const RequestEvent&, const RequestEvent&) = default;
};

struct RequestTrace {
  double start = 0.0;  // -T: warm-up shots are born from here
  double horizon = 0.0;
  std::vector<RequestEvent> events;
};

/// Shots of a rate-lambda Poisson process on [-T, horizon), ids in arrival
/// order. Features are drawn when `with_features` is set.
std::vector<Shot> generate_catalog(const SnmConfig& config, bool with_features = false);

/// Poisson(mu T) requests per shot, uniform over the shot lifetime, routed
/// uniformly (or by the kernel in correlated mode). Sorted by (time, content).
RequestTrace generate_requests(std::span<const Shot> catalog, const SnmConfig& config,
                               const Topology& topology);

/// Number of events per cache.
std::vector<std::uint64_t> cache_counts(const RequestTrace& trace, std::uint32_t num_caches);

void write_trace_csv(std::ostream& out, const RequestTrace& trace);
RequestTrace read_trace_csv(std::istream& in);
void write_catalog_json(std::ostream& out, std::span<const Shot> catalog, const SnmConfig& config);
std::vector<Shot> read_catalog_json(std::istream& in);

}  // namespace shotcache
