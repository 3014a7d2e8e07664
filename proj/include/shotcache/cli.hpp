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

// Experiment runner behind the shotcache executable.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shotcache/simulator.hpp"

namespace shotcache::cli {

enum ExitCode { kOk = 0, kFailure = 1, kValidation = 2, kNumeric = 3 };

enum class Mode { trace, thresholds, curve_hit, curve_gain, curve_cluster, curve_local_known, simulate };
std::string to_string(Mode mode);

/// One experiment, read from a JSON file (comments allowed, unknown keys
/// rejected). Fields not used by the mode keep their defaults.
struct ExperimentConfig {
  Mode mode = Mode::curve_hit;
  std::string name;  // file prefix, defaults to the mode
  std::uint64_t seed = 1;

  double alpha = 0.8;
  double mu_bar = 20.0;
  double gamma_c = 0.1;

  // trace, thresholds
  double shot_duration = 1.0;
  std::vector<double> budgets;  // extra tables next to gamma_c

  // curves and simulation sweeps
  std::vector<double> shot_durations;
  std::optional<double> num_caches_curve;  // L of local / gain curves
  std::optional<double> xi_curve;          // whole-file curve
  std::vector<double> omegas;
  std::vector<double> gamma_grid;  // curve-local-known
  KernelSpec kernel;

  // trace, simulate
  double lambda_T = 1000.0;  // alive catalog size
  double horizon_T = 6.0;    // horizon in units of T
  std::uint32_t caches = 1;
  bool correlated = false;
  double xi = 1.0;
  double beta1 = 0.5;
  double beta2 = 0.05;
  std::vector<PolicyKind> policies;
  unsigned replications = 10;
  std::optional<double> prefetch_period;
};

/// Parses and checks; every problem found is listed in `violations`.
struct ParseResult {
  std::optional<ExperimentConfig> config;
  std::vector<std::string> violations;
};
ParseResult parse_experiment(std::string_view text);

/// Feasibility checks only, no computation.
std::vector<std::string> check(const ExperimentConfig& config);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

/// Named output files produced by an experiment, written together at the end.
struct Artifact {
  std::string path;  // relative to the output directory
  std::string data;
};

/// Runs one experiment in memory.
std::vector<Artifact> run_experiment(const ExperimentConfig& config);

enum class Scale { desk, paper };
/// Canonical configs behind `reproduce`.
std::vector<ExperimentConfig> figure_bundle(const std::string& figure, Scale scale);
std::vector<Artifact> reproduce_figure(const std::string& figure, Scale scale, std::uint64_t seed);

/// Entry point; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace shotcache::cli
