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

#include "shotcache/cli.hpp"

#include <omp.h>
#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "shotcache/analytics.hpp"
#include "shotcache/errors.hpp"
#include "shotcache/policy.hpp"

#ifndef SHOTCACHE_VERSION
#define SHOTCACHE_VERSION "0.0.0"
#endif

namespace shotcache::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::map<std::string, Mode> kModes{
    {"trace", Mode::trace},
    {"thresholds", Mode::thresholds},
    {"curve-hit", Mode::curve_hit},
    {"curve-gain", Mode::curve_gain},
    {"curve-cluster", Mode::curve_cluster},
    {"curve-local-known", Mode::curve_local_known},
    {"simulate", Mode::simulate},
};

std::string fmt(double x) {
  std::ostringstream s;
  s << x;
  return s.str();
}

// Shortest text that reads back to the same double.
std::string exact(double x) {
  char buf[32];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, x).ptr);
}

std::vector<double> log_grid(double lo_exp, double hi_exp, int per_decade) {
  std::vector<double> g;
  const int n = static_cast<int>(std::lround((hi_exp - lo_exp) * per_decade));
  for (int i = 0; i <= n; ++i) g.push_back(std::pow(10.0, lo_exp + static_cast<double>(i) / per_decade));
  return g;
}

// Reads the keys a mode accepts; anything else in the object is reported.
class Reader {
 public:
  Reader(const json& j, std::vector<std::string>& violations) : j_(j), v_(violations) {}

  template <class T>
  void get(const std::string& key, T& dst, const char* what) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception&) {
      v_.push_back("'" + key + "': expected " + what);
    }
  }

  // Integer fields; json would silently wrap negative numbers.
  template <class T>
  void count(const std::string& key, T& dst, long long min) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& x = j_.at(key);
    if (!x.is_number_integer() || x.get<long long>() < min) {
      v_.push_back("'" + key + "': expected an integer >= " + std::to_string(min));
      return;
    }
    dst = static_cast<T>(x.get<long long>());
  }

  template <class T>
  void get(const std::string& key, std::optional<T>& dst, const char* what) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    T x{};
    try {
      x = j_.at(key).get<T>();
      dst = x;
    } catch (const json::exception&) {
      v_.push_back("'" + key + "': expected " + what);
    }
  }

  // Array of numbers, or {"from", "to", "points"} spaced logarithmically.
  void grid(const std::string& key, std::vector<double>& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& g = j_.at(key);
    try {
      if (g.is_array()) {
        dst = g.get<std::vector<double>>();
        return;
      }
      if (g.is_object()) {
        for (const auto& [k, _] : g.items()) {
          if (k != "from" && k != "to" && k != "points") v_.push_back("'" + key + "': unknown key '" + k + "'");
        }
        const double from = g.at("from").get<double>(), to = g.at("to").get<double>();
        const int n = g.at("points").get<int>();
        if (!(from > 0.0 && to >= from && n >= 1)) {
          v_.push_back("'" + key + "': need 0 < from <= to and points >= 1");
          return;
        }
        dst.clear();
        for (int i = 0; i < n; ++i) {
          const double f = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
          dst.push_back(from * std::pow(to / from, f));
        }
        return;
      }
    } catch (const json::exception&) {
    }
    v_.push_back("'" + key + "': expected an array of numbers or {from, to, points}");
  }

  void kernel(KernelSpec& dst) {
    seen_.insert("kernel");
    if (!j_.contains("kernel")) return;
    const json& k = j_.at("kernel");
    if (!k.is_object()) {
      v_.push_back("'kernel': expected {family, params}");
      return;
    }
    for (const auto& [key, _] : k.items()) {
      if (key != "family" && key != "params") v_.push_back("'kernel': unknown key '" + key + "'");
    }
    try {
      if (k.contains("family")) dst.family = k.at("family").get<std::string>();
      if (k.contains("params")) dst.params = k.at("params").get<std::vector<double>>();
    } catch (const json::exception&) {
      v_.push_back("'kernel': family must be a string and params an array of numbers");
    }
  }

  void policies(std::vector<PolicyKind>& dst) {
    std::vector<std::string> names;
    get("policies", names, "an array of policy names");
    for (const auto& n : names) {
      try {
        dst.push_back(parse_policy(n));
      } catch (const ValidationError&) {
        v_.push_back("'policies': unknown policy '" + n + "'");
      }
    }
  }

  void reject_unknown(const std::string& mode) {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) v_.push_back("unknown key '" + k + "' for mode " + mode);
    }
  }

 private:
  const json& j_;
  std::vector<std::string>& v_;
  std::set<std::string> seen_;
};

bool in_open_unit(double x) { return x > 0.0 && x < 1.0; }

std::string csv_header_summary() {
  return "policy,T,lambda,L,gamma_C,beta1,beta2,xi,replications,hit_mean,hit_half_width,tx_mean,"
         "tx_half_width,overhead_mean\n";
}

std::string opt(const std::optional<double>& x) { return x ? fmt(*x) : std::string(); }

ParetoPrior prior_of(const ExperimentConfig& c) { return {c.mu_bar, c.alpha}; }

Topology topology_of(const ExperimentConfig& c) {
  Topology t;
  t.num_caches = c.caches;
  if (c.correlated) {
    t.kernel = c.kernel;
    for (std::uint32_t l = 0; l < c.caches; ++l) t.cache_features.push_back((l + 0.5) / c.caches);
  }
  return t;
}

std::vector<SimConfig> sim_configs(const ExperimentConfig& c) {
  std::vector<SimConfig> out;
  for (double T : c.shot_durations) {
    for (PolicyKind p : c.policies) {
      SimConfig s;
      s.snm.lambda = c.lambda_T / T;
      s.snm.shot_duration = T;
      s.snm.mu_bar = c.mu_bar;
      s.snm.alpha = c.alpha;
      s.snm.horizon = c.horizon_T * T;
      s.snm.seed = c.seed;
      s.topology.num_caches = c.caches;
      s.policy = p;
      s.scores = {c.beta1, c.beta2, c.gamma_c};
      s.capacity_fraction = c.gamma_c;
      s.xi = c.xi;
      if (c.prefetch_period) s.prefetch_period = *c.prefetch_period * T;
      out.push_back(s);
    }
  }
  return out;
}

std::vector<SweepPoint> run_sweep(const ExperimentConfig& c) {
  const auto configs = sim_configs(c);
  return sweep(configs, c.replications);
}

std::string summary_csv(std::span<const SweepPoint> points) {
  std::ostringstream s;
  s << csv_header_summary() << std::setprecision(10);
  for (const auto& p : points) {
    const auto& c = p.config;
    s << to_string(c.policy) << ',' << c.snm.shot_duration << ',' << c.snm.lambda << ','
      << c.topology.num_caches << ',' << c.capacity_fraction << ',' << c.scores.beta1 << ','
      << c.scores.beta2 << ',' << c.xi << ',' << p.runs.size() << ',' << p.hit_mean << ','
      << opt(p.hit_half_width) << ',' << p.tx_mean << ',' << opt(p.tx_half_width) << ','
      << p.overhead_mean << '\n';
  }
  return s.str();
}

template <class Curve>
void add_curve(std::vector<Artifact>& out, const std::string& stem, const Curve& curve) {
  std::ostringstream csv, meta;
  write_curve_csv(csv, curve);
  write_curve_meta_json(meta, curve.meta);
  out.push_back({stem + ".csv", csv.str()});
  out.push_back({stem + ".json", meta.str()});
}

// Global, local and whole-file curves on one grid.
struct HitSet {
  HitCurve global;
  std::optional<HitCurve> local, whole_file;
};

HitSet hit_set(const ExperimentConfig& c) {
  const ParetoPrior prior = prior_of(c);
  HitSet s{global_hit_curve(prior, c.shot_durations, c.gamma_c), {}, {}};
  if (c.num_caches_curve) s.local = local_hit_curve(prior, c.shot_durations, *c.num_caches_curve, c.gamma_c);
  if (c.xi_curve) s.whole_file = whole_file_curve(prior, c.shot_durations, c.gamma_c, *c.xi_curve);
  return s;
}

void add_hits(std::vector<Artifact>& out, const std::string& name, const HitSet& s) {
  add_curve(out, name + "_global", s.global);
  if (s.local) add_curve(out, name + "_local", *s.local);
  if (s.whole_file) add_curve(out, name + "_whole_file", *s.whole_file);
}

GainCurve difference(const HitCurve& a, const HitCurve& b, const std::string& mode) {
  GainCurve g{a.abscissa, {}, b.meta};
  g.meta.mode = mode;
  for (std::size_t i = 0; i < a.values.size(); ++i) g.gains.push_back(a.values[i] - b.values[i]);
  return g;
}

// Gain of global learning over local learning (and over whole files).
void add_gains(std::vector<Artifact>& out, const std::string& name, const HitSet& s) {
  if (s.local) add_curve(out, name + "_local", difference(s.global, *s.local, "gain"));
  if (s.whole_file) add_curve(out, name + "_whole_file", difference(s.global, *s.whole_file, "gain-whole-file"));
}

void run_thresholds(const ExperimentConfig& c, std::vector<Artifact>& out) {
  const ParetoPrior prior = prior_of(c);
  const EstimateDistribution dist(PopularityPrior(prior), c.shot_duration);
  std::vector<double> gammas{c.gamma_c};
  gammas.insert(gammas.end(), c.budgets.begin(), c.budgets.end());
  std::ostringstream csv;
  csv << "gamma,tau,k\n";
  for (double g : gammas) {
    const ThresholdTable t = build_threshold_table(g, dist);
    std::ostringstream js;
    write_table_json(js, t);
    out.push_back({c.name + "_table_" + fmt(g) + ".json", js.str()});
    for (const auto& b : t.breakpoints) csv << exact(g) << ',' << exact(b.tau) << ',' << b.k << '\n';
  }
  out.push_back({c.name + ".csv", csv.str()});

  // Estimate of the marginally cached content along the gamma_c threshold,
  // next to the count line of the content at the gamma_c popularity quantile.
  const ThresholdTable t = build_threshold_table(c.gamma_c, dist);
  const double mu_c = prior.volume(c.gamma_c);
  std::ostringstream m;
  m << "tau,threshold,estimate,theta,const_line\n" << std::setprecision(10);
  const int n = 200;
  for (int i = 1; i <= n; ++i) {
    const double tau = c.shot_duration * i / n;
    const unsigned k = t.threshold(tau);
    m << tau << ',' << k << ',' << posterior_mean({k, tau}, prior) << ',' << t.theta << ','
      << mu_c * tau << '\n';
  }
  out.push_back({c.name + "_marginal.csv", m.str()});
}

void run_local_known(const ExperimentConfig& c, std::vector<Artifact>& out) {
  const ParetoPrior prior = prior_of(c);
  const Kernel k = make_kernel(c.kernel);
  std::vector<double> grid = c.gamma_grid.empty() ? std::vector<double>{c.gamma_c} : c.gamma_grid;
  HitCurve known{grid, {}, {}};
  HitCurve stat{grid, {}, {}};
  for (double g : grid) {
    known.values.push_back(local_hit_known_popularity(prior, k, g));
    stat.values.push_back(static_hit(prior, g));
  }
  known.meta.mode = "local-known";
  known.meta.prior = prior;
  known.meta.gamma_c = c.gamma_c;
  known.meta.kernel = c.kernel;
  stat.meta = known.meta;
  stat.meta.mode = "static";
  stat.meta.kernel.reset();
  add_curve(out, c.name, known);
  add_curve(out, c.name + "_static", stat);
}

void run_cluster(const ExperimentConfig& c, std::vector<Artifact>& out) {
  const ParetoPrior prior = prior_of(c);
  for (double w : c.omegas) {
    add_curve(out, c.name + "_omega_" + fmt(w),
              cluster_hit_curve(prior, c.kernel, w, c.shot_durations, c.gamma_c));
  }
  // Smoothed kernels per unit cluster width against distance from the
  // cluster centre.
  const Kernel k = make_kernel(c.kernel);
  std::ostringstream s;
  s << "distance,kernel";
  for (double w : c.omegas) s << ",omega_" << fmt(w);
  s << '\n' << std::setprecision(10);
  for (int i = 0; i <= 100; ++i) {
    const double d = 0.005 * i;
    s << d << ',' << k.profile(d);
    for (double w : c.omegas) {
      double x = std::fmod(0.5 * w + d, 1.0);
      s << ',' << smoothed_kernel(k, w, x) / w;
    }
    s << '\n';
  }
  out.push_back({c.name + "_kernels.csv", s.str()});
}

}  // namespace

std::string to_string(Mode mode) {
  for (const auto& [name, m] : kModes) {
    if (m == mode) return name;
  }
  return "?";
}

ParseResult parse_experiment(std::string_view text) {
  ParseResult r;
  json j;
  try {
    j = json::parse(text.begin(), text.end(), nullptr, true, true);
  } catch (const json::parse_error& e) {
    r.violations.push_back(std::string("config is not valid JSON: ") + e.what());
    return r;
  }
  if (!j.is_object()) {
    r.violations.push_back("config must be a JSON object");
    return r;
  }
  if (!j.contains("mode") || !j.at("mode").is_string()) {
    r.violations.push_back("'mode' is required: one of trace, thresholds, curve-hit, curve-gain, "
                           "curve-cluster, curve-local-known, simulate");
    return r;
  }
  const std::string mode = j.at("mode").get<std::string>();
  const auto it = kModes.find(mode);
  if (it == kModes.end()) {
    r.violations.push_back("unknown mode '" + mode + "'");
    return r;
  }

  ExperimentConfig c;
  c.mode = it->second;
  c.name = mode;
  auto& v = r.violations;
  Reader rd(j, v);
  std::string ignored;
  rd.get("mode", ignored, "a string");
  rd.get("name", c.name, "a string");
  rd.count("seed", c.seed, 0);
  rd.get("alpha", c.alpha, "a number");
  rd.get("mu_bar", c.mu_bar, "a number");
  rd.get("gamma_c", c.gamma_c, "a number");
  switch (c.mode) {
    case Mode::trace:
      rd.get("shot_duration", c.shot_duration, "a number");
      rd.get("lambda_T", c.lambda_T, "a number");
      rd.get("horizon_T", c.horizon_T, "a number");
      rd.count("caches", c.caches, 1);
      rd.get("correlated", c.correlated, "a boolean");
      rd.kernel(c.kernel);
      break;
    case Mode::thresholds:
      rd.get("shot_duration", c.shot_duration, "a number");
      rd.get("budgets", c.budgets, "an array of numbers");
      break;
    case Mode::curve_hit:
      rd.grid("shot_durations", c.shot_durations);
      rd.get("L", c.num_caches_curve, "a number");
      rd.get("xi", c.xi_curve, "a number");
      break;
    case Mode::curve_gain:
      rd.grid("shot_durations", c.shot_durations);
      rd.get("L", c.num_caches_curve, "a number");
      rd.get("xi", c.xi_curve, "a number");
      break;
    case Mode::curve_cluster:
      rd.grid("shot_durations", c.shot_durations);
      rd.get("omegas", c.omegas, "an array of numbers");
      rd.kernel(c.kernel);
      break;
    case Mode::curve_local_known:
      rd.grid("gamma_grid", c.gamma_grid);
      rd.kernel(c.kernel);
      break;
    case Mode::simulate:
      rd.grid("shot_durations", c.shot_durations);
      rd.get("lambda_T", c.lambda_T, "a number");
      rd.get("horizon_T", c.horizon_T, "a number");
      rd.count("caches", c.caches, 1);
      rd.get("xi", c.xi, "a number");
      rd.get("beta1", c.beta1, "a number");
      rd.get("beta2", c.beta2, "a number");
      rd.policies(c.policies);
      rd.count("replications", c.replications, 1);
      rd.get("prefetch_period", c.prefetch_period, "a number");
      break;
  }
  rd.reject_unknown(mode);
  if (c.mode == Mode::simulate && !j.contains("policies")) {
    c.policies = {PolicyKind::lru, PolicyKind::gated_lru, PolicyKind::lru_prefetch};
  }
  const auto more = check(c);
  v.insert(v.end(), more.begin(), more.end());
  if (v.empty()) r.config = std::move(c);
  return r;
}

std::vector<std::string> check(const ExperimentConfig& c) {
  std::vector<std::string> v;
  const auto need = [&](bool ok, const std::string& msg) {
    if (!ok) v.push_back(msg);
  };
  const bool analytic_prior = c.mode != Mode::trace;
  if (analytic_prior) {
    need(in_open_unit(c.alpha), "alpha must lie in (0, 1)");
  } else {
    need(c.alpha >= 0.0 && c.alpha < 1.0, "alpha must lie in [0, 1)");
  }
  need(std::isfinite(c.mu_bar) && c.mu_bar > 0.0, "mu_bar must be positive");
  need(in_open_unit(c.gamma_c), "gamma_c must lie in (0, 1)");
  need(!c.name.empty() && c.name.find_first_of("/\\") == std::string::npos && c.name != "." &&
           c.name != "..",
       "name must be a plain file prefix");

  const auto positive_grid = [&](const std::vector<double>& g, const std::string& what) {
    need(!g.empty(), what + " must not be empty");
    for (double x : g) {
      if (!(std::isfinite(x) && x > 0.0)) {
        v.push_back(what + " values must be positive");
        break;
      }
    }
  };
  const auto known_kernel = [&] {
    const auto fams = kernel_families();
    if (std::find(fams.begin(), fams.end(), c.kernel.family) == fams.end()) {
      v.push_back("unknown kernel family '" + c.kernel.family + "'");
      return;
    }
    try {
      make_kernel(c.kernel);
    } catch (const ValidationError& e) {
      v.push_back(e.what());
    }
  };

  switch (c.mode) {
    case Mode::trace:
      need(c.shot_duration > 0.0 && std::isfinite(c.shot_duration), "shot_duration must be positive");
      need(c.lambda_T > 0.0 && std::isfinite(c.lambda_T), "lambda_T must be positive");
      need(c.horizon_T > 0.0 && std::isfinite(c.horizon_T), "horizon_T must be positive");
      need(c.caches >= 1, "caches must be >= 1");
      if (c.correlated) known_kernel();
      break;
    case Mode::thresholds:
      need(c.shot_duration > 0.0 && std::isfinite(c.shot_duration), "shot_duration must be positive");
      for (double b : c.budgets) need(in_open_unit(b), "budgets must lie in (0, 1)");
      break;
    case Mode::curve_hit:
    case Mode::curve_gain:
      positive_grid(c.shot_durations, "shot_durations");
      need(c.mode == Mode::curve_hit || c.num_caches_curve.has_value(), "curve-gain needs 'L'");
      if (c.num_caches_curve) need(*c.num_caches_curve >= 1.0, "L must be >= 1");
      if (c.xi_curve) {
        need(*c.xi_curve >= 1.0, "xi must be >= 1");
        need(c.gamma_c / *c.xi_curve > 0.0, "gamma_c / xi must be positive");
      }
      break;
    case Mode::curve_cluster:
      positive_grid(c.shot_durations, "shot_durations");
      need(!c.omegas.empty(), "omegas must not be empty");
      for (double w : c.omegas) need(w > 0.0 && w <= 1.0, "omegas must lie in (0, 1]");
      known_kernel();
      break;
    case Mode::curve_local_known:
      for (double g : c.gamma_grid) need(in_open_unit(g), "gamma_grid values must lie in (0, 1)");
      known_kernel();
      break;
    case Mode::simulate:
      positive_grid(c.shot_durations, "shot_durations");
      need(c.lambda_T > 0.0 && std::isfinite(c.lambda_T), "lambda_T must be positive");
      need(c.horizon_T > 1.0 && std::isfinite(c.horizon_T),
           "horizon_T must exceed 1 (measurement starts after one shot duration)");
      need(c.caches >= 1, "caches must be >= 1");
      need(c.xi >= 1.0, "xi must be >= 1");
      need(c.gamma_c / c.xi > 0.0, "gamma_c / xi must be positive");
      need(1.0 >= c.beta1 && c.beta1 > c.gamma_c && c.gamma_c > c.beta2 && c.beta2 >= 0.0,
           "scores need 1 >= beta1 > gamma_c > beta2 >= 0");
      need(!c.policies.empty(), "policies must not be empty");
      need(c.replications >= 1, "replications must be >= 1");
      if (c.prefetch_period) need(*c.prefetch_period > 0.0, "prefetch_period must be positive");
      break;
  }
  return v;
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream s;
  for (unsigned i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return s.str();
}

std::vector<Artifact> run_experiment(const ExperimentConfig& c) {
  if (auto v = check(c); !v.empty()) throw ValidationError(v.front());
  std::vector<Artifact> out;
  switch (c.mode) {
    case Mode::trace: {
      SnmConfig snm;
      snm.lambda = c.lambda_T / c.shot_duration;
      snm.shot_duration = c.shot_duration;
      snm.mu_bar = c.mu_bar;
      snm.alpha = c.alpha;
      snm.horizon = c.horizon_T * c.shot_duration;
      snm.seed = c.seed;
      const Topology topo = topology_of(c);
      const auto catalog = generate_catalog(snm, topo.correlated());
      const auto trace = generate_requests(catalog, snm, topo);
      std::ostringstream cat, tr;
      write_catalog_json(cat, catalog, snm);
      write_trace_csv(tr, trace);
      out.push_back({c.name + "_catalog.json", cat.str()});
      out.push_back({c.name + "_trace.csv", tr.str()});
      break;
    }
    case Mode::thresholds:
      run_thresholds(c, out);
      break;
    case Mode::curve_hit:
      add_hits(out, c.name, hit_set(c));
      break;
    case Mode::curve_gain:
      add_gains(out, c.name, hit_set(c));
      break;
    case Mode::curve_cluster:
      run_cluster(c, out);
      break;
    case Mode::curve_local_known:
      run_local_known(c, out);
      break;
    case Mode::simulate: {
      const auto points = run_sweep(c);
      std::ostringstream runs, js;
      write_metrics_csv(runs, points);
      write_sweep_json(js, points);
      out.push_back({c.name + "_runs.csv", runs.str()});
      out.push_back({c.name + "_summary.json", js.str()});
      out.push_back({c.name + "_summary.csv", summary_csv(points)});
      break;
    }
  }
  return out;
}

std::vector<ExperimentConfig> figure_bundle(const std::string& figure, Scale scale) {
  std::vector<ExperimentConfig> b;
  if (figure == "fig3") {
    ExperimentConfig c;
    c.mode = Mode::thresholds;
    c.name = "thresholds";
    b.push_back(c);
  } else if (figure == "fig4") {
    ExperimentConfig c;
    c.mode = Mode::curve_hit;
    c.name = "hit";
    c.shot_durations = log_grid(-5.0, 1.0, 4);
    c.num_caches_curve = 1000.0;
    c.xi_curve = 1000.0;
    b.push_back(c);
  } else if (figure == "fig5") {
    ExperimentConfig c;
    c.mode = Mode::curve_cluster;
    c.name = "cluster";
    c.mu_bar = 1.0;
    c.shot_durations = log_grid(-2.0, 4.0, 4);
    c.omegas = {1.0, 0.5, 0.1, 0.01, 0.001};
    b.push_back(c);
  } else if (figure == "fig6") {
    const bool paper = scale == Scale::paper;
    ExperimentConfig t;
    t.mode = Mode::thresholds;
    t.name = "thresholds";
    t.mu_bar = 10.0;
    t.budgets = {0.5, 0.05};
    b.push_back(t);
    ExperimentConfig s;
    s.mode = Mode::simulate;
    s.name = "sim";
    s.mu_bar = 10.0;
    s.shot_durations = fig6_shot_durations();
    s.lambda_T = paper ? 1e4 : 1e3;
    s.caches = paper ? 1000 : 100;
    s.xi = s.caches;
    s.policies = {PolicyKind::lru, PolicyKind::gated_lru, PolicyKind::lru_prefetch};
    b.push_back(s);
    s.name = "beta2_sweep";
    s.shot_durations = {1.0};
    s.policies = {PolicyKind::lru_prefetch};
    for (double beta2 : {0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09}) {
      s.beta2 = beta2;
      b.push_back(s);
    }
  } else {
    throw ValidationError("unknown figure '" + figure + "' (fig3, fig4, fig5, fig6)");
  }
  return b;
}

std::vector<Artifact> reproduce_figure(const std::string& figure, Scale scale, std::uint64_t seed) {
  auto bundle = figure_bundle(figure, scale);
  for (auto& c : bundle) c.seed = seed;
  std::vector<Artifact> out;
  if (figure == "fig4") {
    const HitSet h = hit_set(bundle[0]);
    add_hits(out, "hit", h);
    add_gains(out, "gain", h);
    return out;
  }
  if (figure != "fig6") {
    for (const auto& c : bundle) {
      auto a = run_experiment(c);
      out.insert(out.end(), a.begin(), a.end());
    }
    return out;
  }

  auto a = run_experiment(bundle[0]);
  out.insert(out.end(), a.begin(), a.end());

  const auto points = run_sweep(bundle[1]);
  std::ostringstream runs, js, hit, tx;
  write_metrics_csv(runs, points);
  write_sweep_json(js, points);
  hit << "policy,T,hit_mean,hit_half_width\n" << std::setprecision(10);
  tx << "policy,T,tx_mean,tx_half_width\n" << std::setprecision(10);
  for (const auto& p : points) {
    const std::string head = to_string(p.config.policy) + ',' + fmt(p.config.snm.shot_duration) + ',';
    hit << head << p.hit_mean << ',' << opt(p.hit_half_width) << '\n';
    tx << head << p.tx_mean << ',' << opt(p.tx_half_width) << '\n';
  }
  out.push_back({"sim_runs.csv", runs.str()});
  out.push_back({"sim_summary.json", js.str()});
  out.push_back({"hit_prob.csv", hit.str()});
  out.push_back({"tx_per_request.csv", tx.str()});

  std::vector<SimConfig> sweep_cfgs;
  for (std::size_t i = 2; i < bundle.size(); ++i) {
    const auto c = sim_configs(bundle[i]);
    sweep_cfgs.insert(sweep_cfgs.end(), c.begin(), c.end());
  }
  const auto bp = sweep(sweep_cfgs, bundle[2].replications);
  std::ostringstream b2;
  b2 << "beta2,hit_mean,hit_half_width,tx_mean,tx_half_width\n" << std::setprecision(10);
  for (const auto& p : bp) {
    b2 << p.config.scores.beta2 << ',' << p.hit_mean << ',' << opt(p.hit_half_width) << ','
       << p.tx_mean << ',' << opt(p.tx_half_width) << '\n';
  }
  out.push_back({"beta2_sweep.csv", b2.str()});
  return out;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read config '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_atomic(const fs::path& path, const std::string& data) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
    o.write(data.data(), static_cast<std::streamsize>(data.size()));
    o.flush();
    if (!o) throw std::runtime_error("cannot write '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

// Writes every artifact, then the manifest listing them with their hashes.
void publish(const fs::path& dir, const std::vector<Artifact>& files, const std::string& manifest_name,
             const std::string& verb, const std::string& config_hash, std::uint64_t seed, double seconds) {
  json m;
  m["tool"] = "shotcache";
  m["version"] = SHOTCACHE_VERSION;
  m["verb"] = verb;
  m["config_sha256"] = config_hash;
  m["seed"] = seed;
  m["wall_time_s"] = seconds;
  m["files"] = json::array();
  for (const auto& f : files) {
    write_atomic(dir / f.path, f.data);
    m["files"].push_back({{"path", f.path}, {"sha256", sha256_hex(f.data)}, {"bytes", f.data.size()}});
  }
  write_atomic(dir / manifest_name, m.dump(2) + "\n");
}

void error_record(std::ostream& err, const std::string& kind, const std::vector<std::string>& messages,
                  int code) {
  json e{{"status", "error"}, {"kind", kind}, {"exit_code", code}, {"messages", messages}};
  err << e.dump() << '\n';
}

constexpr const char* kFooter = R"(Config modes (JSON, // comments allowed, unknown keys rejected):
  trace              catalog and request trace          (generate)
  thresholds         threshold tables                   (thresholds)
  curve-hit          hit probability against T          (curve)
  curve-gain         aggregation gain against T         (curve)
  curve-cluster      clustered hit against T            (curve)
  curve-local-known  known-popularity local hit         (curve)
  simulate           LRU / gated / prefetch / oracle    (simulate)
Exit codes: 0 ok, 1 other failure, 2 invalid input, 3 numeric failure.)";

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Caching under time-varying popularity: analytics and simulation.", "shotcache"};
  app.footer(kFooter);
  app.set_version_flag("--version", SHOTCACHE_VERSION);
  app.fallthrough();
  app.require_subcommand(1, 1);

  std::string config_path, out_dir = "out", scale_name = "desk";
  std::uint64_t seed = 0;
  int jobs = 0;
  app.add_option("--config", config_path, "Experiment config file");
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--scale", scale_name, "Simulation scale for reproduce")
      ->check(CLI::IsMember({"desk", "paper"}))
      ->capture_default_str();
  app.add_option("--jobs", jobs, "Worker threads, 0 for the OpenMP default")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  std::map<std::string, std::set<Mode>> verbs{
      {"generate", {Mode::trace}},
      {"thresholds", {Mode::thresholds}},
      {"curve", {Mode::curve_hit, Mode::curve_gain, Mode::curve_cluster, Mode::curve_local_known}},
      {"simulate", {Mode::simulate}},
  };
  app.add_subcommand("generate", "Write a synthetic catalog and request trace");
  app.add_subcommand("thresholds", "Build age-based threshold tables");
  app.add_subcommand("curve", "Compute analytic hit or gain curves");
  app.add_subcommand("simulate", "Run a cache simulation sweep");
  auto* reproduce = app.add_subcommand("reproduce", "Run the canonical bundle of one figure");
  std::string figure;
  reproduce->add_option("figure", figure, "fig3, fig4, fig5 or fig6")
      ->required()
      ->check(CLI::IsMember({"fig3", "fig4", "fig5", "fig6"}));
  app.add_subcommand("validate", "Check a config without computing anything");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kOk : kValidation;
  }
  if (jobs > 0) omp_set_num_threads(jobs);
  const std::string verb = app.get_subcommands().front()->get_name();

  try {
    const auto t0 = std::chrono::steady_clock::now();
    const auto elapsed = [&] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    if (verb == "reproduce") {
      const Scale scale = scale_name == "paper" ? Scale::paper : Scale::desk;
      const std::uint64_t s = seed_opt->count() ? seed : 1;
      const auto files = reproduce_figure(figure, scale, s);
      const json id{{"figure", figure}, {"scale", scale_name}, {"seed", s}};
      publish(fs::path(out_dir) / figure, files, "manifest.json", verb, sha256_hex(id.dump()), s, elapsed());
      out << "wrote " << files.size() << " files to " << (fs::path(out_dir) / figure).string() << '\n';
      return kOk;
    }

    if (config_path.empty()) {
      error_record(err, "validation", {"--config is required for " + verb}, kValidation);
      return kValidation;
    }
    const std::string text = read_file(config_path);
    auto parsed = parse_experiment(text);
    if (parsed.config && seed_opt->count()) parsed.config->seed = seed;
    if (parsed.config && verb != "validate" && !verbs.at(verb).count(parsed.config->mode)) {
      parsed.violations.push_back("mode " + to_string(parsed.config->mode) + " does not belong to verb " +
                                  verb);
      parsed.config.reset();
    }

    if (verb == "validate") {
      json report{{"config", config_path}, {"valid", parsed.violations.empty()},
                  {"violations", parsed.violations}};
      out << report.dump(2) << '\n';
      return parsed.violations.empty() ? kOk : kValidation;
    }
    if (!parsed.config) {
      error_record(err, "validation", parsed.violations, kValidation);
      return kValidation;
    }
    const ExperimentConfig& c = *parsed.config;
    const auto files = run_experiment(c);
    json canon = json::parse(text, nullptr, true, true);
    canon["seed"] = c.seed;
    publish(out_dir, files, c.name + "_manifest.json", verb, sha256_hex(canon.dump()), c.seed, elapsed());
    out << "wrote " << files.size() << " files to " << out_dir << '\n';
    return kOk;
  } catch (const ValidationError& e) {
    error_record(err, "validation", {e.what()}, kValidation);
    return kValidation;
  } catch (const NumericError& e) {
    error_record(err, "numeric", {e.what()}, kNumeric);
    return kNumeric;
  } catch (const std::exception& e) {
    error_record(err, "failure", {e.what()}, kFailure);
    return kFailure;
  }
}

}  // namespace shotcache::cli
