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

#include "shotcache/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "shotcache/errors.hpp"
#include "shotcache/quadrature.hpp"
#include "shotcache/rng.hpp"

namespace shotcache {
namespace {

constexpr std::uint64_t kArrivalStream = ~std::uint64_t{0};
constexpr double kMaxEventsPerShot = 2e9;

struct Registry {
  std::mutex mu;
  std::map<std::string, KernelFactory> families;
};

Registry& registry() {
  static Registry r;
  static std::once_flag once;
  std::call_once(once, [] {
    r.families["quartic"] = [](std::span<const double> params) -> std::function<double(double)> {
      require(params.empty(), "kernel quartic: takes no parameters");
      return [](double d) {
        const double u = 1.0 - 2.0 * d;
        return 5.0 * u * u * u * u;
      };
    };
  });
  return r;
}

double integrate_profile(const std::function<double(double)>& g, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  constexpr int kPanels = 8;
  double acc = 0.0;
  const double w = (hi - lo) / kPanels;
  for (int i = 0; i < kPanels; ++i) acc += integrate(g, lo + i * w, lo + (i + 1) * w, 32);
  return acc;
}

}  // namespace

void SnmConfig::validate() const {
  require(std::isfinite(lambda) && lambda > 0.0, "snm: lambda must be positive");
  require(std::isfinite(shot_duration) && shot_duration > 0.0, "snm: shot_duration must be positive");
  require(std::isfinite(mu_bar) && mu_bar > 0.0, "snm: mu_bar must be positive");
  require(alpha >= 0.0 && alpha < 1.0, "snm: alpha must lie in [0, 1)");
  require(std::isfinite(horizon) && horizon > 0.0, "snm: horizon must be positive");
}

double torus_distance(double x, double y) {
  double d = std::fmod(std::abs(x - y), 1.0);
  return std::min(d, 1.0 - d);
}

Kernel::Kernel(std::string name, std::function<double(double)> profile)
    : name_(std::move(name)), g_(std::move(profile)) {
  require(static_cast<bool>(g_), "kernel " + name_ + ": empty profile");
  constexpr int kChecks = 2048;
  double prev = g_(0.0);
  for (int i = 1; i <= kChecks; ++i) {
    const double cur = g_(0.5 * i / kChecks);
    require(std::isfinite(cur) && cur >= 0.0, "kernel " + name_ + ": profile must be finite and >= 0");
    require(cur <= prev + 1e-12, "kernel " + name_ + ": profile must be nonincreasing on [0, 1/2]");
    prev = cur;
  }
  const double mass = 2.0 * integrate_profile(g_, 0.0, 0.5);
  require(std::abs(mass - 1.0) <= 1e-9, "kernel " + name_ + ": profile is not normalized");
}

double Kernel::inverse(double t) const {
  if (t > g_(0.0)) return 0.0;
  if (t <= g_(0.5)) return 0.5;
  double lo = 0.0;  // g(lo) >= t
  double hi = 0.5;  // g(hi) < t
  for (int i = 0; i < 80 && hi - lo > 1e-17; ++i) {
    const double mid = 0.5 * (lo + hi);
    (g_(mid) >= t ? lo : hi) = mid;
  }
  return lo;
}

double Kernel::primitive(double d) const {
  return integrate_profile(g_, 0.0, std::clamp(d, 0.0, 0.5));
}

void register_kernel(const std::string& family, KernelFactory factory) {
  require(!family.empty() && static_cast<bool>(factory), "register_kernel: need a name and a factory");
  Registry& r = registry();
  std::lock_guard lock(r.mu);
  r.families[family] = std::move(factory);
}

std::vector<std::string> kernel_families() {
  Registry& r = registry();
  std::lock_guard lock(r.mu);
  std::vector<std::string> out;
  for (const auto& [name, f] : r.families) out.push_back(name);
  return out;
}

Kernel make_kernel(const KernelSpec& spec) {
  KernelFactory factory;
  {
    Registry& r = registry();
    std::lock_guard lock(r.mu);
    const auto it = r.families.find(spec.family);
    require(it != r.families.end(), "unknown kernel family: " + spec.family);
    factory = it->second;
  }
  return Kernel(spec.family, factory(spec.params));
}

double smoothed_kernel(const Kernel& kernel, double omega, double x) {
  require(omega > 0.0 && omega <= 1.0, "smoothed_kernel: omega must lie in (0, 1]");
  x -= std::floor(x);
  // d(x, y) has kinks where y = x or y = x + 1/2 (mod 1).
  std::vector<double> cuts{0.0, omega};
  for (int k = -3; k <= 3; ++k) {
    const double c = x + 0.5 * k;
    if (c > 0.0 && c < omega) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  return integrate_panels([&](double y) { return kernel(x, y); }, cuts, 32);
}

void Topology::validate() const {
  require(num_caches >= 1, "topology: need at least one cache");
  if (kernel) {
    require(cache_features.size() == num_caches,
            "topology: cache_features must have one entry per cache");
    for (double y : cache_features) {
      require(y >= 0.0 && y <= 1.0, "topology: cache features must lie in [0, 1]");
    }
    make_kernel(*kernel);
  }
}

std::vector<double> local_popularities(const Shot& shot, const Topology& topology) {
  require(topology.correlated(), "local_popularity: topology has no kernel");
  require(shot.feature.has_value(), "local_popularity: shot has no feature");
  require(topology.cache_features.size() == topology.num_caches,
          "local_popularity: cache_features must have one entry per cache");
  const Kernel kernel = make_kernel(*topology.kernel);
  std::vector<double> w(topology.num_caches);
  double total = 0.0;
  for (std::uint32_t l = 0; l < topology.num_caches; ++l) {
    w[l] = kernel(*shot.feature, topology.cache_features[l]);
    total += w[l];
  }
  if (!(total > 0.0)) throw NumericError("local_popularity: kernel vanishes at every cache");
  for (double& v : w) v = shot.volume * v / total;
  return w;
}

double local_popularity(const Shot& shot, std::uint32_t cache, const Topology& topology) {
  require(cache < topology.num_caches, "local_popularity: cache index out of range");
  return local_popularities(shot, topology)[cache];
}

std::vector<Shot> generate_catalog(const SnmConfig& config, bool with_features) {
  config.validate();
  const ParetoPrior prior = config.prior();
  KeyedStream arrivals(config.seed, kArrivalStream, StreamTag::catalog);
  std::exponential_distribution<double> gap(config.lambda);
  std::vector<Shot> out;
  out.reserve(static_cast<std::size_t>(config.lambda * (config.horizon + config.shot_duration) * 1.1) + 16);
  double t = -config.shot_duration;
  for (std::uint32_t id = 0;; ++id) {
    t += gap(arrivals);
    if (t >= config.horizon) break;
    require(id < std::numeric_limits<std::uint32_t>::max(), "catalog: too many shots");
    KeyedStream own(config.seed, id, StreamTag::catalog);
    Shot s;
    s.id = id;
    s.arrival_time = t;
    s.z = own.open_unit();
    s.volume = prior.volume(s.z);
    if (with_features) {
      KeyedStream feat(config.seed, id, StreamTag::features);
      s.feature = std::uniform_real_distribution<double>(0.0, 1.0)(feat);
    }
    out.push_back(s);
  }
  return out;
}

RequestTrace generate_requests(std::span<const Shot> catalog, const SnmConfig& config,
                               const Topology& topology) {
  config.validate();
  topology.validate();
  RequestTrace trace;
  trace.start = -config.shot_duration;
  trace.horizon = config.horizon;
  const double T = config.shot_duration;
  for (const Shot& s : catalog) {
    require(s.arrival_time < s.arrival_time + T, "requests: degenerate shot");
    KeyedStream times(config.seed, s.id, StreamTag::requests);
    KeyedStream route(config.seed, s.id, StreamTag::routing);
    const double mean = s.volume * T;
    if (mean > kMaxEventsPerShot) throw NumericError("requests: shot volume too large to simulate");
    const std::uint64_t count = std::poisson_distribution<std::uint64_t>(mean)(times);
    std::uniform_real_distribution<double> when(0.0, T);
    std::uniform_int_distribution<std::uint32_t> uniform_cache(0, topology.num_caches - 1);
    std::discrete_distribution<std::uint32_t> local;
    if (topology.correlated()) {
      const auto rates = local_popularities(s, topology);
      local = std::discrete_distribution<std::uint32_t>(rates.begin(), rates.end());
    }
    for (std::uint64_t i = 0; i < count; ++i) {
      const double t = s.arrival_time + when(times);
      std::uint32_t cache = 0;
      if (topology.correlated()) {
        cache = local(route);
      } else if (topology.num_caches > 1) {
        cache = uniform_cache(route);
      }
      if (t < config.horizon) trace.events.push_back({t, s.id, cache});
    }
  }
  std::sort(trace.events.begin(), trace.events.end(), [](const RequestEvent& a, const RequestEvent& b) {
    return a.time < b.time || (a.time == b.time && a.content_id < b.content_id);
  });
  return trace;
}

std::vector<std::uint64_t> cache_counts(const RequestTrace& trace, std::uint32_t num_caches) {
  std::vector<std::uint64_t> out(num_caches, 0);
  for (const auto& e : trace.events) {
    require(e.cache_id < num_caches, "cache_counts: cache id out of range");
    ++out[e.cache_id];
  }
  return out;
}

void write_trace_csv(std::ostream& out, const RequestTrace& trace) {
  out << "time,content_id,cache_id\n";
  out << std::setprecision(17);
  for (const auto& e : trace.events) out << e.time << ',' << e.content_id << ',' << e.cache_id << '\n';
}

RequestTrace read_trace_csv(std::istream& in) {
  RequestTrace trace;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == "time,content_id,cache_id",
          "trace csv: bad header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    RequestEvent e;
    char c1 = 0, c2 = 0;
    row >> e.time >> c1 >> e.content_id >> c2 >> e.cache_id;
    require(!row.fail() && c1 == ',' && c2 == ',', "trace csv: malformed row: " + line);
    trace.events.push_back(e);
  }
  if (!trace.events.empty()) {
    trace.start = trace.events.front().time;
    trace.horizon = trace.events.back().time;
  }
  return trace;
}

void write_catalog_json(std::ostream& out, std::span<const Shot> catalog, const SnmConfig& config) {
  nlohmann::json j;
  j["config"] = {{"lambda", config.lambda},         {"shot_duration", config.shot_duration},
                 {"mu_bar", config.mu_bar},         {"alpha", config.alpha},
                 {"horizon", config.horizon},       {"seed", config.seed}};
  auto& shots = j["shots"] = nlohmann::json::array();
  for (const Shot& s : catalog) {
    nlohmann::json row = {{"id", s.id}, {"arrival_time", s.arrival_time}, {"volume", s.volume}, {"z", s.z}};
    if (s.feature) row["feature"] = *s.feature;
    shots.push_back(std::move(row));
  }
  out << j.dump(1) << '\n';
}

std::vector<Shot> read_catalog_json(std::istream& in) {
  const auto j = nlohmann::json::parse(in);
  std::vector<Shot> out;
  for (const auto& row : j.at("shots")) {
    Shot s;
    s.id = row.at("id").get<std::uint32_t>();
    s.arrival_time = row.at("arrival_time").get<double>();
    s.volume = row.at("volume").get<double>();
    s.z = row.at("z").get<double>();
    if (row.contains("feature")) s.feature = row.at("feature").get<double>();
    out.push_back(s);
  }
  return out;
}

}  // namespace shotcache
