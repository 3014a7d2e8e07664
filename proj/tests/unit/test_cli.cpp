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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "shotcache/cli.hpp"

namespace fs = std::filesystem;
using namespace shotcache;
using namespace shotcache::cli;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Run {
  int code;
  std::string out, err;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int rc = run(args, out, err);
  return {rc, out.str(), err.str()};
}

// Fresh scratch directory per test case.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("shotcache_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string write(const std::string& file, const std::string& text) const {
    std::ofstream(dir / file) << text;
    return (dir / file).string();
  }
};

}  // namespace

TEST_CASE("help output matches the golden files") {
  const auto top = invoke({"--help"});
  CHECK(top.code == 0);
  CHECK(top.out == slurp(fs::path(SHOTCACHE_GOLDEN_DIR) / "help.txt"));
  for (const char* word : {"generate", "thresholds", "curve", "simulate", "reproduce", "validate", "--config",
                           "--out", "--seed", "--scale", "--jobs", "curve-local-known", "trace"}) {
    CHECK(top.out.find(word) != std::string::npos);
  }
  const auto rep = invoke({"reproduce", "--help"});
  CHECK(rep.out == slurp(fs::path(SHOTCACHE_GOLDEN_DIR) / "help_reproduce.txt"));
  CHECK(invoke({}).code == kValidation);
  CHECK(invoke({"reproduce", "fig9"}).code == kValidation);
}

TEST_CASE("config parsing") {
  auto r = parse_experiment(R"({
    // comments are fine
    "mode": "curve-hit", "mu_bar": 20,
    "shot_durations": {"from": 0.001, "to": 10, "points": 5}
  })");
  REQUIRE(r.config);
  CHECK(r.config->shot_durations.size() == 5);
  CHECK(r.config->shot_durations.front() == doctest::Approx(1e-3));
  CHECK(r.config->shot_durations.back() == doctest::Approx(10.0));
  CHECK(r.config->name == "curve-hit");

  r = parse_experiment(R"({"mode": "curve-hit", "shot_durations": [1], "omegas": [0.1], "colour": 1})");
  CHECK_FALSE(r.config);
  CHECK(r.violations.size() == 2);  // both unknown keys are listed

  r = parse_experiment(R"({"mode": "curve-hit", "shot_durations": []})");
  CHECK_FALSE(r.config);

  r = parse_experiment(R"({"mode": "simulate", "gamma_c": 0.1, "beta2": 0.2, "shot_durations": [1]})");
  REQUIRE(r.violations.size() == 1);
  CHECK(r.violations[0].find("beta1 > gamma_c > beta2") != std::string::npos);

  r = parse_experiment(R"({"mode": "thresholds", "alpha": 1.0, "gamma_c": 2})");
  CHECK(r.violations.size() == 2);

  // bad count, unknown policy, and so no policy left
  r = parse_experiment(R"({"mode": "simulate", "shot_durations": [1], "caches": -3, "policies": ["fifo"]})");
  CHECK(r.violations.size() == 3);

  CHECK_FALSE(parse_experiment("{").config);
  CHECK_FALSE(parse_experiment(R"({"mode": "plot"})").config);
  CHECK_FALSE(parse_experiment(R"({"mode": "curve-gain", "shot_durations": [1]})").config);

  r = parse_experiment(R"({"mode": "simulate", "shot_durations": [0.2, 1], "caches": 100, "xi": 100,
                           "mu_bar": 10, "lambda_T": 1000})");
  REQUIRE(r.config);
  CHECK(r.config->policies.size() == 3);
  CHECK(check(*r.config).empty());
}

TEST_CASE("validate verb") {
  Scratch s("validate");
  const auto bad = s.write("bad.json", R"({"mode": "simulate", "beta2": 0.2, "alpha": 1, "shot_durations": [1]})");
  const auto r = invoke({"validate", "--config", bad});
  CHECK(r.code == kValidation);
  const auto report = nlohmann::json::parse(r.out);
  CHECK(report["valid"] == false);
  CHECK(report["violations"].size() == 2);

  const auto good = s.write("good.json", R"({"mode": "simulate", "mu_bar": 10, "caches": 1000, "xi": 1000,
      "lambda_T": 10000, "shot_durations": [0.2, 0.5, 1]})");
  const auto ok = invoke({"validate", "--config", good});
  CHECK(ok.code == kOk);
  CHECK(nlohmann::json::parse(ok.out)["violations"].empty());
  CHECK(std::distance(fs::directory_iterator(s.dir), fs::directory_iterator()) == 2);  // nothing written
}

TEST_CASE("runs write artifacts and a manifest") {
  Scratch s("run");
  const auto cfg = s.write("t.json", R"({"mode": "thresholds", "name": "abt", "budgets": [0.5]})");
  const std::string out = (s.dir / "out").string();
  auto r = invoke({"thresholds", "--config", cfg, "--out", out});
  REQUIRE(r.code == kOk);
  const auto m = nlohmann::json::parse(slurp(s.dir / "out" / "abt_manifest.json"));
  CHECK(m["verb"] == "thresholds");
  CHECK(m["seed"] == 1);
  CHECK(m["config_sha256"].get<std::string>().size() == 64);
  REQUIRE(m["files"].size() == 4);
  for (const auto& f : m["files"]) {
    const auto data = slurp(s.dir / "out" / f["path"].get<std::string>());
    CHECK(sha256_hex(data) == f["sha256"]);
    CHECK(data.size() == f["bytes"]);
  }
  // no temp files left behind
  for (const auto& e : fs::directory_iterator(s.dir / "out")) CHECK(e.path().extension() != ".tmp");

  // identical config and seed reproduce identical hashes
  r = invoke({"thresholds", "--config", cfg, "--out", out});
  const auto m2 = nlohmann::json::parse(slurp(s.dir / "out" / "abt_manifest.json"));
  CHECK(m2["files"] == m["files"]);
  CHECK(m2["config_sha256"] == m["config_sha256"]);

  // the verb must fit the mode
  CHECK(invoke({"simulate", "--config", cfg, "--out", out}).code == kValidation);
  CHECK(invoke({"thresholds", "--out", out}).code == kValidation);
  CHECK(invoke({"thresholds", "--config", (s.dir / "missing.json").string()}).code == kValidation);
}

TEST_CASE("bad input writes nothing") {
  Scratch s("empty");
  const auto cfg = s.write("c.json", R"({"mode": "curve-hit", "shot_durations": []})");
  const auto r = invoke({"curve", "--config", cfg, "--out", (s.dir / "out").string()});
  CHECK(r.code == kValidation);
  CHECK_FALSE(fs::exists(s.dir / "out"));
  const auto rec = nlohmann::json::parse(r.err);
  CHECK(rec["kind"] == "validation");
  CHECK(rec["exit_code"] == 2);
}

TEST_CASE("numeric failure exit code") {
  Scratch s("numeric");
  // theta T far beyond the table size cap
  const auto cfg = s.write("c.json", R"({"mode": "thresholds", "mu_bar": 1e7, "shot_duration": 100})");
  const auto r = invoke({"thresholds", "--config", cfg, "--out", (s.dir / "out").string()});
  CHECK(r.code == kNumeric);
  CHECK(nlohmann::json::parse(r.err)["kind"] == "numeric");
}

TEST_CASE("seed override and simulate artifacts") {
  Scratch s("sim");
  const auto cfg = s.write("c.json", R"({"mode": "simulate", "name": "s", "mu_bar": 10, "lambda_T": 50,
      "caches": 4, "xi": 4, "replications": 2, "shot_durations": [1], "policies": ["lru", "gated_lru"]})");
  const auto out = (s.dir / "out").string();
  REQUIRE(invoke({"simulate", "--config", cfg, "--out", out, "--seed", "9", "--jobs", "1"}).code == kOk);
  const auto runs = slurp(s.dir / "out" / "s_runs.csv");
  CHECK(runs.find(",9,") != std::string::npos);
  CHECK(runs.find(",10,") != std::string::npos);
  const auto summary = nlohmann::json::parse(slurp(s.dir / "out" / "s_summary.json"));
  CHECK(summary.size() == 2);
  CHECK(nlohmann::json::parse(slurp(s.dir / "out" / "s_manifest.json"))["seed"] == 9);
}

TEST_CASE("generate and reproduce") {
  Scratch s("gen");
  const auto cfg = s.write("c.json", R"({"mode": "trace", "name": "tr", "lambda_T": 30, "caches": 2,
      "correlated": true, "kernel": {"family": "quartic"}})");
  const auto out = (s.dir / "out").string();
  REQUIRE(invoke({"generate", "--config", cfg, "--out", out}).code == kOk);
  std::istringstream cat(slurp(s.dir / "out" / "tr_catalog.json"));
  CHECK_FALSE(read_catalog_json(cat).empty());

  REQUIRE(invoke({"reproduce", "fig3", "--out", out}).code == kOk);
  const auto m = nlohmann::json::parse(slurp(s.dir / "out" / "fig3" / "manifest.json"));
  CHECK(m["files"].size() == 3);
  CHECK(fs::exists(s.dir / "out" / "fig3" / "thresholds_marginal.csv"));
  // paper scale is the same for an analytic figure
  REQUIRE(invoke({"reproduce", "fig3", "--scale", "paper", "--out", (s.dir / "p").string()}).code == kOk);
  const auto mp = nlohmann::json::parse(slurp(s.dir / "p" / "fig3" / "manifest.json"));
  CHECK(mp["files"] == m["files"]);
}

TEST_CASE("figure bundles keep the dimensionless parameters") {
  const auto desk = figure_bundle("fig6", Scale::desk);
  const auto paper = figure_bundle("fig6", Scale::paper);
  REQUIRE(desk.size() == paper.size());
  for (std::size_t i = 0; i < desk.size(); ++i) {
    CHECK(desk[i].alpha == paper[i].alpha);
    CHECK(desk[i].gamma_c == paper[i].gamma_c);
    CHECK(desk[i].beta1 == paper[i].beta1);
    CHECK(desk[i].beta2 == paper[i].beta2);
    CHECK(check(desk[i]).empty());
  }
  CHECK(desk[1].lambda_T == 1000.0);
  CHECK(paper[1].lambda_T == 10000.0);
  CHECK(paper[1].caches == 1000);
  CHECK(paper[1].xi == 1000.0);
  const auto f5 = figure_bundle("fig5", Scale::desk);
  CHECK(f5[0].omegas == std::vector<double>{1.0, 0.5, 0.1, 0.01, 0.001});
  CHECK_THROWS(figure_bundle("fig7", Scale::desk));
}
