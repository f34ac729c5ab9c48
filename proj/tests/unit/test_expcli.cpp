#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "basinlab/config.hpp"
#include "basinlab/experiments.hpp"

using namespace basinlab;
using nlohmann::json;

namespace {

const std::filesystem::path kSource = BASINLAB_SOURCE_DIR;

std::map<std::string, std::string> by_name(const CommandResult& r) {
  std::map<std::string, std::string> out;
  for (const auto& f : r.files) out[f.name] = f.content;
  return out;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

std::string field_of(const std::string& text, const std::string& tag = "") {
  try {
    parse_config(text, tag);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

}  // namespace

TEST_CASE("shipped configs equal the built-in defaults") {
  for (const auto& tag : experiment_tags()) {
    INFO(tag);
    const ExperimentConfig loaded = load_config((kSource / "configs" / (tag + ".json")).string(), tag);
    CHECK(config_to_json(loaded) == config_to_json(default_config(tag)));
  }
  const ExperimentConfig ipd = load_config((kSource / "configs" / "ablate_ipd.json").string(), "ablate");
  CHECK(ipd.make_game().kind() == GameKind::ipd);
  CHECK(ipd.make_game().param_dim() == 10);
}

TEST_CASE("defaults per tag") {
  CHECK(default_config("ablate").arm_list().size() == 4);
  CHECK(default_config("cooldown").seeds == 80);
  CHECK(default_config("cooldown").schedule.total_steps == 2000);
  CHECK(default_config("sweep").grid.n1 == 21);
  CHECK(default_config("sweep").outer_schedule().lambda == default_config("sweep").lambda);
  CHECK_THROWS_AS(default_config("nope"), ConfigError);
}

TEST_CASE("config errors name the offending field") {
  CHECK(field_of(R"({"experiment":"sweep","bogus":1})") == "bogus");
  CHECK(field_of(R"({"experiment":"sweep","schedule":{"alfa":0.1}})") == "schedule.alfa");
  CHECK(field_of(R"({"experiment":"sweep","seeds":"100"})") == "seeds");
  CHECK(field_of(R"({"experiment":"sweep","seeds":0})") == "seeds");
  CHECK(field_of(R"({"experiment":"sweep","seeds":2.5})") == "seeds");
  CHECK(field_of(R"({"experiment":"sweep","tau":1.0})") == "tau");
  CHECK(field_of(R"({"experiment":"sweep","grid":{"lo":0.9,"hi":0.1}})").rfind("grid", 0) == 0);
  CHECK(field_of(R"({"experiment":"sweep","arms":["pg","bogus"]})").rfind("arms", 0) == 0);
  CHECK(field_of(R"({"experiment":"lambda","lambda_sweep":{"lambdas":[0.5,1.0]}})").rfind("lambda_sweep", 0) == 0);
  CHECK(field_of(R"({"experiment":"sadiag","sadiag":{"repeats":10}})") == "sadiag.repeats");
  CHECK(field_of(R"({"experiment":"sweep","game":{"kind":"ipd","payoffs":{"X":1}}})").rfind("game", 0) == 0);
  CHECK(field_of(R"({"experiment":"ablate"})", "sweep") == "experiment");
  CHECK(field_of(R"({"experiment":"unknown"})") == "experiment");
  CHECK(field_of(R"([1, 2])") == "<document>");
  CHECK(field_of(R"({})", "sweep") == "<accepted>");
}

TEST_CASE("parse errors report line and column") {
  try {
    parse_config("{\n  \"seeds\": ,\n  \"tau\": 0.8\n}", "sweep");
    FAIL("expected a parse error");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    INFO(what);
    CHECK(e.field() == "<document>");
    CHECK(what.find("line 2") != std::string::npos);
    CHECK(what.find("column") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config("/nonexistent/config.json", "sweep"), ConfigError);
}

TEST_CASE("configs round-trip through json") {
  ExperimentConfig cfg = default_config("cooldown");
  cfg.seeds = 7;
  cfg.lambda = 0.6;
  cfg.grid = GridSpec{3, 4, 0.1, 0.9};
  cfg.schedule.step_rule = StepRule::harmonic;
  cfg.schedule.c = 3.0;
  cfg.cooldown.cool_rule = "geometric";
  cfg.cooldown.rho_cool = 0.9;
  cfg.mode = Mode::sampled;
  cfg.batch = BatchSpec{12, 30, true};
  cfg.game = game_to_json(make_ipd(IpdPayoffs{4.0, 3.0, 1.0, 0.0}, 0.9));
  const json doc = config_to_json(cfg);
  const ExperimentConfig back = config_from_json(doc, "cooldown");
  CHECK(config_to_json(back) == doc);
  CHECK(back.schedule.step_rule == StepRule::harmonic);
  CHECK(back.make_game().reward(0, 0, 2) == 1.0);
  CHECK(back.make_game().reward(0, 0, 0) == doctest::Approx(3.0 / 4.0));
}

TEST_CASE("sha256 digests") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("a tiny sweep emits the documented files and is deterministic") {
  ExperimentConfig cfg = default_config("sweep");
  cfg.grid = GridSpec{3, 3, 0.05, 0.95};
  cfg.schedule.total_steps = 60;
  const CommandResult a = run_experiment(cfg);
  const auto files = by_name(a);
  for (const char* name : {"grid.json", "cells.csv", "separatrix.csv", "summary.json"}) CHECK(files.count(name) == 1);
  const auto cells = lines(files.at("cells.csv"));
  CHECK(cells.front() == "arm,i,j,p1,p2,successes,trials,rate,diverged,mean_metric");
  CHECK(cells.size() == 1 + 2 * 9);
  for (std::size_t k = 1; k < cells.size(); ++k) CHECK(split(cells[k]).size() == 10);
  CHECK(lines(files.at("separatrix.csv")).front() == "arm,line,point,p1,p2,closed");
  const json summary = json::parse(files.at("summary.json"));
  CHECK(summary.contains("coverage"));
  CHECK(summary["reference_contour"] == "pg");

  const CommandResult b = run_experiment(cfg);
  REQUIRE(a.files.size() == b.files.size());
  for (std::size_t k = 0; k < a.files.size(); ++k) {
    CHECK(a.files[k].name == b.files[k].name);
    CHECK(a.files[k].content == b.files[k].content);
  }
}

TEST_CASE("ablation at zero shaping gives identical rows") {
  ExperimentConfig cfg = default_config("ablate");
  cfg.seeds = 5;
  cfg.lambda = 0.0;
  cfg.schedule.total_steps = 40;
  const auto files = by_name(run_experiment(cfg));
  const auto rows = lines(files.at("ablation.csv"));
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "arm,successes,trials,rate,wilson_lo,wilson_hi,diverged");
  const auto tail = [](const std::string& row) { return row.substr(row.find(',')); };
  for (std::size_t k = 2; k < rows.size(); ++k) CHECK(tail(rows[k]) == tail(rows[1]));

  // Final parameters agree per seed across arms as well.
  const auto values = [](const std::string& row) { return row.substr(row.find(',', row.find(',') + 1)); };
  const auto runs = lines(files.at("runs.csv"));
  REQUIRE(runs.size() == 1 + 4 * 5);
  for (std::size_t seed = 0; seed < 5; ++seed)
    for (std::size_t arm = 1; arm < 4; ++arm) CHECK(values(runs[1 + 4 * seed + arm]) == values(runs[1 + 4 * seed]));
}

TEST_CASE("cooldown with the handoff at the horizon equals constant shaping") {
  ExperimentConfig cfg = default_config("cooldown");
  cfg.seeds = 3;
  cfg.schedule.total_steps = 40;
  cfg.cooldown.handoff = 40;
  const json report = run_experiment(cfg).report;
  const json& constant = report["schedules"]["constant"];
  const json& cool = report["schedules"]["shape_then_cool"];
  for (const char* key : {"successes", "trials", "mean_second_half_sd", "max_second_half_sd"})
    CHECK(constant[key] == cool[key]);
  CHECK(report["cool_within_constant_interval"] == true);
}

TEST_CASE("outputs and manifest") {
  ExperimentConfig cfg = default_config("tausweep");
  cfg.seeds = 3;
  cfg.schedule.total_steps = 20;
  const auto dir = std::filesystem::temp_directory_path() / "basinlab_test_expcli";
  std::filesystem::remove_all(dir);
  const CommandResult r = run_experiment(cfg);
  const json manifest = write_outputs(dir.string(), cfg, r, "2026-01-01T00:00:00Z", "2026-01-01T00:00:01Z");
  CHECK(manifest["experiment"] == "tausweep");
  CHECK(manifest["version"] == kToolVersion);
  CHECK(manifest["master_seed"] == cfg.master_seed);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  const auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(manifest["config_sha256"] == sha256_hex(slurp(dir / "config.json")));
  CHECK(json::parse(slurp(dir / "manifest.json")) == manifest);
  CHECK(manifest["files"].size() == r.files.size() + 1);
  for (const auto& f : manifest["files"]) {
    const std::string content = slurp(dir / f["name"].get<std::string>());
    CHECK(f["bytes"] == content.size());
    CHECK(f["sha256"] == sha256_hex(content));
  }
  std::filesystem::remove_all(dir);
}
