// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "twr/harness.hpp"

using namespace twr;

namespace {

ExperimentPlan small_plan(Stage stage, long trials = 30) {
  ExperimentPlan p;
  p.stage = stage;
  p.trials = trials;
  p.seed = 7;
  p.p_grid_db = {0.0, 10.0, 20.0};
  p.threads = 1;
  return p;
}

}  // namespace

TEST_CASE("empty config gives the reference defaults") {
  const ExperimentConfig c = parse_config("");
  CHECK(c.system.n1 == 4);
  CHECK(c.system.n2 == 4);
  CHECK(c.system.nr == 4);
  CHECK(c.system.l_r == 4);
  CHECK(c.system.l == 8);
  CHECK(c.system.sigma1_sq == 1.0);
  CHECK(c.system.sigma2_sq == 1.0);
  CHECK(c.system.sigmar_sq == 1.0);
  CHECK(c.system.spacing_s1 == 0.05);
  CHECK(c.system.spacing_r == 0.25);
  CHECK(c.plan.trials == 1000);
  CHECK(c.plan.scenario == Scenario::all_strong);
  CHECK(c.plan.variant == DeltaVariant::derived_matrix);
  CHECK(c.plan.p_grid_db.size() == 7);
}

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse_config(
      "# comment\n"
      "scenario = s1_weak\n"
      "trials = 25   # trailing comment\n"
      "p_grid_db = 0, 7.5\n"
      "schemes = proposed,orthogonal\n"
      "variant = paper_scalar\n"
      "nmse_mode = ratio_of_averages\n"
      "seed = 99\n");
  CHECK(c.system.spacing_s1 == 0.25);
  CHECK(c.system.spacing_s2 == 0.05);
  CHECK(c.system.spacing_r == 0.25);
  CHECK(c.plan.trials == 25);
  CHECK(c.plan.p_grid_db == std::vector<double>{0.0, 7.5});
  CHECK(c.plan.schemes.size() == 2);
  CHECK(c.plan.variant == DeltaVariant::paper_scalar);
  CHECK(c.plan.nmse_mode == NmseMode::ratio_of_averages);
  CHECK(c.plan.seed == 99);
  // explicit spacing wins over the scenario regardless of order
  CHECK(parse_config("spacing_s1 = 0.1\nscenario = s1_weak\n").system.spacing_s1 == 0.1);
}

TEST_CASE("config errors carry line and key") {
  auto line_of = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("trials = 0\n") == 0);
  CHECK_THROWS_WITH_AS(parse_config("trials = 0\n"), doctest::Contains("'trials'"), ConfigError);
  CHECK(line_of("\n\nnonsense\n") == 3);
  CHECK(line_of("n1 = 4\nn1 = 5\n") == 2);
  CHECK(line_of("bogus = 1\n") == 1);
  CHECK(line_of("trials = ten\n") == 1);
  CHECK(line_of("scenario = none\n") == 1);
  CHECK(line_of("p_grid_db = 0, x\n") == 1);
  CHECK(line_of("l = 7\n") == 0);
  CHECK_THROWS_WITH_AS(parse_config("l = 7\n"), doctest::Contains("'l'"), ConfigError);
  CHECK_THROWS_AS(parse_config("stage = backward\nschemes = proposed\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.txt"), ConfigError);
}

TEST_CASE("stage-one NMSE: optimal beats diagonal and scales with 1 / P") {
  ExperimentPlan p = small_plan(Stage::backward, 400);
  const auto recs = run_stage1_experiment(SystemConfig{}, p);
  REQUIRE(recs.size() == 6);
  for (std::size_t j = 0; j < 3; ++j) {
    const auto& opt = recs[j];
    const auto& diag = recs[j + 3];
    CHECK(opt.scheme == "optimal");
    CHECK(diag.scheme == "diagonal");
    CHECK(opt.nmse <= diag.nmse);
    CHECK(opt.failures == 0);
    CHECK(opt.nmse > 0.0);
  }
  // common random numbers make the optimal-pilot error exactly proportional to 1 / P
  CHECK(recs[0].nmse / recs[1].nmse == doctest::Approx(10.0).epsilon(0.1));
}

TEST_CASE("stage-two experiment produces every scheme") {
  ExperimentPlan p = small_plan(Stage::forward, 20);
  const auto recs = run_stage2_experiment(SystemConfig{}, p);
  CHECK(recs.size() == 9);
  for (const auto& r : recs) {
    CHECK(r.nmse > 0.0);
    CHECK(r.trials == 20);
    CHECK(r.failures == 0);
    CHECK(r.std_error > 0.0);
  }
}

TEST_CASE("results do not depend on the worker count and earlier trials are stable") {
  ExperimentPlan p = small_plan(Stage::forward, 12);
  p.p_grid_db = {5.0};
  const auto a = format_csv(run_stage2_experiment(SystemConfig{}, p));
  p.threads = 3;
  const auto b = format_csv(run_stage2_experiment(SystemConfig{}, p));
  CHECK(a == b);

  // trial t always uses stream t: the mean over 12 trials is recoverable from 24
  ExperimentPlan q = small_plan(Stage::backward, 12);
  q.schemes = {"optimal"};
  const double m12 = run_stage1_experiment(SystemConfig{}, q)[0].nmse;
  q.trials = 1;
  CHECK(run_stage1_experiment(SystemConfig{}, q)[0].nmse > 0.0);
  q.trials = 12;
  CHECK(run_stage1_experiment(SystemConfig{}, q)[0].nmse == m12);
}

TEST_CASE("CSV emission sorts, round-trips and is order independent") {
  ExperimentRecord r1{"all_strong", "proposed", 5.0, 0.123456789012345678, 10, 3};
  ExperimentRecord r2{"all_strong", "orthogonal", 0.0, 1.0 / 3.0, 10, 3};
  ExperimentRecord r3{"all_strong", "orthogonal", -5.0, 2.0e-7, 10, 3};
  const std::string a = format_csv({r1, r2, r3});
  const std::string b = format_csv({r3, r1, r2});
  CHECK(a == b);
  const auto back = parse_csv(a);
  REQUIRE(back.size() == 3);
  CHECK(back[0].p_db == -5.0);
  CHECK(back[1].nmse == r2.nmse);
  CHECK(back[2].nmse == r1.nmse);
  CHECK(back[2].scheme == "proposed");
  CHECK(back[2].seed == 3);
  CHECK(a.rfind("scenario,scheme,p_db,nmse,trials,seed\n", 0) == 0);

  const auto path = std::filesystem::temp_directory_path() / "twr_harness_test.csv";
  emit_csv({r1}, path.string());
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 2);
  std::filesystem::remove(path);
  CHECK_THROWS(emit_csv({r1}, "/nonexistent-dir/x.csv"));
  CHECK_THROWS_AS(emit_csv({}, path.string()), std::invalid_argument);
  CHECK_THROWS_AS(parse_csv("bad header\n"), std::invalid_argument);
}

TEST_CASE("fixed relay power decouples stage one from the grid") {
  ExperimentPlan p = small_plan(Stage::backward, 50);
  p.schemes = {"optimal"};
  p.relay_power_db = 20.0;
  const auto recs = run_stage1_experiment(SystemConfig{}, p);
  CHECK(recs[0].nmse == recs[2].nmse);
  CHECK(parse_config("relay_power_db = 30\n").plan.relay_power_db.value() == 30.0);
  CHECK_FALSE(parse_config("").plan.relay_power_db.has_value());
}

TEST_CASE("ratio-of-averages mode differs from per-realization") {
  ExperimentPlan p = small_plan(Stage::backward, 100);
  p.schemes = {"optimal"};
  p.p_grid_db = {10.0};
  const double per = run_stage1_experiment(SystemConfig{}, p)[0].nmse;
  p.nmse_mode = NmseMode::ratio_of_averages;
  const double ratio = run_stage1_experiment(SystemConfig{}, p)[0].nmse;
  CHECK(per != ratio);
  CHECK(ratio > 0.0);
}

TEST_CASE("scenario and scheme names round-trip") {
  CHECK(scenario_from_string(to_string(Scenario::s1_weak)) == Scenario::s1_weak);
  CHECK(stage_from_string("backward") == Stage::backward);
  CHECK(source_scheme_from_string(to_string(SourceScheme::diagonal)) == SourceScheme::diagonal);
  CHECK(relay_scheme_from_string(to_string(RelayScheme::optimal)) == RelayScheme::optimal);
  CHECK_THROWS_AS(source_scheme_from_string("x"), std::invalid_argument);
  SystemConfig c;
  apply_scenario(Scenario::s1_weak, c);
  CHECK(c.spacing_s1 == 0.25);
  CHECK(c.spacing_s2 == 0.05);
  CHECK(c.spacing_r == 0.25);
}

TEST_CASE("paired standard error") {
  ExperimentRecord a, b;
  a.per_trial = {1.0, 2.0, 3.0, std::nan("")};
  b.per_trial = {1.0, 1.0, 1.0, 1.0};
  // differences 0, 1, 2: population variance 2/3 over 3 samples
  CHECK(paired_std_error(a, b) == doctest::Approx(std::sqrt(2.0 / 9.0)));
  b.per_trial.pop_back();
  CHECK_THROWS_AS(paired_std_error(a, b), std::invalid_argument);
}

TEST_CASE("failure report") {
  ExperimentRecord r{"all_strong", "proposed", 0.0, 0.5, 9, 1};
  r.failures = 1;
  CHECK(total_failures({r, r}) == 2);
  CHECK(failure_report({r}).find("total_failures=1") == 0);
}
