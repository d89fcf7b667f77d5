// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end for the Monte Carlo harness.
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure (trials
// dropped or an oracle check failed; counts go to <out>.report or stderr).

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "twr/harness.hpp"
#include "twr/oracle.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<long> trials;
  std::optional<int> threads;
  std::optional<double> relay_power_db;
  std::string variant;
  int figure = 0;
};

void add_common(CLI::App* sub, CommonOptions& o, bool with_variant) {
  sub->add_option("--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "master seed");
  sub->add_option("--trials", o.trials, "Monte Carlo trials per grid point");
  sub->add_option("--out", o.out, "CSV output path (default: stdout)");
  sub->add_option("--threads", o.threads, "worker threads (0: hardware concurrency)");
  sub->add_option("--relay-power-db", o.relay_power_db, "fix the relay power instead of sweeping it");
  if (with_variant)
    sub->add_option("--variant", o.variant, "scalar objective variant")
        ->check(CLI::IsMember({"paper_scalar", "derived_matrix"}));
}

twr::ExperimentConfig resolve(const CommonOptions& o) {
  twr::ExperimentConfig ec = o.config.empty() ? twr::parse_config("") : twr::load_config(o.config);
  if (o.seed) ec.plan.seed = *o.seed;
  if (o.trials) ec.plan.trials = *o.trials;
  if (o.threads) ec.plan.threads = *o.threads;
  if (o.relay_power_db) ec.plan.relay_power_db = *o.relay_power_db;
  if (!o.variant.empty()) ec.plan.variant = twr::delta_variant_from_string(o.variant);
  return ec;
}

int finish(const std::vector<twr::ExperimentRecord>& records, const std::string& out) {
  if (out.empty())
    std::cout << twr::format_csv(records);
  else
    twr::emit_csv(records, out);
  if (twr::total_failures(records) == 0) return 0;
  const std::string report = twr::failure_report(records);
  if (out.empty()) {
    std::cerr << report;
  } else {
    std::ofstream f(out + ".report");
    f << report;
  }
  std::cerr << "numerical failures: " << twr::total_failures(records) << " trials dropped\n";
  return 2;
}

std::vector<twr::ExperimentRecord> run_in(twr::ExperimentConfig ec, twr::Scenario scenario,
                                          twr::Stage stage) {
  ec.plan.scenario = scenario;
  ec.plan.stage = stage;
  ec.plan.schemes.clear();
  twr::apply_scenario(scenario, ec.system);
  return twr::run_experiment(ec.system, ec.plan);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage channel estimation simulator for two-way MIMO relays"};
  app.require_subcommand(1);

  CommonOptions s1, s2, orc, rep;
  auto* cmd_s1 = app.add_subcommand("stage1", "backward channel NMSE sweep");
  add_common(cmd_s1, s1, false);
  auto* cmd_s2 = app.add_subcommand("stage2", "forward channel NMSE sweep");
  add_common(cmd_s2, s2, true);
  auto* cmd_orc = app.add_subcommand("oracle", "run the reference checks");
  cmd_orc->add_option("--seed", orc.seed, "master seed");
  cmd_orc->add_option("--out", orc.out, "report path (default: stdout)");
  auto* cmd_rep = app.add_subcommand("reproduce", "regenerate a figure's data");
  add_common(cmd_rep, rep, true);
  cmd_rep->add_option("--figure", rep.figure, "figure number")->required()->check(CLI::IsMember({2, 3, 4}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (cmd_s1->parsed()) {
      auto ec = resolve(s1);
      ec.plan.stage = twr::Stage::backward;
      ec.plan.validate();
      return finish(twr::run_stage1_experiment(ec.system, ec.plan), s1.out);
    }
    if (cmd_s2->parsed()) {
      auto ec = resolve(s2);
      ec.plan.stage = twr::Stage::forward;
      ec.plan.validate();
      return finish(twr::run_stage2_experiment(ec.system, ec.plan), s2.out);
    }
    if (cmd_orc->parsed()) {
      const auto reports = twr::oracle::run_all(orc.seed.value_or(1));
      std::string text;
      bool ok = true;
      for (const auto& r : reports) {
        text += r.to_record() + "\n";
        ok = ok && (r.passed() || r.informational);
      }
      if (orc.out.empty()) {
        std::cout << text;
      } else {
        std::ofstream f(orc.out);
        if (!f) throw std::runtime_error("cannot write '" + orc.out + "'");
        f << text;
      }
      return ok ? 0 : 2;
    }
    if (cmd_rep->parsed()) {
      const auto ec = resolve(rep);
      std::vector<twr::ExperimentRecord> records;
      if (rep.figure == 2) {
        for (auto sc : {twr::Scenario::all_strong, twr::Scenario::s1_weak}) {
          auto r = run_in(ec, sc, twr::Stage::backward);
          records.insert(records.end(), r.begin(), r.end());
        }
      } else {
        const auto sc = rep.figure == 3 ? twr::Scenario::all_strong : twr::Scenario::s1_weak;
        records = run_in(ec, sc, twr::Stage::forward);
      }
      return finish(records, rep.out);
    }
  } catch (const twr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const twr::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
