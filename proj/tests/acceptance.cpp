// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
// criterion fails. Usage: acceptance <path-to-twr_sim>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "twr/harness.hpp"
#include "twr/oracle.hpp"

using namespace twr;

namespace {

constexpr std::uint64_t kSeed = 2024;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double db_gap(double worse, double better) { return 10.0 * std::log10(worse / better); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// (scheme, p_db) -> record
using RecordMap = std::map<std::pair<std::string, double>, ExperimentRecord>;

RecordMap index(const std::vector<ExperimentRecord>& recs) {
  RecordMap m;
  for (const auto& r : recs) m[{r.scheme, r.p_db}] = r;
  return m;
}

ExperimentPlan figure_plan(Scenario sc, Stage st) {
  ExperimentPlan p;
  p.scenario = sc;
  p.stage = st;
  p.trials = 1000;
  p.seed = kSeed;
  return p;
}

SystemConfig scenario_config(Scenario sc) {
  SystemConfig c;
  apply_scenario(sc, c);
  return c;
}

std::vector<ExperimentRecord> forward_run(Scenario sc, double& seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  auto recs = run_stage2_experiment(scenario_config(sc), figure_plan(sc, Stage::forward));
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return recs;
}

// Random forward-stage instance with proposed pilots.
struct DesignInstance {
  SystemConfig cfg;
  CorrelationSet corr;
  ProposedDesign design;
};

DesignInstance random_design(std::uint64_t id, int n, int nr) {
  RngStream s = oracle::oracle_stream(kSeed, 90000 + id);
  DesignInstance d;
  d.cfg.n1 = d.cfg.n2 = n;
  d.cfg.nr = d.cfg.l_r = nr;
  d.cfg.l = 2 * n;
  d.cfg.p1 = 1.0 + 99.0 * s.uniform();
  d.cfg.p2 = 1.0 + 99.0 * s.uniform();
  d.cfg.sigmar_sq = 0.5 + s.uniform();
  d.corr = oracle::random_correlations(d.cfg, s);
  const BackwardEstimate e1{oracle::random_matrix(n, nr, s), 0.5 * s.uniform()};
  const BackwardEstimate e2{oracle::random_matrix(n, nr, s), 0.5 * s.uniform()};
  d.design = proposed_training(e1, e2, d.corr, d.cfg, DeltaVariant::derived_matrix);
  return d;
}

Outcome criterion1() {
  SystemConfig c;
  c.pr = db_to_linear(10.0);
  const oracle::Stage1ErrorStats st = oracle::stage1_error_energy(c, 10000, kSeed);
  const double rel = std::abs(st.empirical - st.closed_form) / st.closed_form;
  const double trace_form = stage1_theoretical_mse(optimal_relay_training(c), c.n1, c.sigma1_sq);
  return {rel <= 0.05 && std::abs(trace_form - st.closed_form) < 1e-12 * st.closed_form,
          "MC " + fmt(st.empirical) + " vs sigma^2 N1 Nr^2 / Pr = " + fmt(st.closed_form) +
              " (rel err " + fmt(rel, 3) + ", tol 0.05; the literal 1.6 quoted alongside the formula is " +
              "inconsistent with it and is not used)"};
}

Outcome criterion2() {
  const oracle::OracleReport r = oracle::lemma1_check(4, 4, 100000, 10, kSeed);
  return {r.worst_violation <= 0.02,
          "worst relative Frobenius error " + fmt(r.worst_violation, 3) + " over 10 triples (tol 0.02); " +
              "3-sigma pass rate " + fmt(r.pass_rate, 3)};
}

Outcome criterion3() {
  const oracle::OracleReport r = oracle::woodbury_equivalence_check(100, kSeed);
  return {r.passed(), "max relative difference " + fmt(r.worst_violation, 3) + " (tol 1e-8)"};
}

Outcome criterion4() {
  const oracle::OracleReport r = oracle::bound_direction_check(1000, DeltaVariant::derived_matrix, kSeed);
  const oracle::OracleReport other = oracle::bound_direction_check(1000, DeltaVariant::paper_scalar, kSeed);
  return {r.passed(), "derived_matrix holds on " + fmt(r.pass_rate * 1000, 5) +
                          "/1000; paper_scalar (not shipped) holds on " + fmt(other.pass_rate * 1000, 5) + "/1000"};
}

Outcome criterion5() {
  double worst_gap = 0.0, worst_power = 0.0, worst_kkt = 0.0;
  bool ok = true;
  for (std::uint64_t id = 0; id < 50; ++id) {
    const DesignInstance d = random_design(id, 2, 2);
    const PowerAllocation& a = d.design.allocation;
    const double j = objective_j(d.design.problem, a.gamma);
    const double grid = oracle::grid_search_allocation(d.design.problem, 2000).objective;
    const double gap = (j - grid) / grid;
    worst_gap = std::max(worst_gap, std::abs(gap));
    for (int k = 0; k < 2; ++k)
      worst_power = std::max(worst_power, std::abs(a.gamma[static_cast<std::size_t>(k)].sum() -
                                                   d.design.problem.p[static_cast<std::size_t>(k)]));
    worst_kkt = std::max({worst_kkt, a.kkt_residual, a.slackness_residual});
    ok = ok && std::abs(gap) <= 0.005 && a.converged;
  }
  ok = ok && worst_power <= 1e-6 && worst_kkt < 1e-6;
  return {ok, "worst |J - J_grid| / J_grid " + fmt(worst_gap, 3) + " (tol 0.005), power error " +
                  fmt(worst_power, 3) + " (tol 1e-6), KKT/slackness residual " + fmt(worst_kkt, 3) +
                  " (tol 1e-6)"};
}

Outcome criterion6() {
  double worst = 0.0;
  bool positive = true;
  for (std::uint64_t id = 0; id < 100; ++id) {
    const DesignInstance d = random_design(1000 + id, 4, 4);
    RngStream s = oracle::oracle_stream(kSeed, 95000 + id);
    const int k = static_cast<int>(id % 2), dir = static_cast<int>(id % 4);
    const ScalarProblem& p = d.design.problem;
    const double g = p.p[static_cast<std::size_t>(k)] * s.uniform();
    const double h = 1e-4 * std::max(g, 1e-2);
    const double fd = (gradient_residual(p, g + h, k, dir, 0.0) - gradient_residual(p, g - h, k, dir, 0.0)) / (2 * h);
    const double an = second_derivative(p, g, k, dir);
    positive = positive && an > 0.0;
    worst = std::max(worst, std::abs(an - fd) / std::abs(an));
  }
  return {positive && worst <= 1e-4, "all positive: " + std::string(positive ? "yes" : "no") +
                                          ", worst relative FD deviation " + fmt(worst, 3) + " (tol 1e-4)"};
}

Outcome criterion7() {
  const oracle::SlopeFit f = oracle::asymptotic_rvi_fit({1e1, 1e2, 1e3, 1e4}, kSeed);
  return {std::abs(f.slope + 1.0) <= 0.1, "slope " + fmt(f.slope, 8) + " (target -1 +/- 0.1)"};
}

Outcome criterion8() {
  double worst_cross = 0.0, worst_off = 0.0;
  for (std::uint64_t id = 0; id < 100; ++id) {
    const DesignInstance d = random_design(2000 + id, 2 + static_cast<int>(id % 3), 2 + static_cast<int>(id % 2));
    const SourceTraining& t = d.design.training;
    worst_cross = std::max(worst_cross, (t.x1 * t.x2.adjoint()).norm());
    for (int k = 1; k <= 2; ++k) {
      const ComplexMatrix u = eigh(d.corr.phi_r(k).transpose()).basis;
      const ComplexMatrix xt = u.transpose() * t.x(k);
      ComplexMatrix g = xt * xt.adjoint();
      g.diagonal().setZero();
      worst_off = std::max(worst_off, g.norm());
    }
  }
  return {worst_cross < 1e-10 && worst_off < 1e-10,
          "max ||X1 X2^H||_F " + fmt(worst_cross, 3) + ", max ||offdiag||_F " + fmt(worst_off, 3) + " (tol 1e-10)"};
}

Outcome criterion9() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;
  for (Scenario sc : {Scenario::all_strong, Scenario::s1_weak}) {
    const RecordMap m = index(run_stage1_experiment(scenario_config(sc), figure_plan(sc, Stage::backward)));
    double worst = -1e300;
    for (const auto& [key, r] : m) {
      if (key.first != "optimal") continue;
      const double diag = m.at({"diagonal", key.second}).nmse;
      ok = ok && r.nmse <= diag && r.failures == 0;
      worst = std::max(worst, r.nmse - diag);
    }
    detail += to_string(sc) + ": max(opt - diag) " + fmt(worst, 3) + "; ";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ok = ok && secs <= 120.0;
  return {ok, detail + "runtime " + fmt(secs, 3) + " s (limit 120)"};
}

Outcome criterion10(const RecordMap& s1, double seconds) {
  bool ok = seconds <= 600.0;
  double worst_margin = -1e300;
  std::string worst_at;
  for (const auto& [key, prop] : s1) {
    if (key.first != "proposed") continue;
    ok = ok && prop.failures == 0;
    for (const char* base : {"orthogonal", "diagonal"}) {
      const ExperimentRecord& b = s1.at({base, key.second});
      const double se = paired_std_error(prop, b);
      // proposed may exceed the baseline by at most 3 paired standard errors
      const double margin = (prop.nmse - b.nmse) / (3.0 * se);
      if (margin > worst_margin) {
        worst_margin = margin;
        worst_at = std::string(base) + "@" + fmt(key.second) + "dB diff " + fmt(prop.nmse - b.nmse, 3) +
                   " 3se " + fmt(3.0 * se, 3);
      }
      ok = ok && prop.nmse - b.nmse <= 3.0 * se;
    }
  }
  const double gap0 = s1.at({"diagonal", 0.0}).nmse - s1.at({"orthogonal", 0.0}).nmse;
  const double gap30 = s1.at({"diagonal", 30.0}).nmse - s1.at({"orthogonal", 30.0}).nmse;
  const double gap0_db = db_gap(s1.at({"diagonal", 0.0}).nmse, s1.at({"orthogonal", 0.0}).nmse);
  const double gap30_db = db_gap(s1.at({"diagonal", 30.0}).nmse, s1.at({"orthogonal", 30.0}).nmse);
  const bool shrink = gap30 < gap0;
  ok = ok && shrink;
  return {ok, "worst (proposed - baseline) / 3se " + fmt(worst_margin, 3) + " [" + worst_at +
                  "]; diag-orth gap 0 dB " + fmt(gap0, 3) + " (" + fmt(gap0_db, 3) + " dB), 30 dB " +
                  fmt(gap30, 3) + " (" + fmt(gap30_db, 3) + " dB), shrinks: " + (shrink ? "yes" : "no") +
                  "; runtime " + fmt(seconds, 3) + " s (limit 600)"};
}

// Not scored: the same 0 dB comparison with the relay power held at 30 dB.
std::string high_relay_power_diagnostic() {
  ExperimentPlan p = figure_plan(Scenario::s1_weak, Stage::forward);
  p.p_grid_db = {0.0};
  p.relay_power_db = 30.0;
  const RecordMap m = index(run_stage2_experiment(scenario_config(Scenario::s1_weak), p));
  const double prop = m.at({"proposed", 0.0}).nmse;
  return "gap over orthogonal " + fmt(db_gap(m.at({"orthogonal", 0.0}).nmse, prop), 3) + " dB, over diagonal " +
         fmt(db_gap(m.at({"diagonal", 0.0}).nmse, prop), 3) + " dB";
}

Outcome criterion11(const RecordMap& s1, const RecordMap& s2) {
  const double prop = s2.at({"proposed", 0.0}).nmse;
  const double g_orth = db_gap(s2.at({"orthogonal", 0.0}).nmse, prop);
  const double g_diag = db_gap(s2.at({"diagonal", 0.0}).nmse, prop);
  bool ordering = true;
  std::string worst;
  for (const auto& [key, r] : s2) {
    if (key.first != "proposed") continue;
    const double other = s1.at(key).nmse;
    if (!(r.nmse < other)) {
      ordering = false;
      worst += fmt(key.second) + "dB ";
    }
  }
  const bool gap_ok = g_orth > 0.5 && g_diag > 0.5;
  return {gap_ok && ordering, "gap at 0 dB over orthogonal " + fmt(g_orth, 3) + " dB, over diagonal " +
                                  fmt(g_diag, 3) + " dB (need > 0.5); scenario 2 < scenario 1 for proposed at every P: " +
                                  (ordering ? "yes" : "no, fails at " + worst) +
                                  " [diagnostic, not scored: with P_r fixed at 30 dB, " +
                                  high_relay_power_diagnostic() + "]"};
}

Outcome criterion12(const std::string& cli) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string a = (dir / "twr_accept_a.csv").string();
  const std::string b = (dir / "twr_accept_b.csv").string();
  const std::string base = "\"" + cli + "\" reproduce --figure 3 --seed 42 --out ";
  const int ra = std::system((base + "\"" + a + "\"").c_str());
  const int rb = std::system((base + "\"" + b + "\"").c_str());
  const std::string ca = read_file(a), cb = read_file(b);
  std::filesystem::remove(a);
  std::filesystem::remove(b);
  const bool ok = ra == 0 && rb == 0 && !ca.empty() && ca == cb;
  return {ok, "exit codes " + std::to_string(ra) + ", " + std::to_string(rb) + "; " + std::to_string(ca.size()) +
                  " bytes; identical: " + (ca == cb ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path-to-twr_sim>\n";
    return 2;
  }
  const std::string cli = argv[1];
  int failed = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  #" << id << " " << name << ": " << o.detail << std::endl;
  };

  report(1, "stage-1 closed form", criterion1);
  report(2, "Kronecker moment identities", criterion2);
  report(3, "Woodbury equivalence", criterion3);
  report(4, "bound certification", criterion4);
  report(5, "solver vs grid search", criterion5);
  report(6, "convexity", criterion6);
  report(7, "noise covariance asymptotics", criterion7);
  report(8, "pilot structure", criterion8);
  report(9, "backward ordering (figure 2)", criterion9);

  double secs1 = 0.0, secs2 = 0.0;
  RecordMap s1, s2;
  try {
    s1 = index(forward_run(Scenario::all_strong, secs1));
    s2 = index(forward_run(Scenario::s1_weak, secs2));
  } catch (const std::exception& e) {
    std::cerr << "forward experiments failed: " << e.what() << "\n";
  }
  report(10, "forward ordering, scenario 1 (figure 3)", [&] { return criterion10(s1, secs1); });
  report(11, "forward gap and scenario ordering (figure 4)", [&] { return criterion11(s1, s2); });
  report(12, "determinism", [&] { return criterion12(cli); });

  std::cout << (12 - failed) << "/12 criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
