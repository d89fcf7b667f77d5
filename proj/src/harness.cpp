// SPDX-License-Identifier: Apache-2.0

#include "twr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

namespace twr {

namespace {

constexpr std::uint64_t kTagStage1NoiseS1 = 31;
constexpr std::uint64_t kTagStage1NoiseS2 = 32;
constexpr std::uint64_t kTagRelayLoadings = 41;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

// One trial's contribution to an NMSE estimate.
struct TrialSample {
  double err = 0.0;   // squared error
  double norm = 0.0;  // squared norm of the true channel
  bool failed = false;
  bool regularized = false;
};

// Evaluates fn(t) for t in [0, trials) on `threads` workers. Each worker
// writes disjoint slots, so the result is independent of scheduling.
template <typename T>
std::vector<T> run_trials(long trials, int threads, const std::function<T(long)>& fn) {
  std::vector<T> out(static_cast<std::size_t>(trials));
  int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, static_cast<int>(std::max(1L, trials)));
  if (workers == 1) {
    for (long t = 0; t < trials; ++t) out[static_cast<std::size_t>(t)] = fn(t);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (long t = w; t < trials; t += workers) out[static_cast<std::size_t>(t)] = fn(t);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// Reduces samples in trial-index order into one record.
ExperimentRecord reduce(const std::vector<TrialSample>& samples, NmseMode mode) {
  ExperimentRecord r;
  double sum_ratio = 0, sum_ratio2 = 0, sum_err = 0, sum_norm = 0;
  double sum_err2 = 0, sum_norm2 = 0, sum_cross = 0;
  long n = 0;
  r.per_trial.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.regularized) ++r.regularized;
    if (s.failed) {
      ++r.failures;
      r.per_trial.push_back(std::nan(""));
      continue;
    }
    const double ratio = s.err / s.norm;
    r.per_trial.push_back(ratio);
    sum_ratio += ratio;
    sum_ratio2 += ratio * ratio;
    sum_err += s.err;
    sum_norm += s.norm;
    sum_err2 += s.err * s.err;
    sum_norm2 += s.norm * s.norm;
    sum_cross += s.err * s.norm;
    ++n;
  }
  r.trials = n;
  if (n == 0) {
    r.nmse = std::nan("");
    return r;
  }
  const auto dn = static_cast<double>(n);
  if (mode == NmseMode::per_realization) {
    r.nmse = sum_ratio / dn;
    r.std_error = std::sqrt(std::max(0.0, sum_ratio2 / dn - r.nmse * r.nmse) / dn);
  } else {
    // delta method for the ratio of means
    const double me = sum_err / dn, mn = sum_norm / dn;
    r.nmse = me / mn;
    const double ve = sum_err2 / dn - me * me;
    const double vn = sum_norm2 / dn - mn * mn;
    const double c = sum_cross / dn - me * mn;
    const double v = (ve - 2.0 * r.nmse * c + r.nmse * r.nmse * vn) / (mn * mn);
    r.std_error = std::sqrt(std::max(0.0, v) / dn);
  }
  return r;
}

SystemConfig at_power(const SystemConfig& base, const ExperimentPlan& plan, double p_db) {
  SystemConfig cfg = base;
  const double p = db_to_linear(p_db);
  cfg.p1 = p;
  cfg.p2 = p;
  cfg.pr = plan.relay_power_db ? db_to_linear(*plan.relay_power_db) : p;
  return cfg;
}

// Stage-one estimates at both sources under the optimal relay pilot.
std::array<BackwardEstimate, 2> stage1_both(const ChannelSet& ch, const SystemConfig& cfg,
                                            const RngStream& trial) {
  const RelayTraining train = optimal_relay_training(cfg);
  RngStream n1 = trial.substream(kTagStage1NoiseS1);
  RngStream n2 = trial.substream(kTagStage1NoiseS2);
  return {ls_estimate(simulate_stage1(ch.h_1r, train, cfg.sigma1_sq, n1), train, cfg.sigma1_sq),
          ls_estimate(simulate_stage1(ch.h_2r, train, cfg.sigma2_sq, n2), train, cfg.sigma2_sq)};
}

}  // namespace

std::string to_string(Scenario s) { return s == Scenario::all_strong ? "all_strong" : "s1_weak"; }
std::string to_string(Stage s) { return s == Stage::backward ? "backward" : "forward"; }
std::string to_string(NmseMode m) {
  return m == NmseMode::per_realization ? "per_realization" : "ratio_of_averages";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "all_strong") return Scenario::all_strong;
  if (s == "s1_weak") return Scenario::s1_weak;
  throw std::invalid_argument("unknown scenario '" + s + "' (expected all_strong or s1_weak)");
}
Stage stage_from_string(const std::string& s) {
  if (s == "backward" || s == "stage1") return Stage::backward;
  if (s == "forward" || s == "stage2") return Stage::forward;
  throw std::invalid_argument("unknown stage '" + s + "' (expected backward or forward)");
}
NmseMode nmse_mode_from_string(const std::string& s) {
  if (s == "per_realization") return NmseMode::per_realization;
  if (s == "ratio_of_averages") return NmseMode::ratio_of_averages;
  throw std::invalid_argument("unknown nmse_mode '" + s +
                              "' (expected per_realization or ratio_of_averages)");
}

void apply_scenario(Scenario s, SystemConfig& cfg) {
  cfg.spacing_s1 = s == Scenario::all_strong ? 0.05 : 0.25;
  cfg.spacing_s2 = 0.05;
  cfg.spacing_r = 0.25;
}

std::string to_string(RelayScheme s) { return s == RelayScheme::optimal ? "optimal" : "diagonal"; }
std::string to_string(SourceScheme s) {
  switch (s) {
    case SourceScheme::proposed: return "proposed";
    case SourceScheme::orthogonal: return "orthogonal";
    case SourceScheme::diagonal: return "diagonal";
  }
  return "?";
}
RelayScheme relay_scheme_from_string(const std::string& s) {
  if (s == "optimal") return RelayScheme::optimal;
  if (s == "diagonal") return RelayScheme::diagonal;
  throw std::invalid_argument("unknown relay scheme '" + s + "' (expected optimal or diagonal)");
}
SourceScheme source_scheme_from_string(const std::string& s) {
  if (s == "proposed") return SourceScheme::proposed;
  if (s == "orthogonal") return SourceScheme::orthogonal;
  if (s == "diagonal") return SourceScheme::diagonal;
  throw std::invalid_argument("unknown source scheme '" + s +
                              "' (expected proposed, orthogonal or diagonal)");
}

std::vector<std::string> ExperimentPlan::resolved_schemes() const {
  if (!schemes.empty()) return schemes;
  if (stage == Stage::backward) return {"optimal", "diagonal"};
  return {"proposed", "orthogonal", "diagonal"};
}

void ExperimentPlan::validate() const {
  if (trials < 1) throw std::invalid_argument("plan field 'trials' must be >= 1");
  if (p_grid_db.empty()) throw std::invalid_argument("plan field 'p_grid_db' must be nonempty");
  for (double p : p_grid_db)
    if (!std::isfinite(p)) throw std::invalid_argument("plan field 'p_grid_db' has a non-finite entry");
  if (threads < 0) throw std::invalid_argument("plan field 'threads' must be >= 0");
  if (relay_power_db && !std::isfinite(*relay_power_db))
    throw std::invalid_argument("plan field 'relay_power_db' must be finite");
  for (const auto& s : resolved_schemes()) {
    try {
      if (stage == Stage::backward)
        relay_scheme_from_string(s);
      else
        source_scheme_from_string(s);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string("plan field 'schemes': ") + e.what());
    }
  }
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig out;
  SystemConfig& sys = out.system;
  ExperimentPlan& plan = out.plan;
  std::map<std::string, std::pair<std::string, int>> entries;

  std::istringstream is(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'",
                        line_no, "");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key", line_no, "");
    if (value.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": key '" + key + "' has no value", line_no, key);
    if (entries.count(key))
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "' (first on line " +
                            std::to_string(entries[key].second) + ")",
                        line_no, key);
    entries[key] = {value, line_no};
  }

  auto fail = [](const std::string& key, int line, const std::string& why) {
    return ConfigError("line " + std::to_string(line) + ": key '" + key + "': " + why, line, key);
  };
  auto as_int = [&](const std::string& key, const std::string& v, int line) -> long long {
    std::size_t pos = 0;
    long long x = 0;
    try {
      x = std::stoll(v, &pos);
    } catch (const std::exception&) {
      throw fail(key, line, "expected an integer, got '" + v + "'");
    }
    if (pos != v.size()) throw fail(key, line, "expected an integer, got '" + v + "'");
    return x;
  };
  auto as_double = [&](const std::string& key, const std::string& v, int line) -> double {
    std::size_t pos = 0;
    double x = 0;
    try {
      x = std::stod(v, &pos);
    } catch (const std::exception&) {
      throw fail(key, line, "expected a number, got '" + v + "'");
    }
    if (pos != v.size()) throw fail(key, line, "expected a number, got '" + v + "'");
    return x;
  };

  if (auto it = entries.find("scenario"); it != entries.end()) {
    try {
      plan.scenario = scenario_from_string(it->second.first);
    } catch (const std::invalid_argument& e) {
      throw fail("scenario", it->second.second, e.what());
    }
  }
  apply_scenario(plan.scenario, sys);

  const std::map<std::string, int*> int_keys{
      {"n1", &sys.n1}, {"n2", &sys.n2}, {"nr", &sys.nr}, {"l_r", &sys.l_r}, {"l", &sys.l}};
  const std::map<std::string, double*> real_keys{
      {"sigma1_sq", &sys.sigma1_sq},   {"sigma2_sq", &sys.sigma2_sq},
      {"sigmar_sq", &sys.sigmar_sq},   {"spacing_s1", &sys.spacing_s1},
      {"spacing_s2", &sys.spacing_s2}, {"spacing_r", &sys.spacing_r}};

  for (const auto& [key, entry] : entries) {
    const auto& [value, line] = entry;
    try {
      if (key == "scenario") continue;
      if (auto ik = int_keys.find(key); ik != int_keys.end()) {
        const long long x = as_int(key, value, line);
        if (x < 1 || x > 4096) throw fail(key, line, "must be in [1, 4096]");
        *ik->second = static_cast<int>(x);
      } else if (auto rk = real_keys.find(key); rk != real_keys.end()) {
        *rk->second = as_double(key, value, line);
      } else if (key == "trials") {
        plan.trials = static_cast<long>(as_int(key, value, line));
      } else if (key == "seed") {
        const long long x = as_int(key, value, line);
        if (x < 0) throw fail(key, line, "must be >= 0");
        plan.seed = static_cast<std::uint64_t>(x);
      } else if (key == "relay_power_db") {
        plan.relay_power_db = as_double(key, value, line);
      } else if (key == "threads") {
        plan.threads = static_cast<int>(as_int(key, value, line));
      } else if (key == "stage") {
        plan.stage = stage_from_string(value);
      } else if (key == "variant") {
        plan.variant = delta_variant_from_string(value);
      } else if (key == "nmse_mode") {
        plan.nmse_mode = nmse_mode_from_string(value);
      } else if (key == "schemes") {
        plan.schemes = split(value, ',');
      } else if (key == "p_grid_db") {
        plan.p_grid_db.clear();
        for (const auto& item : split(value, ',')) plan.p_grid_db.push_back(as_double(key, item, line));
      } else {
        throw fail(key, line, "unknown key");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw fail(key, line, e.what());
    }
  }

  try {
    sys.validate();
    plan.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), 0, "");
  }
  return out;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'", 0, "");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<ExperimentRecord> run_stage1_experiment(const SystemConfig& base, const ExperimentPlan& plan) {
  plan.validate();
  base.validate();
  const CorrelationSet corr = build_correlations(base);
  const ChannelSampler sampler(corr);
  std::vector<ExperimentRecord> out;

  for (const auto& name : plan.resolved_schemes()) {
    const RelayScheme scheme = relay_scheme_from_string(name);
    for (double p_db : plan.p_grid_db) {
      const SystemConfig cfg = at_power(base, plan, p_db);
      const RelayTraining optimal = optimal_relay_training(cfg);
      const std::function<TrialSample(long)> fn = [&](long t) {
        const RngStream trial(plan.seed, static_cast<std::uint64_t>(t));
        const ChannelSet ch = sampler.sample(trial);
        TrialSample s;
        s.norm = ch.h_1r.squaredNorm();
        try {
          RelayTraining train = optimal;
          if (scheme == RelayScheme::diagonal) {
            RngStream ls = trial.substream(kTagRelayLoadings);
            train = diagonal_relay_training(cfg, dirichlet_loadings(cfg.nr, cfg.pr, ls));
          }
          RngStream noise = trial.substream(kTagStage1NoiseS1);
          const ComplexMatrix y = simulate_stage1(ch.h_1r, train, cfg.sigma1_sq, noise);
          s.err = (ls_estimate(y, train, cfg.sigma1_sq).h_hat - ch.h_1r).squaredNorm();
        } catch (const NumericalError&) {
          s.failed = true;
        }
        return s;
      };
      ExperimentRecord r = reduce(run_trials(plan.trials, plan.threads, fn), plan.nmse_mode);
      r.scenario = to_string(plan.scenario);
      r.scheme = name;
      r.p_db = p_db;
      r.seed = plan.seed;
      out.push_back(r);
    }
  }
  return out;
}

std::vector<ExperimentRecord> run_stage2_experiment(const SystemConfig& base, const ExperimentPlan& plan) {
  plan.validate();
  base.validate();
  const CorrelationSet corr = build_correlations(base);
  const ChannelSampler sampler(corr);
  std::vector<ExperimentRecord> out;

  for (const auto& name : plan.resolved_schemes()) {
    const SourceScheme scheme = source_scheme_from_string(name);
    for (double p_db : plan.p_grid_db) {
      const SystemConfig cfg = at_power(base, plan, p_db);
      const std::function<TrialSample(long)> fn = [&](long t) {
        RngStream trial(plan.seed, static_cast<std::uint64_t>(t));
        const ChannelSet ch = sampler.sample(trial);
        const ComplexVector h_c = ch.h_c();
        TrialSample s;
        s.norm = h_c.squaredNorm();
        try {
          const auto est = stage1_both(ch, cfg, trial);
          SourceTraining train;
          if (scheme == SourceScheme::proposed) {
            const ProposedDesign d = proposed_training(est[0], est[1], corr, cfg, plan.variant);
            train = d.training;
            s.regularized = d.problem.regularized;
          } else {
            train = baseline_training(scheme, cfg, trial);
          }
          const Stage2Observation obs = simulate_stage2(ch, train, cfg, trial);
          const ForwardModel fm = forward_model(est[0], train, corr, cfg.sigma1_sq, cfg.sigmar_sq);
          const ForwardEstimate fe = lmmse_estimate(vec(obs.y_1), fm, false);
          s.regularized = s.regularized || fe.regularized;
          s.err = (fe.h_c_hat - h_c).squaredNorm();
        } catch (const NumericalError&) {
          s.failed = true;
        }
        return s;
      };
      ExperimentRecord r = reduce(run_trials(plan.trials, plan.threads, fn), plan.nmse_mode);
      r.scenario = to_string(plan.scenario);
      r.scheme = name;
      r.p_db = p_db;
      r.seed = plan.seed;
      out.push_back(r);
    }
  }
  return out;
}

std::vector<ExperimentRecord> run_experiment(const SystemConfig& base, const ExperimentPlan& plan) {
  return plan.stage == Stage::backward ? run_stage1_experiment(base, plan)
                                       : run_stage2_experiment(base, plan);
}

void sort_records(std::vector<ExperimentRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const ExperimentRecord& a, const ExperimentRecord& b) {
    if (a.scenario != b.scenario) return a.scenario < b.scenario;
    if (a.scheme != b.scheme) return a.scheme < b.scheme;
    return a.p_db < b.p_db;
  });
}

std::string format_csv(std::vector<ExperimentRecord> records) {
  sort_records(records);
  std::string out = "scenario,scheme,p_db,nmse,trials,seed\n";
  char buf[64];
  for (const auto& r : records) {
    out += r.scenario + "," + r.scheme + ",";
    std::snprintf(buf, sizeof buf, "%.17g", r.p_db);
    out += buf;
    out += ",";
    std::snprintf(buf, sizeof buf, "%.17g", r.nmse);
    out += buf;
    out += "," + std::to_string(r.trials) + "," + std::to_string(r.seed) + "\n";
  }
  return out;
}

void emit_csv(const std::vector<ExperimentRecord>& records, const std::string& path) {
  if (records.empty()) throw std::invalid_argument("emit_csv: no records");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << format_csv(records);
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

std::vector<ExperimentRecord> parse_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || trim(line) != "scenario,scheme,p_db,nmse,trials,seed")
    throw std::invalid_argument("parse_csv: missing or unexpected header");
  std::vector<ExperimentRecord> out;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6)
      throw std::invalid_argument("parse_csv: line " + std::to_string(line_no) + " has " +
                                  std::to_string(f.size()) + " fields");
    ExperimentRecord r;
    r.scenario = f[0];
    r.scheme = f[1];
    r.p_db = std::stod(f[2]);
    r.nmse = std::stod(f[3]);
    r.trials = std::stol(f[4]);
    r.seed = std::stoull(f[5]);
    out.push_back(r);
  }
  return out;
}

double paired_std_error(const ExperimentRecord& a, const ExperimentRecord& b) {
  if (a.per_trial.size() != b.per_trial.size())
    throw std::invalid_argument("paired_std_error: records have different trial counts");
  double sum = 0.0, sum2 = 0.0;
  long n = 0;
  for (std::size_t t = 0; t < a.per_trial.size(); ++t) {
    const double d = a.per_trial[t] - b.per_trial[t];
    if (std::isnan(d)) continue;
    sum += d;
    sum2 += d * d;
    ++n;
  }
  if (n < 2) return std::nan("");
  const double mean = sum / static_cast<double>(n);
  return std::sqrt(std::max(0.0, sum2 / static_cast<double>(n) - mean * mean) / static_cast<double>(n));
}

std::string failure_report(const std::vector<ExperimentRecord>& records) {
  std::ostringstream os;
  os << "total_failures=" << total_failures(records) << "\n";
  for (const auto& r : records) {
    os << "scenario=" << r.scenario << " scheme=" << r.scheme << " p_db=" << r.p_db
       << " failures=" << r.failures << " regularized=" << r.regularized
       << " trials_used=" << r.trials << "\n";
  }
  return os.str();
}

long total_failures(const std::vector<ExperimentRecord>& records) {
  long n = 0;
  for (const auto& r : records) n += r.failures;
  return n;
}

}  // namespace twr
