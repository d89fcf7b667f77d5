// SPDX-License-Identifier: Apache-2.0
//
// Monte Carlo experiment orchestration: configuration loading, NMSE sweeps
// over the transmit power grid and CSV emission.
//
// Every trial t draws from RngStream(seed, t), and the channel and noise
// draws of a trial are shared by all schemes and power levels. Trials may
// run on several workers; results are reduced in trial-index order so the
// output does not depend on the worker count.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "twr/training_opt.hpp"

namespace twr {

enum class Scenario { all_strong, s1_weak };
enum class Stage { backward, forward };
enum class NmseMode { per_realization, ratio_of_averages };

std::string to_string(Scenario s);
std::string to_string(Stage s);
std::string to_string(NmseMode m);
Scenario scenario_from_string(const std::string& s);
Stage stage_from_string(const std::string& s);
NmseMode nmse_mode_from_string(const std::string& s);

/// Antenna spacings (s1, s2, r) of a scenario.
void apply_scenario(Scenario s, SystemConfig& cfg);

std::string to_string(RelayScheme s);
std::string to_string(SourceScheme s);
RelayScheme relay_scheme_from_string(const std::string& s);
SourceScheme source_scheme_from_string(const std::string& s);

struct ExperimentPlan {
  Scenario scenario = Scenario::all_strong;
  Stage stage = Stage::forward;
  std::vector<std::string> schemes;  // empty: every scheme of the stage
  std::vector<double> p_grid_db{0, 5, 10, 15, 20, 25, 30};
  long trials = 1000;
  std::uint64_t seed = 1;
  DeltaVariant variant = DeltaVariant::derived_matrix;
  NmseMode nmse_mode = NmseMode::per_realization;
  int threads = 0;  // 0: hardware concurrency
  // unset: P_r follows the grid like P_1 and P_2; set: P_r is fixed
  std::optional<double> relay_power_db;

  /// Schemes with the empty list expanded.
  std::vector<std::string> resolved_schemes() const;
  /// Throws std::invalid_argument naming the first offending field.
  void validate() const;
};

struct ExperimentRecord {
  std::string scenario;
  std::string scheme;
  double p_db = 0.0;
  double nmse = 0.0;
  long trials = 0;
  std::uint64_t seed = 0;
  // not written to CSV
  double std_error = 0.0;
  long failures = 0;  // trials dropped after a NumericalError
  long regularized = 0;
  // per-trial normalized error in trial order, NaN for dropped trials
  std::vector<double> per_trial;
};

/// Standard error of the mean paired difference a - b over trials kept in
/// both records. Both records must come from the same seed and trial count.
double paired_std_error(const ExperimentRecord& a, const ExperimentRecord& b);

/// Malformed configuration text; `line` is 1-based, 0 when not tied to a line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& msg, int line, std::string key)
      : std::runtime_error(msg), line_(line), key_(std::move(key)) {}
  int line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  int line_;
  std::string key_;
};

struct ExperimentConfig {
  SystemConfig system;
  ExperimentPlan plan;
};

/// `key = value` lines; `#` starts a comment. `scenario` is applied before
/// any explicit spacing keys regardless of order.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// NMSE of H^_1r at S1 per relay scheme and power level.
std::vector<ExperimentRecord> run_stage1_experiment(const SystemConfig& base,
                                                    const ExperimentPlan& plan);

/// NMSE of h^_c at S1 per source scheme and power level. Stage one always
/// uses the optimal relay pilot.
std::vector<ExperimentRecord> run_stage2_experiment(const SystemConfig& base,
                                                    const ExperimentPlan& plan);

std::vector<ExperimentRecord> run_experiment(const SystemConfig& base, const ExperimentPlan& plan);

/// Sorted by (scenario, scheme, p_db); the sort is stable.
void sort_records(std::vector<ExperimentRecord>& records);
std::string format_csv(std::vector<ExperimentRecord> records);
/// Throws std::runtime_error if `path` cannot be written.
void emit_csv(const std::vector<ExperimentRecord>& records, const std::string& path);
std::vector<ExperimentRecord> parse_csv(const std::string& text);

/// Failure counts per grid point as `key=value` lines.
std::string failure_report(const std::vector<ExperimentRecord>& records);
long total_failures(const std::vector<ExperimentRecord>& records);

}  // namespace twr
