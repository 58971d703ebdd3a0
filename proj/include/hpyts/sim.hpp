#pragma once

// Strategy races on synthetic or replayed populations.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hpyts/gibbs.hpp"
#include "hpyts/population.hpp"
#include "hpyts/strategies.hpp"

namespace hpyts {

/// Configuration problem; `field` names the offending JSON path.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct ExperimentConfig {
  std::vector<PopulationSpec> arms;
  std::vector<Strategy> strategies{Strategy::hpyts, Strategy::gtts, Strategy::uniform, Strategy::oracle};
  int n_init = 20;
  int M = 50;
  int T = 100;
  int R = 20;
  Mode mode = Mode::incidence;
  int particles = 100;  // N; also the Gibbs harvest size
  std::uint64_t seed = 1;
  GibbsConfig gibbs;
  GtSmoothing smoothing;
  int threads = 1;

  void validate() const;
};

/// Parses the JSON schema documented in the README.  Replay paths are
/// resolved relative to `base_dir`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
ExperimentConfig load_experiment_config(const std::string& path);

/// Bundled presets: "paper-fig1", "paper-fig1-t100", "desk-zipf", "desk-replay".
ExperimentConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

struct TraceRow {
  Strategy strategy = Strategy::uniform;
  int replicate = 0;
  int step = 0;                 // 0 is the initial sample
  std::vector<int> allocation;  // per-arm batch sizes this step (empty for step 0)
  int arm = -1;                 // incidence mode: the chosen arm
  int new_species = 0;
  int cumulative = 0;
  double ess = -1.0;            // HPY-TS only
  bool jittered = false;        // HPY-TS only
};

struct SummaryRow {
  Strategy strategy = Strategy::uniform;
  int step = 0;
  double mean = 0.0;
  double sd = 0.0;
};

struct ExperimentResult {
  std::vector<TraceRow> trace;  // strategy-major, then replicate, then step

  std::vector<SummaryRow> summary(const std::vector<Strategy>& order) const;
  /// Cumulative distinct count at the last step, one entry per replicate.
  std::vector<double> final_cumulative(Strategy s) const;
};

/// One replicate of one strategy.  Exposed for tests; run_experiment calls it.
std::vector<TraceRow> run_replicate(const ExperimentConfig& cfg, Strategy strategy, int replicate);

ExperimentResult run_experiment(const ExperimentConfig& cfg);

void write_trace_csv(std::ostream& out, const ExperimentResult& result, Mode mode);
void write_summary_csv(std::ostream& out, const ExperimentResult& result, const std::vector<Strategy>& order);
nlohmann::json plot_data(const ExperimentResult& result, const std::vector<Strategy>& order);

/// Writes trace.csv, summary.csv and plot_data.json into `dir` (created if missing).
void write_outputs(const std::string& dir, const ExperimentResult& result, const ExperimentConfig& cfg);

}  // namespace hpyts
