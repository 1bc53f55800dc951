#pragma once

// Experiment harness: configuration files, seeded multi-run orchestration,
// CSV persistence, summary statistics and SVG learning curves.

#include "gbdqn/agents.hpp"
#include "gbdqn/envs.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace gbdqn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string name = "custom";
  EnvKind env = EnvKind::acrobot;
  int episodes = 600;
  int max_steps = 500;
  DriftSchedule schedule;
  std::vector<Method> methods = all_methods();
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  int final_window = 100;
  int smoothing_window = 20;
  std::string output_dir = "results";
  /// Fully resolved agent settings, one per method.
  std::map<Method, AgentConfig> agents;

  const AgentConfig& agent(Method m) const;
  void validate() const;
};

/// Built-in presets: acrobot_paper, mountaincar_paper, smoke.
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Parses the sectioned key = value format. Errors carry "line N:" prefixes.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig parse_config_file(const std::filesystem::path& path);
void write_config(std::ostream& out, const ExperimentConfig& config);

/// Applies one `key = value` agent setting; throws std::invalid_argument on bad input.
void apply_agent_setting(AgentConfig& config, const std::string& key, const std::string& value);
std::vector<std::pair<std::string, std::string>> agent_settings(const AgentConfig& config);

// CSV ------------------------------------------------------------------------

inline constexpr const char* kRecordHeader = "seed,method,env,episode,return,steps,epsilon,ensemble_size,drift_kind";

void write_records_csv(std::ostream& out, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_records_csv(std::istream& in);
std::string record_file_name(EnvKind env, Method method, std::uint64_t seed);
/// Reads every run CSV in `dir` (files matching the record naming scheme).
std::vector<RunRecord> read_records_dir(const std::filesystem::path& dir);

// Statistics -----------------------------------------------------------------

struct SummaryRow {
  Method method = Method::dqn;
  EnvKind env = EnvKind::acrobot;
  double mean = 0.0;
  double std = 0.0;
  int n_seeds = 0;
  int window = 0;
};

/// Per seed: mean return over the last `final_window` episodes; across seeds:
/// mean and sample standard deviation of those means. Rows follow
/// all_methods() order, grouped by environment.
std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records, int final_window);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

/// Trailing moving average; the first entries average what is available.
std::vector<double> moving_average(const std::vector<double>& values, int window);

/// Per-episode return averaged over seeds, then smoothed.
struct Curve {
  Method method = Method::dqn;
  std::vector<int> episodes;
  std::vector<double> values;
};
std::vector<Curve> learning_curves(const std::vector<RunRecord>& records, EnvKind env, int smoothing_window);
std::vector<int> drift_episodes(const std::vector<RunRecord>& records, EnvKind env);

/// Writes an SVG figure with one curve per method and a dashed marker per drift.
void write_svg_plot(std::ostream& out, const std::vector<Curve>& curves, const std::vector<int>& drifts,
                    const std::string& title);
void write_curves_csv(std::ostream& out, const std::vector<Curve>& curves);
/// Emits `<out>` (or `<stem>_<env><ext>` when several environments are present)
/// plus a matching `.csv` of the plotted values. Returns the figures written.
std::vector<std::filesystem::path> plot_records(const std::vector<RunRecord>& records,
                                                const std::filesystem::path& out, int smoothing_window);

// Orchestration --------------------------------------------------------------

struct ExperimentResult {
  std::vector<RunRecord> records;
  std::vector<SummaryRow> summary;
  std::vector<std::filesystem::path> files;
};

/// Executes every (method, seed) pair, writing one CSV per pair, a
/// summary.csv, a config echo and GB-DQN ensemble checkpoints into
/// `config.output_dir`. `workers` = 0 picks the hardware concurrency.
ExperimentResult run_experiment(const ExperimentConfig& config, unsigned workers = 0, std::ostream* log = nullptr);

}  // namespace gbdqn
