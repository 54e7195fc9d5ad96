#pragma once

#include "gmix/baselines.hpp"
#include "gmix/inference.hpp"
#include "gmix/io.hpp"
#include "gmix/model.hpp"
#include "gmix/simulation.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gmix::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericalError = 3, kDataError = 4 };

/// Model and optimiser settings of a fit; the JSON "fit" config.
struct FitSettings {
  std::optional<Mode> mode;  // taken from --mode when absent
  Index m_gamma = 15;
  Index m_omega = 15;
  Priors priors;
  std::vector<std::string> active_features;  // empty: all
  FitConfig fit;
  double level = 0.95;

  ModelSpec model_spec(const io::DatasetSchema& schema, Mode mode) const;
  std::string to_json() const;
};

/// Scenario plus benchmark-only fields; the JSON "scenario" config.
struct BenchmarkSettings {
  ScenarioConfig scenario;
  std::vector<std::uint64_t> seeds{1};
  Mode mode = Mode::Complete;
  FitSettings gmix;
  SocialmixrConfig socialmixr;
  int elpd_folds = 0;  // K-fold ELPD for gmix rows when ≥ 2
};

/// Parsers reject unknown keys and wrong types with the JSON path of the offence (ConfigError).
ScenarioConfig parse_scenario(const std::string& json_text);
FitSettings parse_fit_settings(const std::string& json_text);
BenchmarkSettings parse_benchmark(const std::string& json_text);
std::string scenario_to_json(const ScenarioConfig& config);

struct SimulateArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};

struct FitArgs {
  std::filesystem::path data;
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::optional<Mode> mode;
  std::optional<std::uint64_t> seed;
};

struct PredictArgs {
  std::filesystem::path fit;
  std::vector<double> alpha{1.0};
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<Index> draws;
};

struct BenchmarkArgs {
  std::filesystem::path config;
  std::vector<std::string> methods{"gmix", "socialmixr_ext"};
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

/// population.csv, respondents.csv, contacts_*.csv, dataset.json, ground_truth/, manifest.json.
void cmd_simulate(const SimulateArgs& args, std::ostream& log);
/// summaries.csv, elbo_trace.csv, state.json, fit_meta.json, timing.json.
void cmd_fit(const FitArgs& args, std::ostream& log);
/// alpha_<value>/{bounds.csv, eta_summary.csv, m_summary.csv} for every α.
void cmd_predict(const PredictArgs& args, std::ostream& log);
/// report.json, metrics.csv, plot_data.csv, estimates/, logs/, timing.json.
void cmd_benchmark(const BenchmarkArgs& args, std::ostream& log);

/// Estimate file of one benchmark job: the cells with truth and interval.
struct ScoredEstimate {
  Tensor3 mean, lower, upper, truth;
};
ScoredEstimate read_estimate(const std::filesystem::path& path, Index slices, Index ages);

struct Scores {
  double mape = 0.0;
  double rmse = 0.0;
  double interval_score = 0.0;
  double coverage = 0.0;
};
Scores score(const ScoredEstimate& e, double level);

/// Directory name of one α in predict output, e.g. "alpha_0.5".
std::string alpha_dir(double alpha);

/// Parses argv and dispatches; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gmix::cli
