#include "gmix_cli/cli.hpp"

#include "gmix/error.hpp"

#include "CLI11.hpp"

#include <ostream>

namespace gmix::cli {

namespace {

std::optional<Mode> parse_mode(const std::string& text) {
  if (text.empty()) return std::nullopt;
  try {
    return mode_from_string(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("--mode: ") + e.what());
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stratified social contact matrices: simulate, fit, predict and benchmark", "gmix"};
  app.require_subcommand(1);

  SimulateArgs sim;
  std::optional<std::uint64_t> sim_seed;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic survey and its ground truth");
  simulate->add_option("--config", sim.config, "Scenario config (JSON)")->required();
  simulate->add_option("--out", sim.out, "Output directory")->required();
  simulate->add_option("--seed", sim_seed, "Overrides the config seed");

  FitArgs fa;
  std::string fit_mode;
  std::optional<std::uint64_t> fit_seed;
  std::string fit_config;
  auto* fitc = app.add_subcommand("fit", "Fit the model to a survey dataset directory");
  fitc->add_option("--data", fa.data, "Dataset directory (dataset.json)")->required();
  fitc->add_option("--config", fit_config, "Fit config (JSON); defaults when omitted");
  fitc->add_option("--out", fa.out, "Output directory")->required();
  fitc->add_option("--mode", fit_mode, "complete or partial");
  fitc->add_option("--seed", fit_seed, "Overrides the config seed");

  PredictArgs pa;
  std::optional<std::uint64_t> pred_seed;
  std::optional<Index> pred_draws;
  auto* predict = app.add_subcommand("predict", "Predict complete intensities from a partial-mode fit");
  predict->add_option("--fit", pa.fit, "Directory written by `gmix fit`")->required();
  predict->add_option("--alpha", pa.alpha, "Prior concentration; repeat or comma-separate for a sweep")
      ->delimiter(',');
  predict->add_option("--out", pa.out, "Output directory")->required();
  predict->add_option("--seed", pred_seed, "Defaults to the fit seed");
  predict->add_option("--draws", pred_draws, "Posterior draws; defaults to the fit setting");

  BenchmarkArgs ba;
  std::optional<std::uint64_t> bench_seed;
  auto* benchmark = app.add_subcommand("benchmark", "Simulate, fit and score methods across seeds");
  benchmark->add_option("--config", ba.config, "Scenario config with optional benchmark keys (JSON)")->required();
  benchmark->add_option("--methods", ba.methods, "gmix, socialmixr_ext")->delimiter(',');
  benchmark->add_option("--out", ba.out, "Output directory")->required();
  benchmark->add_option("--seed", bench_seed, "Run this single seed instead of the config seeds");
  benchmark->add_option("--jobs", ba.jobs, "Concurrent (seed, method) jobs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*simulate) {
      sim.seed = sim_seed;
      cmd_simulate(sim, out);
    } else if (*fitc) {
      if (!fit_config.empty()) fa.config = fit_config;
      fa.mode = parse_mode(fit_mode);
      fa.seed = fit_seed;
      cmd_fit(fa, out);
    } else if (*predict) {
      pa.seed = pred_seed;
      pa.draws = pred_draws;
      cmd_predict(pa, out);
    } else if (*benchmark) {
      ba.seed = bench_seed;
      cmd_benchmark(ba, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::invalid_argument& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}

}  // namespace gmix::cli
