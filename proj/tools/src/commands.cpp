#include "gmix_cli/cli.hpp"

#include "gmix/error.hpp"
#include "gmix/metrics.hpp"
#include "gmix/prediction.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

namespace gmix::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string quantile_label(double p) {
  // 0.025 → "q2.5"
  return "q" + io::format_double(std::round(p * 1e8) / 1e6);
}

/// How the slices of a summarised tensor map onto stratum labels.
enum class Layout { Complete, Partial, Single };

std::pair<std::string, std::string> slice_labels(Index i, Layout layout, const StrataSpace& space) {
  const Index K = space.size();
  switch (layout) {
    case Layout::Complete:
      return {space.label(i / K), space.label(i % K)};
    case Layout::Partial:
      return {space.label(i), "all"};
    case Layout::Single:
      break;
  }
  return {"all", "all"};
}

Layout layout_of(Mode mode) { return mode == Mode::Complete ? Layout::Complete : Layout::Partial; }

void write_summary_rows(io::CsvWriter& w, const std::string& quantity, const Summary& s, Layout layout,
                        const StrataSpace& space, const AgeGrid& grid, bool ages = true) {
  for (Index i = 0; i < s.mean.slices(); ++i) {
    const auto [from, to] = slice_labels(i, layout, space);
    for (Index a = 0; a < s.mean.ages(); ++a)
      for (Index b = 0; b < s.mean.ages(); ++b)
        w.row({quantity, from, to, ages ? std::to_string(grid.age(a)) : "", ages ? std::to_string(grid.age(b)) : "",
               io::format_double(s.mean(i, a, b)), io::format_double(s.lower(i, a, b)),
               io::format_double(s.upper(i, a, b))});
  }
}

std::vector<std::string> summary_header(double level) {
  return {"quantity", "stratum",           "contact_stratum",         "age", "contact_age",
          "mean",     quantile_label((1 - level) / 2), quantile_label((1 + level) / 2)};
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const json& j, const std::string& what) {
  if (!j.is_array()) throw DataError(what + ": expected an array");
  Eigen::VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

json read_json(const fs::path& path) {
  try {
    return json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

void write_timing(const fs::path& dir, double seconds) {
  write_json(dir / "timing.json", {{"runtime_seconds", seconds}});
}

/// Fit settings resolved against flags: mode and seed from the command line win.
FitSettings resolve_fit_settings(const std::optional<fs::path>& config, std::optional<Mode> mode,
                                 std::optional<std::uint64_t> seed) {
  FitSettings s = config ? parse_fit_settings(io::read_text(*config)) : FitSettings{};
  if (mode) s.mode = mode;
  if (!s.mode) throw ConfigError("--mode: required (complete or partial) when the fit config sets none");
  if (seed) s.fit.seed = *seed;
  return s;
}

}  // namespace

std::string alpha_dir(double alpha) { return "alpha_" + io::format_double(alpha); }

void cmd_simulate(const SimulateArgs& args, std::ostream& log) {
  ScenarioConfig cfg = parse_scenario(io::read_text(args.config));
  if (args.seed) cfg.seed = *args.seed;
  const std::string resolved = scenario_to_json(cfg);
  const std::string hash = io::fnv1a_hex(resolved);

  const Scenario sc = simulate_scenario(cfg);
  io::DatasetSchema schema;
  schema.grid = cfg.grid;
  schema.space = sc.space;
  io::write_dataset(args.out, schema, sc.truth.pop, sc.survey.respondents, sc.survey.records);

  const fs::path gt = args.out / "ground_truth";
  fs::create_directories(gt);
  io::write_matrix(gt / "gamma.csv", sc.truth.gamma, cfg.grid);
  io::write_tensor(gt / "delta.csv", sc.truth.delta, Mode::Complete, sc.space, cfg.grid);
  io::write_tensor(gt / "m.csv", sc.truth.m, Mode::Complete, sc.space, cfg.grid);
  io::write_tensor(gt / "eta.csv", sc.truth.eta, Mode::Complete, sc.space, cfg.grid);
  io::write_tensor(gt / "delta_partial.csv", sc.truth.delta_partial, Mode::Partial, sc.space, cfg.grid);
  io::write_tensor(gt / "m_partial.csv", sc.truth.m_partial, Mode::Partial, sc.space, cfg.grid);

  json manifest;
  manifest["command"] = "simulate";
  manifest["config_hash"] = hash;
  manifest["seed"] = cfg.seed;
  manifest["config"] = json::parse(resolved);
  manifest["respondents"] = sc.survey.respondents.size();
  manifest["contacts"] = sc.survey.records.size();
  manifest["strata"] = sc.space.size();
  manifest["ground_truth_matrices"] = sc.truth.m.slices();
  manifest["files"] = {"dataset.json",
                       "population.csv",
                       "respondents.csv",
                       "contacts_complete.csv",
                       "contacts_partial.csv",
                       "ground_truth/gamma.csv",
                       "ground_truth/delta.csv",
                       "ground_truth/m.csv",
                       "ground_truth/eta.csv",
                       "ground_truth/delta_partial.csv",
                       "ground_truth/m_partial.csv"};
  write_json(args.out / "manifest.json", manifest);
  log << "seed " << cfg.seed << "\n"
      << "wrote " << sc.survey.respondents.size() << " respondents, " << sc.survey.records.size() << " contacts, "
      << sc.truth.m.slices() << " ground-truth matrices to " << args.out.string() << "\n";
}

void cmd_fit(const FitArgs& args, std::ostream& log) {
  const FitSettings settings = resolve_fit_settings(args.config, args.mode, args.seed);
  const Mode mode = *settings.mode;
  const auto t0 = Clock::now();

  const io::Dataset ds = io::read_dataset(args.data, mode);
  SurveyTensor survey = ds.survey();
  survey.validate();
  auto model = std::make_shared<const Model>(settings.model_spec(ds.schema, mode), std::move(survey), ds.pop);

  fs::create_directories(args.out);
  const std::string hash = io::fnv1a_hex(settings.to_json() + "|" + io::fnv1a_hex(io::read_text(args.data / "dataset.json")));
  log << "seed " << settings.fit.seed << "\n"
      << "fitting " << to_string(mode) << "-mode model with " << model->dim() << " parameters ("
      << to_string(settings.fit.method) << ", " << settings.fit.iterations << " iterations)\n";

  auto write_trace = [&](const std::vector<double>& trace) {
    io::CsvWriter w(args.out / "elbo_trace.csv", {"step", settings.fit.method == FitMethod::Map ? "log_joint" : "elbo"});
    for (std::size_t i = 0; i < trace.size(); ++i) w.row({std::to_string(i), io::format_double(trace[i])});
  };
  VariationalState state;
  try {
    state = fit(*model, settings.fit);
  } catch (const FitDivergence& e) {
    write_trace(e.trace());
    throw;
  }
  write_trace(state.trace);

  const PosteriorSamples post = sample_posterior(state, model, settings.fit.posterior_draws, settings.fit.seed);
  {
    io::CsvWriter w(args.out / "summaries.csv", summary_header(settings.level));
    const auto& space = ds.schema.space;
    const auto& grid = ds.schema.grid;
    write_summary_rows(w, "gamma", summarize(post, "gamma", settings.level), Layout::Single, space, grid);
    write_summary_rows(w, "delta", summarize(post, "delta", settings.level), layout_of(mode), space, grid);
    write_summary_rows(w, "m", summarize(post, "m", settings.level), layout_of(mode), space, grid);
    write_summary_rows(w, "phi", summarize(post, "phi", settings.level), Layout::Single, space, grid, false);
  }

  json st;
  st["names"] = json::array();
  for (Index i = 0; i < model->dim(); ++i) st["names"].push_back(model->layout().name(i));
  st["mu"] = vector_json(state.mu);
  st["log_sigma"] = state.point_mass ? json(nullptr) : vector_json(state.log_sigma);
  st["point_mass"] = state.point_mass;
  st["step"] = state.step;
  write_json(args.out / "state.json", st);

  json meta;
  meta["command"] = "fit";
  meta["config_hash"] = hash;
  meta["data"] = fs::absolute(args.data).lexically_normal().string();
  meta["mode"] = to_string(mode);
  meta["seed"] = settings.fit.seed;
  meta["settings"] = json::parse(settings.to_json());
  meta["parameters"] = model->dim();
  meta["final_objective"] = state.trace.empty() ? json(nullptr) : json(state.trace.back());
  meta["runtime_file"] = "timing.json";
  write_json(args.out / "fit_meta.json", meta);

  const double runtime = seconds_since(t0);
  write_timing(args.out, runtime);
  log << "final " << (state.trace.empty() ? 0.0 : state.trace.back()) << ", " << runtime << " s\n";
}

void cmd_predict(const PredictArgs& args, std::ostream& log) {
  if (args.alpha.empty()) throw ConfigError("--alpha: at least one value required");
  for (double a : args.alpha)
    if (!(a > 0) || !std::isfinite(a)) throw ConfigError("--alpha: values must be positive, got " + io::format_double(a));
  if (args.draws && *args.draws < 1) throw ConfigError("--draws: must be positive");

  const json meta = read_json(args.fit / "fit_meta.json");
  if (meta.value("mode", "") != "partial")
    throw DataError(args.fit.string() + " holds a " + meta.value("mode", std::string("?")) +
                    "-mode fit; prediction needs a partial-mode fit");
  const FitSettings settings = parse_fit_settings(meta.at("settings").dump());
  const std::uint64_t fit_seed = meta.at("seed").get<std::uint64_t>();
  const std::uint64_t seed = args.seed.value_or(fit_seed);

  const io::Dataset ds = io::read_dataset(meta.at("data").get<std::string>(), Mode::Partial);
  auto model =
      std::make_shared<const Model>(settings.model_spec(ds.schema, Mode::Partial), ds.survey(), ds.pop);
  const json st = read_json(args.fit / "state.json");
  VariationalState state;
  state.mu = vector_from(st.at("mu"), "state.json mu");
  state.point_mass = st.at("point_mass").get<bool>();
  state.log_sigma = state.point_mass
                        ? Eigen::VectorXd::Constant(state.mu.size(), -std::numeric_limits<double>::infinity())
                        : vector_from(st.at("log_sigma"), "state.json log_sigma");
  if (state.mu.size() != model->dim() || state.log_sigma.size() != model->dim())
    throw DataError("state.json has " + std::to_string(state.mu.size()) + " parameters, the model needs " +
                    std::to_string(model->dim()));

  const Index draws = args.draws.value_or(settings.fit.posterior_draws);
  const PosteriorSamples post = sample_posterior(state, model, draws, fit_seed);
  const auto& space = ds.schema.space;
  const auto& grid = ds.schema.grid;
  const Index K = space.size(), A = grid.size();
  log << "seed " << seed << "\n";

  // Bounds from the posterior-mean partial intensities; balance is linear so the mean stays balanced.
  const Summary m_partial = summarize(post, "m", settings.level);
  const MixingBounds bounds = mixing_bounds(expected_margins(m_partial.mean, ds.pop), 1e-6);

  json out_meta;
  out_meta["command"] = "predict";
  out_meta["fit_config_hash"] = meta.at("config_hash");
  out_meta["seed"] = seed;
  out_meta["draws"] = draws;
  out_meta["alpha"] = args.alpha;
  std::string hash_input = meta.at("config_hash").get<std::string>() + "|" + std::to_string(seed) + "|" +
                           std::to_string(draws);
  for (double a : args.alpha) hash_input += "|" + io::format_double(a);
  out_meta["config_hash"] = io::fnv1a_hex(hash_input);
  fs::create_directories(args.out);

  for (double alpha : args.alpha) {
    const fs::path dir = args.out / alpha_dir(alpha);
    fs::create_directories(dir);
    {
      io::CsvWriter w(dir / "bounds.csv", {"stratum", "contact_stratum", "age", "contact_age", "lower", "upper"});
      for (Index i = 0; i < K * K; ++i)
        for (Index a = 0; a < A; ++a)
          for (Index b = 0; b < A; ++b)
            w.row({space.label(i / K), space.label(i % K), std::to_string(grid.age(a)), std::to_string(grid.age(b)),
                   io::format_double(bounds.lower(i, a, b)), io::format_double(bounds.upper(i, a, b))});
    }
    const CompletePrediction pred = predict_complete(post, ds.pop, alpha, seed);
    // η in slices [0, K²), m in [K², 2K²), so one pass regenerates both.
    const Summary both = summarize_draws(
        draws,
        [&](Index d) {
          const CompleteDraw cd = pred.draw(d);
          Tensor3 t(2 * K * K, A);
          std::copy(cd.eta.values().begin(), cd.eta.values().end(), t.values().begin());
          std::copy(cd.m.values().begin(), cd.m.values().end(), t.values().begin() + cd.eta.size());
          return t;
        },
        settings.level);
    auto half = [&](const Tensor3& t, Index first) {
      Tensor3 out(K * K, A);
      std::copy(t.values().begin() + first * A * A, t.values().begin() + (first + K * K) * A * A,
                out.values().begin());
      return out;
    };
    const Summary eta{half(both.mean, 0), half(both.lower, 0), half(both.upper, 0)};
    const Summary m{half(both.mean, K * K), half(both.lower, K * K), half(both.upper, K * K)};
    {
      io::CsvWriter w(dir / "eta_summary.csv", summary_header(settings.level));
      write_summary_rows(w, "eta", eta, Layout::Complete, space, grid);
    }
    {
      io::CsvWriter w(dir / "m_summary.csv", summary_header(settings.level));
      write_summary_rows(w, "m", m, Layout::Complete, space, grid);
    }
    log << "alpha " << io::format_double(alpha) << ": wrote " << dir.string() << "\n";
  }
  write_json(args.out / "predict_meta.json", out_meta);
}

ScoredEstimate read_estimate(const fs::path& path, Index slices, Index ages) {
  const io::CsvTable t = io::read_csv(path);
  if (static_cast<Index>(t.rows.size()) != slices * ages * ages)
    throw DataError(path.string() + ": expected " + std::to_string(slices * ages * ages) + " rows");
  ScoredEstimate e{Tensor3(slices, ages), Tensor3(slices, ages), Tensor3(slices, ages), Tensor3(slices, ages)};
  const std::size_t cm = static_cast<std::size_t>(t.column("mean")), cl = static_cast<std::size_t>(t.column("lower")),
                    cu = static_cast<std::size_t>(t.column("upper")), ct = static_cast<std::size_t>(t.column("truth"));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = path.string() + " row " + std::to_string(r + 2);
    e.mean.values()[r] = io::parse_double(t.rows[r][cm], where);
    e.lower.values()[r] = io::parse_double(t.rows[r][cl], where);
    e.upper.values()[r] = io::parse_double(t.rows[r][cu], where);
    e.truth.values()[r] = io::parse_double(t.rows[r][ct], where);
  }
  return e;
}

Scores score(const ScoredEstimate& e, double level) {
  return {mape(e.mean, e.truth).value, rmse(e.mean, e.truth), interval_score(e.lower, e.upper, e.truth, level),
          coverage(e.lower, e.upper, e.truth)};
}

namespace {

struct JobResult {
  std::uint64_t seed = 0;
  std::string method;
  std::optional<Scores> scores;
  std::optional<double> elpd;
  double runtime = 0.0;
  std::string error;
};

void write_estimate(const fs::path& path, const Tensor3& mean, const Tensor3& lower, const Tensor3& upper,
                    const Tensor3& truth, Mode mode, const StrataSpace& space, const AgeGrid& grid) {
  io::CsvWriter w(path, {"stratum", "contact_stratum", "age", "contact_age", "mean", "lower", "upper", "truth"});
  for (Index i = 0; i < mean.slices(); ++i) {
    const auto [from, to] = slice_labels(i, layout_of(mode), space);
    for (Index a = 0; a < mean.ages(); ++a)
      for (Index b = 0; b < mean.ages(); ++b)
        w.row({from, to, std::to_string(grid.age(a)), std::to_string(grid.age(b)), io::format_double(mean(i, a, b)),
               io::format_double(lower(i, a, b)), io::format_double(upper(i, a, b)),
               io::format_double(truth(i, a, b))});
  }
}

json nullable(std::optional<double> v) { return v && std::isfinite(*v) ? json(*v) : json(nullptr); }

}  // namespace

void cmd_benchmark(const BenchmarkArgs& args, std::ostream& log) {
  BenchmarkSettings b = parse_benchmark(io::read_text(args.config));
  if (args.seed) b.seeds = {*args.seed};
  if (args.methods.empty()) throw ConfigError("--methods: at least one method required");
  for (const auto& m : args.methods)
    if (m != "gmix" && m != "socialmixr_ext")
      throw ConfigError("--methods: unknown method '" + m + "' (expected gmix or socialmixr_ext)");
  if (args.jobs < 1) throw ConfigError("--jobs: must be at least 1");
  std::vector<std::string> methods = args.methods;
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());
  const double level = b.gmix.level;
  const Mode mode = b.mode;

  json resolved;
  resolved["scenario"] = json::parse(scenario_to_json(b.scenario));
  resolved["seeds"] = b.seeds;
  resolved["mode"] = to_string(mode);
  resolved["gmix"] = json::parse(b.gmix.to_json());
  resolved["socialmixr"] = {{"breakpoints", b.socialmixr.breakpoints},
                            {"coarsen", b.socialmixr.coarsen},
                            {"coarsen_alpha", b.socialmixr.coarsen_alpha},
                            {"replicates", b.socialmixr.replicates},
                            {"level", b.socialmixr.level},
                            {"reciprocity", b.socialmixr.reciprocity}};
  resolved["elpd_folds"] = b.elpd_folds;
  resolved["methods"] = methods;
  const std::string hash = io::fnv1a_hex(resolved.dump());

  fs::create_directories(args.out / "estimates");
  fs::create_directories(args.out / "logs");
  const auto t0 = Clock::now();

  // Scenarios are cheap and shared by the methods of a seed.
  std::map<std::uint64_t, Scenario> scenarios;
  for (auto seed : b.seeds) {
    ScenarioConfig sc = b.scenario;
    sc.seed = seed;
    scenarios.emplace(seed, simulate_scenario(sc));
  }

  std::vector<JobResult> results;
  for (auto seed : b.seeds)
    for (const auto& m : methods) results.push_back({seed, m, {}, {}, 0.0, {}});

  std::mutex log_mutex;
  auto run_job = [&](JobResult& job) {
    const Scenario& sc = scenarios.at(job.seed);
    const std::string stem = "seed" + std::to_string(job.seed) + "_" + job.method;
    std::ofstream jlog(args.out / "logs" / (stem + ".log"));
    const auto start = Clock::now();
    try {
      const SurveyTensor& data = mode == Mode::Complete ? sc.survey.complete : sc.survey.partial;
      const Tensor3& truth = mode == Mode::Complete ? sc.truth.m : sc.truth.m_partial;
      io::DatasetSchema schema;
      schema.grid = sc.config.grid;
      schema.space = sc.space;
      const fs::path est = args.out / "estimates" / (stem + ".csv");
      if (job.method == "gmix") {
        FitConfig cfg = b.gmix.fit;
        cfg.seed = job.seed;
        const ModelSpec spec = b.gmix.model_spec(schema, mode);
        auto model = std::make_shared<const Model>(spec, data, sc.truth.pop);
        jlog << "fitting " << model->dim() << " parameters\n";
        const VariationalState state = fit(*model, cfg);
        jlog << "final objective " << state.trace.back() << "\n";
        const Summary s = summarize(sample_posterior(state, model, cfg.posterior_draws, cfg.seed), "m", level);
        write_estimate(est, s.mean, s.lower, s.upper, truth, mode, sc.space, sc.config.grid);
        if (b.elpd_folds >= 2) {
          const ElpdResult e = kfold_elpd(spec, data, sc.truth.pop, b.elpd_folds, cfg, cfg.posterior_draws);
          job.elpd = e.elpd;
          jlog << "elpd " << e.elpd << " (se " << e.se << ")\n";
        }
      } else {
        SocialmixrConfig cfg = b.socialmixr;
        cfg.seed = job.seed;
        const auto records =
            mode == Mode::Complete ? sc.survey.records : drop_contact_strata(sc.survey.records);
        const SocialmixrEstimate e = socialmixr_ext(sc.survey.respondents, records, sc.space, sc.config.grid,
                                                    sc.truth.pop, mode, cfg);
        jlog << e.partition.size() << " age ranges, " << e.boot.failures << " failed replicates"
             << (e.coarsen_warning ? ", coarsening rule still unmet" : "") << "\n";
        write_estimate(est, e.point_fine, e.lower_fine, e.upper_fine, truth, mode, sc.space, sc.config.grid);
      }
      // Score the saved artifact so the report always agrees with a re-scoring of the files.
      job.scores = score(read_estimate(est, truth.slices(), truth.ages()), level);
      jlog << "mape " << job.scores->mape << "\n";
    } catch (const std::exception& e) {
      job.error = e.what();
      jlog << "failed: " << e.what() << "\n";
    }
    job.runtime = seconds_since(start);
    std::lock_guard lock(log_mutex);
    log << stem << (job.error.empty() ? " done" : " failed: " + job.error) << "\n";
  };

  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(args.jobs), results.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < results.size(); i = next++) run_job(results[i]);
    });
  for (auto& t : pool) t.join();

  json report;
  report["command"] = "benchmark";
  report["config_hash"] = hash;
  report["config"] = resolved;
  report["rows"] = json::array();
  io::CsvWriter metrics(args.out / "metrics.csv",
                        {"seed", "method", "mape", "rmse", "interval_score", "coverage", "elpd", "status"});
  io::CsvWriter plot(args.out / "plot_data.csv", {"seed", "method", "metric", "value"});
  auto text = [](std::optional<double> v) { return v && std::isfinite(*v) ? io::format_double(*v) : "NA"; };
  for (const auto& r : results) {
    std::optional<double> mp, rm, is, cv;
    if (r.scores) mp = r.scores->mape, rm = r.scores->rmse, is = r.scores->interval_score, cv = r.scores->coverage;
    const std::string status = r.error.empty() ? "ok" : "failed";
    report["rows"].push_back({{"seed", r.seed},
                              {"method", r.method},
                              {"mape", nullable(mp)},
                              {"rmse", nullable(rm)},
                              {"interval_score", nullable(is)},
                              {"coverage", nullable(cv)},
                              {"elpd", nullable(r.elpd)},
                              {"runtime_seconds", r.runtime},
                              {"status", status},
                              {"error", r.error}});
    const std::string seed = std::to_string(r.seed);
    metrics.row({seed, r.method, text(mp), text(rm), text(is), text(cv), text(r.elpd), status});
    for (auto [name, v] : {std::pair{"mape", mp}, std::pair{"rmse", rm}, std::pair{"interval_score", is},
                           std::pair{"coverage", cv}, std::pair{"elpd", r.elpd}})
      if (v && std::isfinite(*v)) plot.row({seed, r.method, name, io::format_double(*v)});
  }
  write_json(args.out / "report.json", report);
  write_timing(args.out, seconds_since(t0));
  log << "wrote " << results.size() << " rows to " << (args.out / "report.json").string() << "\n";
}

}  // namespace gmix::cli
