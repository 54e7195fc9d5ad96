#include "gmix_cli/cli.hpp"

#include "gmix/error.hpp"

#include "json.hpp"

#include <set>

namespace gmix::cli {

using nlohmann::json;

namespace {

/// Typed, path-aware view of a JSON object that rejects unknown keys on finish().
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
  }

  std::string at(const std::string& key) const { return path_ + "." + key; }

  const json* find(const std::string& key) {
    used_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(at(key), "expected a number");
      out = v->get<double>();
    }
  }

  template <class Int>
  void integer(const std::string& key, Int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(at(key), "expected an integer");
      if (v->is_number_unsigned() || v->get<long long>() >= 0) {
        out = static_cast<Int>(v->get<unsigned long long>());
      } else {
        if constexpr (std::is_unsigned_v<Int>) fail(at(key), "expected a non-negative integer");
        out = static_cast<Int>(v->get<long long>());
      }
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  std::vector<std::string> strings(const std::string& key) {
    std::vector<std::string> out;
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(at(key), "expected an array of strings");
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_string()) fail(at(key) + "[" + std::to_string(i) + "]", "expected a string");
        out.push_back((*v)[i].get<std::string>());
      }
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!used_.count(key)) fail(at(key), "unknown key");
  }

  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("$: invalid JSON: ") + e.what());
  }
}

/// Runs a validate() and prefixes its message with a JSON path.
template <class F>
void checked(const std::string& path, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

ScenarioConfig scenario_from(Obj& o) {
  ScenarioConfig c;
  o.integer("seed", c.seed);
  if (const json* g = o.find("grid")) {
    Obj go(*g, o.at("grid"));
    int lo = c.grid.min_age(), hi = c.grid.max_age();
    go.integer("min_age", lo);
    go.integer("max_age", hi);
    go.finish();
    checked(go.path(), [&] { c.grid = AgeGrid(lo, hi); });
  }
  o.integer("respondents", c.respondents);
  o.number("mean_intensity", c.mean_intensity);
  if (const json* fs = o.find("features")) {
    if (!fs->is_array()) Obj::fail(o.at("features"), "expected an array");
    for (std::size_t i = 0; i < fs->size(); ++i) {
      Obj fo((*fs)[i], o.at("features") + "[" + std::to_string(i) + "]");
      std::string name;
      fo.string("name", name);
      auto cats = fo.strings("categories");
      FeatureScenario f;
      checked(fo.path(), [&] { f.spec = FeatureSpec(name, cats); });
      fo.number("eta", f.eta);
      fo.number("nu", f.nu);
      fo.number("alpha", f.alpha);
      fo.finish();
      c.features.push_back(std::move(f));
    }
  }
  if (const json* bp = o.find("base_population")) {
    if (!bp->is_array()) Obj::fail(o.at("base_population"), "expected an array of numbers");
    Eigen::VectorXd v(static_cast<Index>(bp->size()));
    for (std::size_t i = 0; i < bp->size(); ++i) {
      if (!(*bp)[i].is_number())
        Obj::fail(o.at("base_population") + "[" + std::to_string(i) + "]", "expected a number");
      v(static_cast<Index>(i)) = (*bp)[i].get<double>();
    }
    c.base_population = v;
  }
  checked(o.path(), [&] { c.validate(); });
  return c;
}

FitSettings fit_from(Obj& o) {
  FitSettings s;
  std::string mode, method = to_string(s.fit.method);
  o.string("mode", mode);
  if (!mode.empty()) checked(o.at("mode"), [&] { s.mode = mode_from_string(mode); });
  o.string("method", method);
  checked(o.at("method"), [&] { s.fit.method = fit_method_from_string(method); });
  o.integer("m_gamma", s.m_gamma);
  o.integer("m_omega", s.m_omega);
  o.integer("iterations", s.fit.iterations);
  o.integer("mc_samples", s.fit.mc_samples);
  o.number("max_lr", s.fit.max_lr);
  o.number("pct_start", s.fit.pct_start);
  o.number("div_factor", s.fit.div_factor);
  o.number("final_div_factor", s.fit.final_div_factor);
  o.integer("seed", s.fit.seed);
  o.integer("posterior_draws", s.fit.posterior_draws);
  o.number("init_sigma", s.fit.init_sigma);
  o.integer("max_consecutive_failures", s.fit.max_consecutive_failures);
  o.number("level", s.level);
  if (const json* p = o.find("priors")) {
    Obj po(*p, o.at("priors"));
    po.number("tau_shape", s.priors.tau_shape);
    po.number("tau_rate", s.priors.tau_rate);
    po.number("beta0_sd", s.priors.beta0_sd);
    po.number("phi_rate", s.priors.phi_rate);
    po.finish();
    if (!(s.priors.tau_shape > 0 && s.priors.tau_rate > 0 && s.priors.beta0_sd > 0 && s.priors.phi_rate > 0))
      Obj::fail(po.path(), "prior parameters must be positive");
  }
  s.active_features = o.strings("active_features");
  if (s.m_gamma < 4) Obj::fail(o.at("m_gamma"), "needs at least 4 basis functions");
  if (s.m_omega < 4) Obj::fail(o.at("m_omega"), "needs at least 4 basis functions");
  if (!(s.level > 0 && s.level < 1)) Obj::fail(o.at("level"), "must lie in (0, 1)");
  checked(o.path(), [&] { s.fit.validate(); });
  return s;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& json_text) {
  const json j = parse_text(json_text);
  Obj o(j, "$");
  auto c = scenario_from(o);
  o.finish();
  return c;
}

FitSettings parse_fit_settings(const std::string& json_text) {
  const json j = parse_text(json_text);
  Obj o(j, "$");
  auto s = fit_from(o);
  o.finish();
  return s;
}

BenchmarkSettings parse_benchmark(const std::string& json_text) {
  const json j = parse_text(json_text);
  Obj o(j, "$");
  BenchmarkSettings b;
  b.scenario = scenario_from(o);
  if (const json* seeds = o.find("seeds")) {
    if (!seeds->is_array() || seeds->empty()) Obj::fail(o.at("seeds"), "expected a non-empty array of integers");
    b.seeds.clear();
    for (std::size_t i = 0; i < seeds->size(); ++i) {
      if (!(*seeds)[i].is_number_unsigned())
        Obj::fail(o.at("seeds") + "[" + std::to_string(i) + "]", "expected a non-negative integer");
      b.seeds.push_back((*seeds)[i].get<std::uint64_t>());
    }
  } else {
    b.seeds = {b.scenario.seed};
  }
  std::string mode = to_string(b.mode);
  o.string("mode", mode);
  checked(o.at("mode"), [&] { b.mode = mode_from_string(mode); });
  o.integer("elpd_folds", b.elpd_folds);
  if (b.elpd_folds == 1 || b.elpd_folds < 0) Obj::fail(o.at("elpd_folds"), "use 0 (off) or at least 2 folds");
  if (const json* g = o.find("gmix")) {
    Obj go(*g, o.at("gmix"));
    b.gmix = fit_from(go);
    go.finish();
  }
  if (const json* sm = o.find("socialmixr")) {
    Obj so(*sm, o.at("socialmixr"));
    if (const json* bp = so.find("breakpoints")) {
      if (!bp->is_array()) Obj::fail(so.at("breakpoints"), "expected an array of ages");
      for (const auto& v : *bp) {
        if (!v.is_number_integer()) Obj::fail(so.at("breakpoints"), "expected integer ages");
        b.socialmixr.breakpoints.push_back(v.get<int>());
      }
    }
    so.boolean("coarsen", b.socialmixr.coarsen);
    so.number("coarsen_alpha", b.socialmixr.coarsen_alpha);
    so.integer("replicates", b.socialmixr.replicates);
    so.number("level", b.socialmixr.level);
    so.boolean("reciprocity", b.socialmixr.reciprocity);
    so.finish();
    if (b.socialmixr.replicates < 2) Obj::fail(so.at("replicates"), "needs at least 2 replicates");
    if (!(b.socialmixr.level > 0 && b.socialmixr.level < 1)) Obj::fail(so.at("level"), "must lie in (0, 1)");
  }
  o.finish();
  return b;
}

std::string scenario_to_json(const ScenarioConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["grid"] = {{"min_age", c.grid.min_age()}, {"max_age", c.grid.max_age()}};
  j["respondents"] = c.respondents;
  j["mean_intensity"] = c.mean_intensity;
  j["features"] = json::array();
  for (const auto& f : c.features)
    j["features"].push_back(
        {{"name", f.spec.name}, {"categories", f.spec.categories}, {"eta", f.eta}, {"nu", f.nu}, {"alpha", f.alpha}});
  if (c.base_population)
    j["base_population"] = std::vector<double>(c.base_population->data(),
                                               c.base_population->data() + c.base_population->size());
  return j.dump();
}

ModelSpec FitSettings::model_spec(const io::DatasetSchema& schema, Mode m) const {
  ModelSpec spec;
  spec.mode = m;
  spec.space = schema.space;
  spec.grid = schema.grid;
  spec.m_gamma = m_gamma;
  spec.m_omega = m_omega;
  spec.priors = priors;
  if (!active_features.empty()) {
    spec.active_features.assign(static_cast<std::size_t>(schema.space.feature_count()), false);
    for (const auto& name : active_features) {
      bool found = false;
      for (Index j = 0; j < schema.space.feature_count(); ++j)
        if (schema.space.features()[static_cast<std::size_t>(j)].name == name) {
          spec.active_features[static_cast<std::size_t>(j)] = true;
          found = true;
        }
      if (!found) throw ConfigError("$.active_features: the dataset has no feature '" + name + "'");
    }
  }
  return spec;
}

std::string FitSettings::to_json() const {
  json j;
  if (mode) j["mode"] = to_string(*mode);
  j["method"] = to_string(fit.method);
  j["m_gamma"] = m_gamma;
  j["m_omega"] = m_omega;
  j["iterations"] = fit.iterations;
  j["mc_samples"] = fit.mc_samples;
  j["max_lr"] = fit.max_lr;
  j["pct_start"] = fit.pct_start;
  j["div_factor"] = fit.div_factor;
  j["final_div_factor"] = fit.final_div_factor;
  j["seed"] = fit.seed;
  j["posterior_draws"] = fit.posterior_draws;
  j["init_sigma"] = fit.init_sigma;
  j["max_consecutive_failures"] = fit.max_consecutive_failures;
  j["level"] = level;
  j["priors"] = {{"tau_shape", priors.tau_shape},
                 {"tau_rate", priors.tau_rate},
                 {"beta0_sd", priors.beta0_sd},
                 {"phi_rate", priors.phi_rate}};
  j["active_features"] = active_features;
  return j.dump();
}

}  // namespace gmix::cli
