#include "gmix/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace gmix {

namespace {

constexpr std::uint64_t kPurposeFit = 1;
constexpr std::uint64_t kPurposeDraws = 2;

}  // namespace

const char* to_string(FitMethod method) { return method == FitMethod::Svi ? "svi" : "map"; }

FitMethod fit_method_from_string(const std::string& name) {
  if (name == "svi") return FitMethod::Svi;
  if (name == "map") return FitMethod::Map;
  throw ConfigError("unknown inference method '" + name + "' (expected svi or map)");
}

void FitConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (mc_samples < 1) throw ConfigError("mc_samples must be at least 1");
  if (!(max_lr > 0.0)) throw ConfigError("max_lr must be positive");
  if (!(pct_start > 0.0 && pct_start < 1.0)) throw ConfigError("pct_start must lie in (0, 1)");
  if (!(div_factor >= 1.0) || !(final_div_factor >= 1.0)) throw ConfigError("schedule factors must be ≥ 1");
  if (posterior_draws < 1) throw ConfigError("posterior_draws must be at least 1");
  if (!(init_sigma > 0.0)) throw ConfigError("init_sigma must be positive");
}

double gaussian_entropy(const Eigen::VectorXd& log_sigma) {
  const double c = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  return log_sigma.sum() + c * static_cast<double>(log_sigma.size());
}

double elbo_and_grad(const VariationalState& state, const LogDensity& log_density, Rng& rng, Index mc_samples,
                     Eigen::VectorXd& grad_mu, Eigen::VectorXd& grad_log_sigma) {
  const Index d = state.mu.size();
  grad_mu = Eigen::VectorXd::Zero(d);
  grad_log_sigma = Eigen::VectorXd::Zero(d);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::VectorXd sigma = state.log_sigma.array().exp().matrix();
  Eigen::VectorXd eps(d), theta(d), g;
  double value = 0.0;
  for (Index s = 0; s < mc_samples; ++s) {
    for (Index i = 0; i < d; ++i) eps(i) = normal(rng);
    theta = state.mu + sigma.cwiseProduct(eps);
    const double lj = log_density(theta, g);
    if (!std::isfinite(lj)) throw NumericalError("non-finite log density inside the ELBO");
    value += lj;
    grad_mu += g;
    grad_log_sigma += g.cwiseProduct(sigma).cwiseProduct(eps);
  }
  const double inv = 1.0 / static_cast<double>(mc_samples);
  grad_mu *= inv;
  grad_log_sigma *= inv;
  grad_log_sigma.array() += 1.0;  // entropy
  return value * inv + gaussian_entropy(state.log_sigma);
}

double one_cycle_lr(Index step, Index total, double max_lr, double pct_start, double div_factor,
                    double final_div_factor) {
  const double start = max_lr / div_factor;
  const double end = start / final_div_factor;
  if (total <= 1) return max_lr;
  const double peak = pct_start * static_cast<double>(total);
  const double t = static_cast<double>(step);
  if (t <= peak) {
    const double frac = peak > 0.0 ? t / peak : 1.0;
    return max_lr + (start - max_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
  }
  const double span = static_cast<double>(total - 1) - peak;
  const double frac = span > 0.0 ? std::min(1.0, (t - peak) / span) : 1.0;
  return end + (max_lr - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

VariationalState fit(const LogDensity& log_density, const Eigen::VectorXd& init, const FitConfig& cfg) {
  cfg.validate();
  const Index d = init.size();
  VariationalState state;
  state.mu = init;
  state.point_mass = cfg.method == FitMethod::Map;
  state.log_sigma = Eigen::VectorXd::Constant(d, state.point_mass ? -INFINITY : std::log(cfg.init_sigma));
  state.trace.reserve(static_cast<std::size_t>(cfg.iterations));

  Rng rng = make_rng(cfg.seed, 0, kPurposeFit);
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(d), v1 = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(d), v2 = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd g_mu, g_ls;
  Index failures = 0;
  Index updates = 0;
  for (Index step = 0; step < cfg.iterations; ++step) {
    double value = NAN;
    bool ok = true;
    try {
      if (state.point_mass) {
        value = log_density(state.mu, g_mu);
      } else {
        value = elbo_and_grad(state, log_density, rng, cfg.mc_samples, g_mu, g_ls);
      }
      ok = std::isfinite(value) && g_mu.allFinite() && (state.point_mass || g_ls.allFinite());
    } catch (const NumericalError&) {
      ok = false;
    }
    state.trace.push_back(ok ? value : NAN);
    state.step = step + 1;
    if (!ok) {
      if (++failures >= cfg.max_consecutive_failures)
        throw FitDivergence("optimisation diverged: objective non-finite for " + std::to_string(failures) +
                                " consecutive steps at iteration " + std::to_string(step),
                            state.trace);
      continue;
    }
    failures = 0;
    ++updates;
    const double lr = one_cycle_lr(step, cfg.iterations, cfg.max_lr, cfg.pct_start, cfg.div_factor,
                                   cfg.final_div_factor);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(updates));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(updates));
    m1 = beta1 * m1 + (1.0 - beta1) * g_mu;
    v1 = beta2 * v1 + (1.0 - beta2) * g_mu.cwiseAbs2();
    state.mu.array() += lr * (m1.array() / c1) / ((v1.array() / c2).sqrt() + adam_eps);
    if (!state.point_mass) {
      m2 = beta1 * m2 + (1.0 - beta1) * g_ls;
      v2 = beta2 * v2 + (1.0 - beta2) * g_ls.cwiseAbs2();
      state.log_sigma.array() += lr * (m2.array() / c1) / ((v2.array() / c2).sqrt() + adam_eps);
    }
  }
  return state;
}

VariationalState fit(const Model& model, const FitConfig& cfg) {
  const LogDensity f = [&model](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    return model.log_joint_and_grad(theta, grad);
  };
  return fit(f, model.initial_params(), cfg);
}

PosteriorSamples::PosteriorSamples(std::shared_ptr<const Model> model, Eigen::MatrixXd draws)
    : model_(std::move(model)), draws_(std::move(draws)) {
  if (!model_) throw DataError("posterior samples need a model");
  if (draws_.cols() != model_->dim()) throw DataError("posterior draws do not match the model dimension");
}

PosteriorSamples sample_posterior(const VariationalState& state, std::shared_ptr<const Model> model, Index draws,
                                  std::uint64_t seed) {
  if (draws < 1) throw ConfigError("need at least one posterior draw");
  const Index d = state.mu.size();
  Eigen::MatrixXd out(draws, d);
  for (Index i = 0; i < draws; ++i) {
    if (state.point_mass) {
      out.row(i) = state.mu.transpose();
      continue;
    }
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(i), kPurposeDraws);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index j = 0; j < d; ++j) out(i, j) = state.mu(j) + std::exp(state.log_sigma(j)) * normal(rng);
  }
  return PosteriorSamples(std::move(model), std::move(out));
}

double quantile(std::vector<double>& values, double p) {
  if (values.empty()) throw DataError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

Summary summarize_draws(Index draws, const std::function<Tensor3(Index)>& draw_fn, double level,
                        std::size_t budget_bytes) {
  if (draws < 1) throw DataError("summarize_draws needs at least one draw");
  const Tensor3 first = draw_fn(0);
  const Index cells = first.size();
  Summary out{Tensor3(first.slices(), first.ages()), Tensor3(first.slices(), first.ages()),
              Tensor3(first.slices(), first.ages())};
  const double lo_p = 0.5 * (1.0 - level);
  const double hi_p = 1.0 - lo_p;
  const auto per_cell = static_cast<std::size_t>(draws) * sizeof(double);
  const Index block = std::max<Index>(1, std::min<Index>(cells, static_cast<Index>(budget_bytes / per_cell)));
  std::vector<double> store(static_cast<std::size_t>(block * draws));
  std::vector<double> column(static_cast<std::size_t>(draws));
  for (Index start = 0; start < cells; start += block) {
    const Index len = std::min(block, cells - start);
    for (Index i = 0; i < draws; ++i) {
      const Tensor3 t = i == 0 ? first : draw_fn(i);
      if (!t.same_shape(first)) throw DataError("summarize_draws: draws differ in shape");
      const auto v = t.values();
      for (Index c = 0; c < len; ++c)
        store[static_cast<std::size_t>(c * draws + i)] = v[static_cast<std::size_t>(start + c)];
    }
    for (Index c = 0; c < len; ++c) {
      double acc = 0.0;
      for (Index i = 0; i < draws; ++i) {
        column[static_cast<std::size_t>(i)] = store[static_cast<std::size_t>(c * draws + i)];
        acc += column[static_cast<std::size_t>(i)];
      }
      const auto cell = static_cast<std::size_t>(start + c);
      out.mean.values()[cell] = acc / static_cast<double>(draws);
      out.lower.values()[cell] = quantile(column, lo_p);
      out.upper.values()[cell] = quantile(column, hi_p);
    }
  }
  return out;
}

Summary summarize(const PosteriorSamples& samples, const std::string& quantity, double level) {
  std::function<Tensor3(Index)> fn;
  if (quantity == "gamma") {
    fn = [&samples](Index i) {
      const auto cs = samples.contact_set(i);
      Tensor3 t(1, cs.gamma.rows());
      t.slice(0) = cs.gamma;
      return t;
    };
  } else if (quantity == "delta") {
    fn = [&samples](Index i) { return samples.contact_set(i).delta; };
  } else if (quantity == "m") {
    fn = [&samples](Index i) { return samples.contact_set(i).m; };
  } else if (quantity == "phi") {
    const Index idx = samples.model().layout().log_phi;
    fn = [&samples, idx](Index i) { return Tensor3(1, 1, std::exp(samples.draws()(i, idx))); };
  } else {
    throw ConfigError("unknown posterior quantity '" + quantity + "'");
  }
  return summarize_draws(samples.size(), fn, level);
}

}  // namespace gmix
