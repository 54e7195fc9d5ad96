#include "gmix/simulation.hpp"

#include "gmix/constraints.hpp"
#include "gmix/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <string>

namespace gmix {

namespace {

constexpr std::uint64_t kPurposeDemographics = 10;
constexpr std::uint64_t kPurposeBaseline = 11;
constexpr std::uint64_t kPurposeDeviation = 12;
constexpr std::uint64_t kPurposeRespondents = 13;
constexpr std::uint64_t kPurposeCounts = 14;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Index sample_index(const std::vector<double>& cumulative, Rng& rng) {
  const double u = uniform01(rng) * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min<Index>(static_cast<Index>(it - cumulative.begin()), static_cast<Index>(cumulative.size()) - 1);
}

}  // namespace

TemplateSet bundled_templates(const AgeGrid& grid) {
  const Index A = grid.size();
  TemplateSet t;
  for (auto& m : t) m.resize(A, A);
  for (Index i = 0; i < A; ++i)
    for (Index j = 0; j < A; ++j) {
      const double a = grid.age(i), b = grid.age(j);
      const double gap = a - b;
      const double school_a = logistic((21.0 - a) / 1.5), school_b = logistic((21.0 - b) / 1.5);
      const double work_a = logistic((a - 20.0) / 2.0) * logistic((65.0 - a) / 3.0);
      const double work_b = logistic((b - 20.0) / 2.0) * logistic((65.0 - b) / 3.0);
      // Household: same-generation band plus parent–child bands about 28 years apart.
      t[0](i, j) = std::exp(-gap * gap / 50.0) + 0.6 * std::exp(-std::pow(std::abs(gap) - 28.0, 2) / 32.0) + 0.05;
      // School: strongly diagonal among school ages.
      t[1](i, j) = std::exp(-gap * gap / 8.0) * (0.2 + 2.0 * school_a * school_b) + 0.02;
      // Work: plateau over working ages.
      t[2](i, j) = work_a * work_b * (0.5 + 0.5 * std::exp(-gap * gap / 450.0)) + 0.01;
      // Community: broad and smooth.
      t[3](i, j) = 0.3 + 0.7 * std::exp(-gap * gap / 288.0);
    }
  return t;
}

Eigen::VectorXd bundled_population(const AgeGrid& grid) {
  Eigen::VectorXd p(grid.size());
  for (Index i = 0; i < grid.size(); ++i) {
    const double x = (grid.age(i) - 30.0) / 45.0;
    p(i) = std::round(2.0e5 * std::exp(-x * x) + 2.0e4);
  }
  return p;
}

StrataSpace ScenarioConfig::space() const {
  std::vector<FeatureSpec> fs;
  for (const auto& f : features) fs.push_back(f.spec);
  return StrataSpace(fs);
}

void ScenarioConfig::validate() const {
  if (respondents < 1) throw ConfigError("respondents must be at least 1");
  if (!(mean_intensity > 0.0)) throw ConfigError("mean_intensity must be positive");
  for (const auto& f : features) {
    if (!(f.eta >= 0.0)) throw ConfigError("feature '" + f.spec.name + "': eta must be nonnegative");
    if (!std::isfinite(f.nu)) throw ConfigError("feature '" + f.spec.name + "': nu must be finite");
    if (!(f.alpha >= 0.0)) throw ConfigError("feature '" + f.spec.name + "': alpha must be nonnegative");
  }
  if (base_population && base_population->size() != grid.size())
    throw ConfigError("base population length does not match the age grid");
  if (templates)
    for (const auto& t : *templates)
      if (t.rows() != grid.size() || t.cols() != grid.size())
        throw ConfigError("template matrices must be A×A for the configured grid");
}

Eigen::VectorXd gp_sample(const Eigen::VectorXd& x, double amplitude, double lengthscale, Rng& rng, double jitter) {
  const Index n = x.size();
  Eigen::MatrixXd k(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      const double d = (x(i) - x(j)) / lengthscale;
      k(i, j) = amplitude * amplitude * std::exp(-0.5 * d * d);
    }
  k.diagonal().array() += jitter;
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (Index i = 0; i < n; ++i) z(i) = normal(rng);
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() == Eigen::Success) return llt.matrixL() * z;
  // Nearly singular kernel: factor through the eigendecomposition instead.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * z;
}

PopulationTable synth_demographics(const Eigen::VectorXd& base_pop, const std::vector<Index>& categories,
                                   const std::vector<double>& alpha, Rng& rng) {
  const Index A = base_pop.size();
  if (categories.size() != alpha.size()) throw ConfigError("one alpha per feature is required");
  for (Index a = 0; a < A; ++a)
    if (!(base_pop(a) > 0.0)) throw DataError("base population must be positive at every age");
  Eigen::VectorXd ages(A);
  for (Index a = 0; a < A; ++a) ages(a) = static_cast<double>(a);

  // Per-feature rounded category counts p^{k_j}_a.
  std::vector<Eigen::MatrixXd> per_feature;
  for (std::size_t j = 0; j < categories.size(); ++j) {
    const Index K = categories[j];
    Eigen::MatrixXd curves(K, A);
    for (Index k = 0; k < K; ++k) curves.row(k) = gp_sample(ages, 1.0, 3.0, rng).transpose();
    Eigen::MatrixXd counts(K, A);
    for (Index a = 0; a < A; ++a) {
      const Eigen::VectorXd logits = alpha[j] * curves.col(a);
      const double mx = logits.maxCoeff();
      const Eigen::VectorXd e = (logits.array() - mx).exp();
      const Eigen::VectorXd eps = e / e.sum();
      for (Index k = 0; k < K; ++k) counts(k, a) = std::round(eps(k) * base_pop(a));
    }
    per_feature.push_back(counts);
  }
  Index K_star = 1;
  for (Index k : categories) K_star *= k;
  Eigen::MatrixXd out(K_star, A);
  for (Index s = 0; s < K_star; ++s) {
    // Decode s with the first feature most significant.
    std::vector<Index> tuple(categories.size());
    Index rem = s;
    for (std::size_t j = categories.size(); j-- > 0;) {
      tuple[j] = rem % categories[j];
      rem /= categories[j];
    }
    for (Index a = 0; a < A; ++a) {
      double v = base_pop(a);
      for (std::size_t j = 0; j < categories.size(); ++j) v *= per_feature[j](tuple[j], a) / base_pop(a);
      out(s, a) = std::max(1.0, std::round(v));
    }
  }
  return PopulationTable(out);
}

RowMatrix template_mixture(const TemplateSet& templates, Rng& rng, double C, const Eigen::VectorXd& pop,
                           Eigen::Vector4d* weights) {
  const Index A = templates[0].rows();
  for (const auto& t : templates) {
    if (t.rows() != A || t.cols() != A) throw DataError("templates must share one A×A shape");
    if ((t.array() < 0.0).any()) throw DataError("templates must be nonnegative");
  }
  if (pop.size() != A) throw DataError("template_mixture: population length mismatch");
  std::gamma_distribution<double> g(1.0, 1.0);
  Eigen::Vector4d v;
  for (int i = 0; i < 4; ++i) v(i) = g(rng);
  v /= v.sum();
  if (weights) *weights = v;
  RowMatrix mix = RowMatrix::Zero(A, A);
  for (int i = 0; i < 4; ++i) mix += v(i) * templates[static_cast<std::size_t>(i)];
  const double weighted = (pop.asDiagonal() * mix).sum() / pop.sum();
  if (!(weighted > 0.0)) throw DataError("template mixture is identically zero");
  return mix * (C / weighted);
}

RowMatrix reciprocity_correct(const RowMatrix& M, const Eigen::VectorXd& pop) {
  const Index A = M.rows();
  if (M.cols() != A || pop.size() != A) throw DataError("reciprocity_correct: shape mismatch");
  RowMatrix out(A, A);
  for (Index a = 0; a < A; ++a)
    for (Index b = 0; b < A; ++b) out(a, b) = 0.5 * (M(a, b) + M(b, a) * pop(b) / pop(a));
  return out;
}

Tensor3 deviation_tensor(Index K, const TemplateSet& templates, double eta, double nu, Rng& rng) {
  if (!(eta >= 0.0)) throw ConfigError("deviation strength must be nonnegative");
  const Index A = templates[0].rows();
  for (const auto& t : templates)
    if ((t.array() <= 0.0).any()) throw DataError("deviation templates must be strictly positive (log is taken)");
  const Eigen::VectorXd flat = Eigen::VectorXd::Ones(A);
  Tensor3 D(K * K, A);
  for (Index k = 0; k < K; ++k)
    for (Index l = k; l < K; ++l) {
      const RowMatrix T = template_mixture(templates, rng, 1.0, flat);
      RowMatrix E = T.array().log().matrix();
      E.array() -= E.mean();
      RowMatrix d = (eta * E.array() + (k == l ? nu : 0.0)).exp().matrix();
      if (k == l) {
        const RowMatrix sym = (d.array() * d.transpose().array()).sqrt().matrix();
        D.slice(k * K + k) = sym;
      } else {
        D.slice(k * K + l) = d;
        D.slice(l * K + k) = d.transpose();
      }
    }
  return D;
}

GroundTruth compose_ground_truth(const RowMatrix& gamma, const std::vector<Tensor3>& deviations,
                                 const PopulationTable& pop, const StrataSpace& space) {
  const Index K = space.size();
  const Index A = gamma.rows();
  if (pop.strata() != K || pop.ages() != A) throw DataError("compose_ground_truth: population shape mismatch");
  if (static_cast<Index>(deviations.size()) != space.feature_count())
    throw DataError("compose_ground_truth: one deviation tensor per feature is required");
  Tensor3 d(K * K, A, 1.0);
  for (Index s = 0; s < K; ++s)
    for (Index t = 0; t < K; ++t)
      for (std::size_t j = 0; j < deviations.size(); ++j) {
        const Index kj = space.categories(static_cast<Index>(j));
        const Index slice = space.category(s, static_cast<Index>(j)) * kj + space.category(t, static_cast<Index>(j));
        d.slice(s * K + t).array() *= deviations[j].slice(slice).array();
      }
  const Tensor3 S = proportion_tensor(pop, Mode::Complete);
  GroundTruth gt;
  gt.pop = pop;
  gt.gamma = gamma;
  gt.delta = Tensor3(K * K, A);
  gt.m = Tensor3(K * K, A);
  gt.eta = Tensor3(K * K, A);
  gt.delta_partial = Tensor3(K, A);
  gt.m_partial = Tensor3(K, A);
  for (Index a = 0; a < A; ++a)
    for (Index b = 0; b < A; ++b) {
      double norm = 0.0;
      for (Index i = 0; i < K * K; ++i) norm += d(i, a, b) * S(i, a, b);
      for (Index i = 0; i < K * K; ++i) {
        gt.delta(i, a, b) = d(i, a, b) / norm;
        gt.m(i, a, b) = gamma(a, b) * gt.delta(i, a, b) * pop(i % K, b);
      }
      for (Index s = 0; s < K; ++s) {
        double msum = 0.0, dsum = 0.0;
        for (Index t = 0; t < K; ++t) {
          msum += gt.m(s * K + t, a, b);
          dsum += gt.delta(s * K + t, a, b) * pop(t, b) / pop.total(b);
        }
        gt.m_partial(s, a, b) = msum;
        gt.delta_partial(s, a, b) = dsum;
        for (Index t = 0; t < K; ++t) gt.eta(s * K + t, a, b) = gt.m(s * K + t, a, b) / msum;
      }
    }
  return gt;
}

std::vector<Respondent> draw_respondents(const PopulationTable& pop, const AgeGrid& grid, Index n, Rng& rng) {
  const Index A = pop.ages();
  const Index K = pop.strata();
  std::vector<double> age_cdf(static_cast<std::size_t>(A));
  double acc = 0.0;
  for (Index a = 0; a < A; ++a) age_cdf[static_cast<std::size_t>(a)] = acc += pop.total(a);
  std::vector<std::vector<double>> strata_cdf(static_cast<std::size_t>(A), std::vector<double>(static_cast<std::size_t>(K)));
  for (Index a = 0; a < A; ++a) {
    double c = 0.0;
    for (Index s = 0; s < K; ++s) strata_cdf[static_cast<std::size_t>(a)][static_cast<std::size_t>(s)] = c += pop(s, a);
  }
  std::vector<Respondent> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Index a = sample_index(age_cdf, rng);
    const Index s = sample_index(strata_cdf[static_cast<std::size_t>(a)], rng);
    out.push_back({i + 1, grid.age(a), s});
  }
  return out;
}

SimulatedSurvey simulate_counts(const GroundTruth& truth, const std::vector<Respondent>& respondents,
                                const AgeGrid& grid, const StrataSpace& space, Rng& rng) {
  const Index K = space.size();
  const Index A = grid.size();
  SimulatedSurvey out;
  out.respondents = respondents;
  std::gamma_distribution<double> zeta_dist(5.0, 1.0 / 5.0);
  for (const auto& r : respondents) {
    const Index a = grid.index_of(r.age);
    const double zeta = zeta_dist(rng);
    for (Index t = 0; t < K; ++t)
      for (Index b = 0; b < A; ++b) {
        const double rate = truth.m(r.stratum * K + t, a, b) * zeta;
        if (!(rate > 0.0)) continue;
        std::poisson_distribution<long> pois(rate);
        const long c = pois(rng);
        for (long j = 0; j < c; ++j) out.records.push_back({r.id, r.age, r.stratum, grid.age(b), t});
      }
  }
  out.complete = aggregate_survey(out.records, space, grid, respondents, Mode::Complete);
  out.partial = aggregate_survey(drop_contact_strata(out.records), space, grid, respondents, Mode::Partial);
  return out;
}

std::vector<ContactRecord> drop_contact_strata(const std::vector<ContactRecord>& records) {
  std::vector<ContactRecord> out = records;
  for (auto& r : out) r.contact_stratum.reset();
  return out;
}

Scenario simulate_scenario(const ScenarioConfig& config) {
  config.validate();
  Scenario sc;
  sc.config = config;
  sc.space = config.space();
  const AgeGrid& grid = config.grid;
  const TemplateSet templates = config.templates ? *config.templates : bundled_templates(grid);
  const Eigen::VectorXd base = config.base_population ? *config.base_population : bundled_population(grid);

  std::vector<Index> cats;
  std::vector<double> alphas;
  for (const auto& f : config.features) {
    cats.push_back(f.spec.size());
    alphas.push_back(f.alpha);
  }
  Rng demo_rng = make_rng(config.seed, 0, kPurposeDemographics);
  const PopulationTable pop = synth_demographics(base, cats, alphas, demo_rng);

  Rng base_rng = make_rng(config.seed, 0, kPurposeBaseline);
  const RowMatrix M = template_mixture(templates, base_rng, config.mean_intensity, pop.totals());
  const RowMatrix corrected = reciprocity_correct(M, pop.totals());
  const RowMatrix gamma = intensity_to_rate(corrected, pop.totals());

  std::vector<Tensor3> deviations;
  for (std::size_t j = 0; j < config.features.size(); ++j) {
    Rng dev_rng = make_rng(config.seed, j, kPurposeDeviation);
    const auto& f = config.features[j];
    deviations.push_back(deviation_tensor(f.spec.size(), templates, f.eta, f.nu, dev_rng));
  }
  sc.truth = compose_ground_truth(gamma, deviations, pop, sc.space);

  Rng resp_rng = make_rng(config.seed, 0, kPurposeRespondents);
  const auto respondents = draw_respondents(pop, grid, config.respondents, resp_rng);
  Rng count_rng = make_rng(config.seed, 0, kPurposeCounts);
  sc.survey = simulate_counts(sc.truth, respondents, grid, sc.space, count_rng);
  return sc;
}

}  // namespace gmix
