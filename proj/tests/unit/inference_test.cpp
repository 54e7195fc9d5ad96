#include "gmix/constraints.hpp"
#include "gmix/error.hpp"
#include "gmix/inference.hpp"
#include "gmix/metrics.hpp"
#include "gmix/simulation.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace gmix;

namespace {

LogDensity gaussian_target(Eigen::VectorXd mean, Eigen::VectorXd sd) {
  return [mean, sd](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const Eigen::VectorXd z = (x - mean).cwiseQuotient(sd);
    g = -z.cwiseQuotient(sd);
    return -0.5 * z.squaredNorm();
  };
}

}  // namespace

TEST(Elbo, GradientVanishesAtTheGaussianOptimum) {
  const Index d = 3;
  const LogDensity target = gaussian_target(Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d));
  VariationalState st;
  st.mu = Eigen::VectorXd::Zero(d);
  st.log_sigma = Eigen::VectorXd::Zero(d);
  Rng rng(30);
  const int n = 10000;
  Eigen::MatrixXd gm(n, d), gs(n, d);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd a, b;
    elbo_and_grad(st, target, rng, 1, a, b);
    gm.row(i) = a.transpose();
    gs.row(i) = b.transpose();
  }
  for (const Eigen::MatrixXd* g : {&gm, &gs})
    for (Index j = 0; j < d; ++j) {
      const double mean = g->col(j).mean();
      const double se = std::sqrt((g->col(j).array() - mean).square().sum() / (n - 1) / n);
      EXPECT_LT(std::abs(mean), 3 * se + 1e-12);
    }
}

TEST(Elbo, EntropyAtUnitScale) {
  EXPECT_NEAR(gaussian_entropy(Eigen::VectorXd::Zero(7)), 0.5 * 7 * std::log(2 * std::numbers::pi * std::numbers::e),
              1e-12);
}

TEST(Elbo, MeanGradientIsTheTargetGradientAtTheDraw) {
  Rng data_rng(31);
  const Eigen::VectorXd centre = test::random_matrix(4, 1, data_rng);
  Eigen::VectorXd seen, seen_grad;
  const LogDensity inner = gaussian_target(centre, Eigen::VectorXd::Constant(4, 0.7));
  LogDensity spy = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double v = inner(x, g);
    seen = x;
    seen_grad = g;
    return v;
  };
  VariationalState st;
  st.mu = test::random_matrix(4, 1, data_rng);
  st.log_sigma = Eigen::VectorXd::Zero(4);
  Rng rng(32);
  Eigen::VectorXd gm, gs;
  elbo_and_grad(st, spy, rng, 1, gm, gs);
  EXPECT_LT((gm - seen_grad).cwiseAbs().maxCoeff(), 1e-15);
  // With σ = 1 the draw is μ + ε and ∂/∂log σ = g·ε + 1.
  const Eigen::VectorXd eps = seen - st.mu;
  EXPECT_LT((gs - (seen_grad.cwiseProduct(eps).array() + 1.0).matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(OneCycle, Landmarks) {
  const Index total = 1000;
  EXPECT_NEAR(one_cycle_lr(0, total, 0.01), 0.01 / 25, 1e-15);
  EXPECT_NEAR(one_cycle_lr(300, total, 0.01), 0.01, 1e-15);
  EXPECT_NEAR(one_cycle_lr(total - 1, total, 0.01), 0.01 / 25 / 1e4, 1e-12);
  for (Index s = 1; s <= 300; ++s) EXPECT_GE(one_cycle_lr(s, total, 0.01), one_cycle_lr(s - 1, total, 0.01));
  for (Index s = 301; s < total; ++s) EXPECT_LE(one_cycle_lr(s, total, 0.01), one_cycle_lr(s - 1, total, 0.01));
}

TEST(Fit, RecoversAGaussianTarget) {
  Eigen::VectorXd mean(3), sd(3);
  mean << 1.0, -2.0, 0.5;
  sd << 0.5, 1.0, 2.0;
  FitConfig cfg;
  cfg.iterations = 6000;
  cfg.mc_samples = 4;
  cfg.max_lr = 0.05;
  cfg.seed = 33;
  const auto st = fit(gaussian_target(mean, sd), Eigen::VectorXd::Zero(3), cfg);
  for (Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(st.mu(i), mean(i), 0.05);
    EXPECT_NEAR(std::exp(st.log_sigma(i)), sd(i), 0.1);
  }
}

TEST(Fit, MapConvergesToTheMode) {
  Eigen::VectorXd mean(2), sd(2);
  mean << 3.0, -1.0;
  sd << 1.0, 0.2;
  FitConfig cfg;
  cfg.iterations = 4000;
  cfg.method = FitMethod::Map;
  cfg.max_lr = 0.05;
  const auto st = fit(gaussian_target(mean, sd), Eigen::VectorXd::Zero(2), cfg);
  EXPECT_TRUE(st.point_mass);
  EXPECT_LT((st.mu - mean).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Fit, DivergenceCarriesTheTrace) {
  LogDensity bad = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = Eigen::VectorXd::Zero(x.size());
    return std::numeric_limits<double>::quiet_NaN();
  };
  FitConfig cfg;
  cfg.iterations = 100;
  try {
    fit(bad, Eigen::VectorXd::Zero(2), cfg);
    FAIL() << "expected divergence";
  } catch (const FitDivergence& e) {
    EXPECT_EQ(e.trace().size(), 10u);
  }
}

TEST(Fit, SameSeedIsBitwiseIdentical) {
  Eigen::VectorXd mean = Eigen::VectorXd::Constant(3, 0.3), sd = Eigen::VectorXd::Ones(3);
  FitConfig cfg;
  cfg.iterations = 500;
  cfg.seed = 34;
  const auto a = fit(gaussian_target(mean, sd), Eigen::VectorXd::Zero(3), cfg);
  const auto b = fit(gaussian_target(mean, sd), Eigen::VectorXd::Zero(3), cfg);
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.log_sigma, b.log_sigma);
  EXPECT_EQ(a.trace, b.trace);
}

TEST(Fit, RecoversSmallSimulatedIntensities) {
  ScenarioConfig sc;
  sc.grid = AgeGrid(20, 25);
  sc.respondents = 1500;
  sc.seed = 35;
  const Scenario s = simulate_scenario(sc);
  ModelSpec spec;
  spec.mode = Mode::Partial;
  spec.space = s.space;
  spec.grid = sc.grid;
  spec.m_gamma = 4;
  spec.m_omega = 4;
  auto model = std::make_shared<const Model>(spec, s.survey.partial, s.truth.pop);
  FitConfig cfg;
  cfg.iterations = 4000;
  cfg.seed = 35;
  const auto st = fit(*model, cfg);
  const Summary m = summarize(sample_posterior(st, model, 500, 35), "m");
  EXPECT_LT(mape(m.mean, s.truth.m_partial).value, 15.0);
}

class PosteriorFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(36);
    const auto space = test::make_space({2});
    const Index A = 5;
    SurveyTensor d;
    d.mode = Mode::Complete;
    d.strata = 2;
    d.y = Tensor3(4, A, 2.0);
    d.n = Eigen::MatrixXd::Constant(2, A, 10.0);
    ModelSpec spec;
    spec.space = space;
    spec.grid = AgeGrid(0, A - 1);
    spec.m_gamma = 4;
    spec.m_omega = 4;
    model = std::make_shared<const Model>(spec, d, test::random_population(2, A, rng));
    state.mu = model->initial_params();
    for (Index i = 0; i < state.mu.size(); ++i) state.mu(i) += test::uniform(rng, -0.2, 0.2);
    state.log_sigma = Eigen::VectorXd::Constant(model->dim(), std::log(0.1));
  }
  std::shared_ptr<const Model> model;
  VariationalState state;
};

TEST_F(PosteriorFixture, PointMassDrawsEqualTheMean) {
  VariationalState pm = state;
  pm.point_mass = true;
  pm.log_sigma.setConstant(-std::numeric_limits<double>::infinity());
  const auto post = sample_posterior(pm, model, 20, 1);
  for (Index i = 0; i < post.size(); ++i) EXPECT_EQ(post.theta(i), pm.mu);
  const Summary m = summarize(post, "m");
  const Tensor3 at_mu = model->evaluate(pm.mu).m;
  EXPECT_LT(m.mean.max_abs_diff(at_mu), 1e-12);
  EXPECT_EQ(m.lower.max_abs_diff(m.upper), 0.0);
}

TEST_F(PosteriorFixture, CoordinateQuantilesMatchTheGaussian) {
  const Index n = 3000;
  const auto post = sample_posterior(state, model, n, 2);
  const double z = 1.959963984540054;
  for (Index j = 0; j < model->dim(); j += 7) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = post.draws()(i, j);
    const double sigma = std::exp(state.log_sigma(j));
    // SE of an extreme quantile: sqrt(p(1−p)/n)/density ≈ 0.0045/0.0584 σ ≈ 0.078σ at p = 0.025.
    EXPECT_NEAR(quantile(v, 0.025), state.mu(j) - z * sigma, 4 * 0.078 * sigma);
    EXPECT_NEAR(quantile(v, 0.975), state.mu(j) + z * sigma, 4 * 0.078 * sigma);
    EXPECT_NEAR(quantile(v, 0.5), state.mu(j), 4 * 1.2533 * sigma / std::sqrt(double(n)));
  }
}

TEST_F(PosteriorFixture, EveryDrawIsConsistent) {
  const auto post = sample_posterior(state, model, 100, 3);
  for (Index i = 0; i < post.size(); ++i) {
    const auto set = post.contact_set(i);
    EXPECT_LT(consistency_residual(set.delta, model->proportions()), 1e-12);
  }
}

TEST_F(PosteriorFixture, ChunkedSummariesMatchSingleBlock) {
  const auto post = sample_posterior(state, model, 50, 4);
  auto fn = [&](Index i) { return post.contact_set(i).m; };
  const Summary whole = summarize_draws(50, fn);
  const Summary chunked = summarize_draws(50, fn, 0.95, 4096);
  EXPECT_EQ(whole.mean.max_abs_diff(chunked.mean), 0.0);
  EXPECT_EQ(whole.lower.max_abs_diff(chunked.lower), 0.0);
  EXPECT_EQ(whole.upper.max_abs_diff(chunked.upper), 0.0);
}

TEST(Quantile, LinearInterpolation) {
  std::vector<double> v{4, 1, 3, 2};
  EXPECT_DOUBLE_EQ(quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile(v, 0.25), 1.75);
}

TEST(FitConfig, RejectsNonsense) {
  FitConfig cfg;
  cfg.iterations = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(fit_method_from_string("hmc"), ConfigError);
}
