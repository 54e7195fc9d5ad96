#include "gmix/constraints.hpp"
#include "gmix/error.hpp"
#include "gmix/prediction.hpp"
#include "gmix/simulation.hpp"
#include "test_util.hpp"

#include <boost/math/distributions/beta.hpp>
#include <gtest/gtest.h>

#include <algorithm>

using namespace gmix;

namespace {

/// Balanced 2-stratum margins with the worked example at (a,b) = (0,1).
Tensor3 example_margins() {
  Tensor3 z(2, 2, 1.0);
  z(0, 0, 1) = 10;
  z(1, 0, 1) = 5;
  z(0, 1, 0) = 8;
  z(1, 1, 0) = 7;
  return z;
}

}  // namespace

TEST(MixingBounds, WorkedExample) {
  const auto mb = mixing_bounds(example_margins());
  EXPECT_NEAR(mb.lower(0, 0, 1), 0.3, 1e-15);
  EXPECT_NEAR(mb.upper(0, 0, 1), 0.8, 1e-15);
  for (Index i = 0; i < 4; ++i)
    for (Index a = 0; a < 2; ++a)
      for (Index b = 0; b < 2; ++b) EXPECT_LE(mb.lower(i, a, b), mb.upper(i, a, b));
}

TEST(MixingBounds, SingleStratumIsPinned) {
  Rng rng(40);
  const auto mb = mixing_bounds(expected_margins(
      [&] {
        Tensor3 m(1, 3);
        RowMatrix sym = test::random_matrix(3, 3, rng, 0.5, 2.0);
        m.slice(0) = (sym + sym.transpose()) / 2;
        return m;
      }(),
      PopulationTable(Eigen::MatrixXd::Ones(1, 3))));
  for (double v : mb.lower.values()) EXPECT_EQ(v, 1.0);
  for (double v : mb.upper.values()) EXPECT_EQ(v, 1.0);
}

TEST(MixingBounds, SharpOnTwoByTwoTables) {
  // Every feasible table is determined by x = X_11; scan a fine grid and compare ranges of η.
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const double r1 = test::uniform(rng, 1, 10), r2 = test::uniform(rng, 1, 10);
    const double c1 = test::uniform(rng, 0, r1 + r2);
    const double c2 = r1 + r2 - c1;
    Tensor3 z(2, 2, 1.0);
    z(0, 0, 1) = r1;
    z(1, 0, 1) = r2;
    z(0, 1, 0) = c1;
    z(1, 1, 0) = c2;
    const auto mb = mixing_bounds(z);
    double lo[4] = {1e9, 1e9, 1e9, 1e9}, hi[4] = {-1e9, -1e9, -1e9, -1e9};
    const int steps = 200000;
    for (int s = 0; s <= steps; ++s) {
      const double x = std::min(r1, c1) * s / steps;
      const double cells[4] = {x, r1 - x, c1 - x, c2 - (r1 - x)};
      if (*std::min_element(cells, cells + 4) < -1e-12) continue;
      const double eta[4] = {cells[0] / r1, cells[1] / r1, cells[2] / r2, cells[3] / r2};
      for (int i = 0; i < 4; ++i) lo[i] = std::min(lo[i], eta[i]), hi[i] = std::max(hi[i], eta[i]);
    }
    for (int i = 0; i < 4; ++i) {
      EXPECT_NEAR(mb.lower(i, 0, 1), lo[i], 1e-4);
      EXPECT_NEAR(mb.upper(i, 0, 1), hi[i], 1e-4);
    }
    // Endpoints attained exactly by the two extreme tables.
    const double x_lo = std::max(0.0, r1 + c1 - (r1 + r2)), x_hi = std::min(r1, c1);
    EXPECT_NEAR(mb.lower(0, 0, 1), x_lo / r1, 1e-12);
    EXPECT_NEAR(mb.upper(0, 0, 1), x_hi / r1, 1e-12);
  }
}

TEST(RebalanceMargins, GeometricMeanAndGate) {
  Tensor3 z(1, 2, 1.0);
  z(0, 0, 1) = 4.0;
  z(0, 1, 0) = 4.0 * (1 + 1e-9);
  const Tensor3 r = rebalance_margins(z, 1e-6);
  EXPECT_NEAR(r(0, 0, 1), r(0, 1, 0), 1e-15);
  EXPECT_NEAR(r(0, 0, 1), 4.0 * std::sqrt(1 + 1e-9), 1e-14);
  z(0, 1, 0) = 5.0;
  EXPECT_THROW(rebalance_margins(z, 1e-6), DataError);
}

TEST(TruncatedBeta, UniformAndEndpoints) {
  EXPECT_NEAR(truncated_beta_sample(1, 1, 0.2, 0.6, 0.5), 0.4, 1e-12);
  EXPECT_NEAR(truncated_beta_sample(2, 3, 0.1, 0.9, 0.0), 0.1, 1e-12);
  EXPECT_NEAR(truncated_beta_sample(2, 3, 0.1, 0.9, 1.0), 0.9, 1e-12);
}

TEST(TruncatedBeta, KolmogorovSmirnovAgainstRenormalisedCdf) {
  const double a1 = 2, a2 = 3, l = 0.1, u = 0.9;
  const boost::math::beta_distribution<> dist(a1, a2);
  const double fl = boost::math::cdf(dist, l), fu = boost::math::cdf(dist, u);
  Rng rng(42);
  const int n = 100000;
  std::vector<double> x(n);
  for (double& v : x) v = truncated_beta_sample(a1, a2, l, u, uniform01(rng));
  std::sort(x.begin(), x.end());
  double ks = 0;
  for (int i = 0; i < n; ++i) {
    const double f = (boost::math::cdf(dist, x[static_cast<std::size_t>(i)]) - fl) / (fu - fl);
    ks = std::max({ks, std::abs(f - double(i) / n), std::abs(f - double(i + 1) / n)});
  }
  EXPECT_LT(ks, 0.01);
}

TEST(TruncatedBeta, FarTailStaysInsideTheInterval) {
  const double v = truncated_beta_sample(50, 2, 0.01, 0.02, 0.5);
  EXPECT_GE(v, 0.01);
  EXPECT_LE(v, 0.02);
  const double w = truncated_beta_sample(2, 50, 0.98, 0.99, 0.5);
  EXPECT_GE(w, 0.98);
  EXPECT_LE(w, 0.99);
}

TEST(TruncatedDirichlet, TwoComponentsHonourBounds) {
  Rng rng(43);
  Eigen::Vector2d alpha(2, 3), lo(0.2, 0.5), hi(0.5, 0.8);
  for (int i = 0; i < 2000; ++i) {
    const Eigen::VectorXd x = truncated_dirichlet_sample(alpha, lo, hi, rng);
    EXPECT_NEAR(x.sum(), 1.0, 1e-12);
    EXPECT_GE(x(0), 0.2 - 1e-12);
    EXPECT_LE(x(0), 0.5 + 1e-12);
  }
}

TEST(TruncatedDirichlet, UntruncatedMeanMatchesDirichlet) {
  Rng rng(44);
  Eigen::VectorXd alpha(4);
  alpha << 0.5, 1.0, 2.0, 3.5;
  const Eigen::VectorXd lo = Eigen::VectorXd::Zero(4), hi = Eigen::VectorXd::Ones(4);
  const int n = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(4);
  for (int i = 0; i < n; ++i) sum += truncated_dirichlet_sample(alpha, lo, hi, rng);
  const double a0 = alpha.sum();
  for (Index i = 0; i < 4; ++i) {
    const double mean = alpha(i) / a0;
    const double se = std::sqrt(mean * (1 - mean) / (a0 + 1) / n);
    EXPECT_LT(std::abs(sum(i) / n - mean), 3 * se);
  }
}

TEST(TruncatedDirichlet, DegenerateBoundsGiveThePoint) {
  Rng rng(45);
  Eigen::Vector3d alpha(1, 2, 3), p(0.2, 0.3, 0.5);
  const Eigen::VectorXd x = truncated_dirichlet_sample(alpha, p, p, rng);
  EXPECT_LT((x - p).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(TruncatedDirichlet, RandomBoxesFromTablesAreRespected) {
  Rng rng(46);
  for (int trial = 0; trial < 200; ++trial) {
    const Index K = 2 + static_cast<Index>(rng() % 4);
    Eigen::VectorXd centre = test::random_matrix(K, 1, rng, 0.1, 1.0);
    centre /= centre.sum();
    Eigen::VectorXd lo(K), hi(K);
    for (Index i = 0; i < K; ++i) {
      lo(i) = std::max(0.0, centre(i) - test::uniform(rng, 0, 0.2));
      hi(i) = std::min(1.0, centre(i) + test::uniform(rng, 0, 0.2));
    }
    const Eigen::VectorXd x = truncated_dirichlet_sample(Eigen::VectorXd::Ones(K), lo, hi, rng);
    EXPECT_NEAR(x.sum(), 1.0, 1e-12);
    for (Index i = 0; i < K; ++i) {
      EXPECT_GE(x(i), lo(i) - 1e-12);
      EXPECT_LE(x(i), hi(i) + 1e-12);
    }
  }
}

namespace {

/// Ground truth from simulation with proportionate or assortative mixing.
GroundTruth small_truth(Index K, Index A, double eta, std::uint64_t seed) {
  ScenarioConfig sc;
  sc.grid = AgeGrid(0, static_cast<int>(A) - 1);
  std::vector<std::string> cats;
  for (Index k = 0; k < K; ++k) cats.push_back("c" + std::to_string(k));
  if (K > 1) sc.features.push_back({FeatureSpec("g", cats), eta, 0.0, 1.0});
  sc.seed = seed;
  sc.respondents = 10;
  return simulate_scenario(sc).truth;
}

}  // namespace

TEST(SampleComplete, DrawsAreReciprocalAndMarginalise) {
  const Index K = 3, A = 6;
  const GroundTruth truth = small_truth(K, A, 0.3, 47);
  Rng rng(47);
  const auto mb = mixing_bounds(expected_margins(truth.m_partial, truth.pop), 1e-6);
  for (int rep = 0; rep < 20; ++rep) {
    const CompleteDraw d = sample_complete(truth.m_partial, truth.pop, 1.0, rng);
    for (Index k = 0; k < K; ++k)
      for (Index l = 0; l < K; ++l)
        for (Index a = 0; a < A; ++a)
          for (Index b = 0; b < A; ++b) {
            const double z = d.m(k * K + l, a, b) * truth.pop(k, a);
            const double zt = d.m(l * K + k, b, a) * truth.pop(l, b);
            EXPECT_NEAR(z, zt, 1e-9 * std::max(1.0, std::abs(z)));
            EXPECT_GE(d.eta(k * K + l, a, b), mb.lower(k * K + l, a, b) - 1e-8);
            EXPECT_LE(d.eta(k * K + l, a, b), mb.upper(k * K + l, a, b) + 1e-8);
          }
    for (Index k = 0; k < K; ++k)
      for (Index a = 0; a < A; ++a)
        for (Index b = 0; b < A; ++b) {
          double sum = 0;
          for (Index l = 0; l < K; ++l) sum += d.m(k * K + l, a, b);
          EXPECT_NEAR(sum, truth.m_partial(k, a, b), 1e-12 * std::max(1.0, sum));
        }
  }
}

TEST(SampleComplete, LargeConcentrationApproachesProportionateMixing) {
  const Index K = 2, A = 4;
  const GroundTruth truth = small_truth(K, A, 0.0, 48);  // δ ≡ 1
  Rng rng(48);
  Tensor3 mean(K * K, A);
  const int n = 200;
  for (int r = 0; r < n; ++r) {
    const CompleteDraw d = sample_complete(truth.m_partial, truth.pop, 1e6, rng);
    for (Index i = 0; i < mean.size(); ++i) mean.values()[static_cast<std::size_t>(i)] += d.eta.values()[static_cast<std::size_t>(i)] / n;
  }
  for (Index k = 0; k < K; ++k)
    for (Index l = 0; l < K; ++l)
      for (Index a = 0; a < A; ++a)
        for (Index b = 0; b < A; ++b)
          EXPECT_NEAR(mean(k * K + l, a, b), truth.pop(l, b) / truth.pop.total(b), 2e-3);
}

TEST(SampleComplete, SingleStratumReturnsThePartialIntensities) {
  const GroundTruth truth = small_truth(1, 5, 0.0, 49);
  Rng rng(49);
  const CompleteDraw d = sample_complete(truth.m_partial, truth.pop, 1.0, rng);
  EXPECT_EQ(d.m.max_abs_diff(truth.m_partial), 0.0);
  for (double v : d.eta.values()) EXPECT_EQ(v, 1.0);
}

TEST(Ngm, ConstantIntensityGivesCTimesA) {
  const Index A = 5;
  const double c = 0.7;
  const Tensor3 m(1, A, c), beta(1, A, 1.0);
  Eigen::MatrixXd pop_counts(1, A);
  pop_counts << 10, 20, 30, 40, 50;
  const PopulationTable pop(pop_counts);
  const auto r = ngm_r0(m, beta, Eigen::MatrixXd::Ones(1, A), pop_counts, pop);
  EXPECT_NEAR(r.r0, c * A, 1e-9);
  const auto r2 = ngm_r0(m, Tensor3(1, A, 2.0), Eigen::MatrixXd::Ones(1, A), pop_counts, pop);
  EXPECT_NEAR(r2.r0, 2 * r.r0, 1e-9);
}

TEST(Ngm, MatchesDenseEigensolver) {
  Rng rng(50);
  const Index K = 2, A = 3;
  const Tensor3 m = test::random_tensor(K * K, A, rng, 0.1, 2.0), beta = test::random_tensor(K * K, A, rng, 0.01, 0.1);
  const auto pop = test::random_population(K, A, rng);
  const Eigen::MatrixXd dur = test::random_matrix(K, A, rng, 2, 8);
  const Eigen::MatrixXd sus = pop.counts() * 0.6;
  const auto r = ngm_r0(m, beta, dur, sus, pop);
  Eigen::MatrixXd ngm(K * A, K * A);
  for (Index k = 0; k < K; ++k)
    for (Index a = 0; a < A; ++a)
      for (Index l = 0; l < K; ++l)
        for (Index b = 0; b < A; ++b)
          ngm(l * A + b, k * A + a) = beta(k * K + l, a, b) * m(k * K + l, a, b) * dur(k, a) * sus(l, b) / pop(l, b);
  EXPECT_LT((ngm - r.ngm).cwiseAbs().maxCoeff(), 1e-14);
  const double want = Eigen::EigenSolver<Eigen::MatrixXd>(ngm).eigenvalues().cwiseAbs().maxCoeff();
  EXPECT_NEAR(r.r0, want, 1e-8);
}
