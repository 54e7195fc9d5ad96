#include "gmix/baselines.hpp"
#include "gmix/error.hpp"
#include "gmix/simulation.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace gmix;

TEST(AgePartition, BreakpointsAndMerging) {
  const AgeGrid grid(18, 27);
  const auto p = AgePartition::from_breakpoints(grid, {18, 20, 25});
  EXPECT_EQ(p.size(), 3);
  EXPECT_EQ(p.first(1), 2);
  EXPECT_EQ(p.last(1), 6);
  EXPECT_EQ(p.range_of(9), 2);
  EXPECT_EQ(p.breakpoints(grid), (std::vector<int>{18, 20, 25}));
  const auto m = p.merged(0);
  EXPECT_EQ(m.size(), 2);
  EXPECT_EQ(m.width(0), 7);
  EXPECT_THROW(AgePartition::from_breakpoints(grid, {19, 25}), ConfigError);
}

TEST(EmpiricalIntensity, Examples) {
  Tensor3 y(1, 2);
  y(0, 0, 1) = 10;
  Eigen::MatrixXd n = Eigen::MatrixXd::Constant(1, 2, 5.0);
  const Tensor3 m = empirical_intensity(y, n, Mode::Partial);
  EXPECT_EQ(m(0, 0, 1), 2.0);
  EXPECT_EQ(m(0, 1, 0), 0.0);
}

TEST(EmpiricalIntensity, LargeSurveyApproachesPixilatedTruth) {
  ScenarioConfig sc;
  sc.grid = AgeGrid(0, 5);
  sc.respondents = 40000;
  sc.seed = 80;
  sc.mean_intensity = 20;
  const Scenario s = simulate_scenario(sc);
  const AgePartition part = AgePartition::from_breakpoints(sc.grid, {0, 3});
  const Tensor3 yc = coarsen_counts(s.survey.partial.y, part);
  const Eigen::MatrixXd nc = coarsen_columns(s.survey.partial.n, part);
  const Tensor3 est = empirical_intensity(yc, nc, Mode::Partial);
  const RowMatrix truth = pixilate(RowMatrix(s.truth.m_partial.slice(0)), s.truth.pop.totals(), part);
  for (Index c = 0; c < 2; ++c)
    for (Index d = 0; d < 2; ++d) EXPECT_NEAR(est(0, c, d) / truth(c, d), 1.0, 0.02);
}

TEST(ReciprocityAdjust, FixedPointUniformAndResidual) {
  Rng rng(81);
  const Index K = 2, B = 3;
  const Eigen::MatrixXd pop = test::random_matrix(K, B, rng, 100, 1000);
  // Reciprocal input: m^{s,t}_{c,d} = R^{s,t}_{c,d} / P^s_c with R^{s,t}_{c,d} = R^{t,s}_{d,c}.
  Tensor3 r(K * K, B);
  for (Index s = 0; s < K; ++s)
    for (Index t = 0; t < K; ++t)
      for (Index c = 0; c < B; ++c)
        for (Index d = 0; d < B; ++d)
          if (s * K + t <= t * K + s) r(s * K + t, c, d) = r(t * K + s, d, c) = test::uniform(rng, 1, 5);
  Tensor3 m(K * K, B);
  for (Index i = 0; i < K * K; ++i)
    for (Index c = 0; c < B; ++c)
      for (Index d = 0; d < B; ++d) m(i, c, d) = r(i, c, d) / pop(i / K, c);
  EXPECT_LT(reciprocity_adjust(m, pop).max_abs_diff(m), 1e-14);

  const Tensor3 raw = test::random_tensor(K * K, B, rng, 0.1, 3.0);
  const Tensor3 adj = reciprocity_adjust(raw, Eigen::MatrixXd::Constant(K, B, 50.0));
  for (Index s = 0; s < K; ++s)
    for (Index t = 0; t < K; ++t)
      for (Index c = 0; c < B; ++c)
        for (Index d = 0; d < B; ++d)
          EXPECT_NEAR(adj(s * K + t, c, d), 0.5 * (raw(s * K + t, c, d) + raw(t * K + s, d, c)), 1e-15);

  const Tensor3 fixed = reciprocity_adjust(raw, pop);
  for (Index s = 0; s < K; ++s)
    for (Index t = 0; t < K; ++t)
      for (Index c = 0; c < B; ++c)
        for (Index d = 0; d < B; ++d) {
          const double lhs = fixed(s * K + t, c, d) * pop(s, c) / pop(t, d);
          const double rhs = fixed(t * K + s, d, c) * pop(t, d) / pop(s, c);
          EXPECT_NEAR(lhs * pop(t, d), rhs * pop(s, c), 1e-12 * std::abs(lhs * pop(t, d)));
        }
}

TEST(Pixilate, SingletonsUniformAndLoopOracle) {
  Rng rng(82);
  const Index A = 7;
  const RowMatrix m = test::random_matrix(A, A, rng, 0.1, 2.0);
  const Eigen::VectorXd p = test::random_matrix(A, 1, rng, 10, 100);
  EXPECT_LT((pixilate(m, p, AgePartition::singletons(A)) - m).cwiseAbs().maxCoeff(), 1e-15);
  const AgePartition part({{0, 1}, {2, 4}, {5, 6}}, A);
  const RowMatrix w_uniform = pixilate(RowMatrix::Constant(A, A, 1.5), p, part);
  for (Index c = 0; c < 3; ++c)
    for (Index d = 0; d < 3; ++d) EXPECT_NEAR(w_uniform(c, d), 1.5 * part.width(d), 1e-14);
  const RowMatrix w = pixilate(m, p, part);
  for (Index c = 0; c < 3; ++c)
    for (Index d = 0; d < 3; ++d) {
      double pc = 0, acc = 0;
      for (Index a = part.first(c); a <= part.last(c); ++a) pc += p(a);
      for (Index a = part.first(c); a <= part.last(c); ++a)
        for (Index b = part.first(d); b <= part.last(d); ++b) acc += p(a) / pc * m(a, b);
      EXPECT_NEAR(w(c, d), acc, 1e-13);
    }
}

TEST(Depixilate, IdentityRoundTripAndBlocks) {
  Rng rng(83);
  const Index A = 7;
  const Eigen::VectorXd p = test::random_matrix(A, 1, rng, 10, 100);
  const RowMatrix m = test::random_matrix(A, A, rng);
  EXPECT_LT((depixilate(m, p, AgePartition::singletons(A)) - m).cwiseAbs().maxCoeff(), 1e-15);
  const AgePartition part({{0, 1}, {2, 4}, {5, 6}}, A);
  for (int trial = 0; trial < 100; ++trial) {
    const RowMatrix w = test::random_matrix(3, 3, rng, 0.1, 4.0);
    EXPECT_LT((pixilate(depixilate(w, p, part), p, part) - w).cwiseAbs().maxCoeff(), 1e-12);
  }
  const RowMatrix flat = depixilate(test::random_matrix(3, 3, rng), Eigen::VectorXd::Constant(A, 3.0), part);
  EXPECT_EQ(flat(2, 0), flat(4, 1));
  EXPECT_EQ(flat(5, 5), flat(6, 6));
}

TEST(AutoCoarsen, NoMergeWhenCountsAreLarge) {
  const auto r = auto_coarsen(AgePartition::singletons(5), Eigen::MatrixXd::Constant(2, 5, 100.0), 0.05, 3000);
  EXPECT_EQ(r.partition.size(), 5);
  EXPECT_FALSE(r.warning);
}

TEST(AutoCoarsen, SingleSparseRangeForcesAMerge) {
  // α/J = 1.667e-5 < e^{-10} = 4.54e-5.
  Eigen::MatrixXd n = Eigen::MatrixXd::Constant(1, 5, 100.0);
  n(0, 2) = 10;
  const auto r = auto_coarsen(AgePartition::singletons(5), n, 0.05, 3000);
  EXPECT_EQ(r.partition.size(), 4);
  Index covered = 0;
  for (Index c = 0; c < r.partition.size(); ++c) covered += r.partition.width(c);
  EXPECT_EQ(covered, 5);
  EXPECT_EQ(r.partition.range_of(2), r.partition.range_of(1));  // equal neighbours: younger side
  EXPECT_LE(r.criterion, 0.05 / 3000);
}

TEST(AutoCoarsen, WarnsWhenOneRangeStillFails) {
  const auto r = auto_coarsen(AgePartition::singletons(3), Eigen::MatrixXd::Constant(1, 3, 1.0), 0.05, 3000);
  EXPECT_EQ(r.partition.size(), 1);
  EXPECT_TRUE(r.warning);
}

namespace {

struct Survey {
  std::vector<Respondent> respondents;
  std::vector<ContactRecord> records;
};

/// `sparse` respondents aged 0, the rest spread over ages 1..A−1; two contacts each.
Survey contrived(Index total, Index sparse, Index A, Rng& rng) {
  Survey s;
  for (Index i = 0; i < total; ++i) {
    const int age = i < sparse ? 0 : 1 + static_cast<int>(i % (A - 1));
    s.respondents.push_back({i, age, 0});
    for (int c = 0; c < 2; ++c) s.records.push_back({i, age, 0, static_cast<int>(rng() % A), std::nullopt});
  }
  return s;
}

}  // namespace

TEST(Bootstrap, NoFailuresWithLargeCells) {
  Rng rng(84);
  const Index A = 4;
  const Survey s = contrived(2000, 500, A, rng);
  const AgeGrid grid(0, A - 1);
  const auto pop = PopulationTable(Eigen::MatrixXd::Constant(1, A, 100.0));
  const auto r = bootstrap(s.respondents, s.records, AgePartition::singletons(A), StrataSpace(), grid, pop,
                           Mode::Partial, 1000, 1);
  EXPECT_EQ(r.failures, 0);
  EXPECT_EQ(r.successes, 1000);
}

TEST(Bootstrap, FailureRateNearExpMinusThree) {
  Rng rng(85);
  const Index A = 4;
  const Survey s = contrived(1000, 3, A, rng);
  const AgeGrid grid(0, A - 1);
  const auto pop = PopulationTable(Eigen::MatrixXd::Constant(1, A, 100.0));
  const Index J = 10000;
  const auto r = bootstrap(s.respondents, s.records, AgePartition::singletons(A), StrataSpace(), grid, pop,
                           Mode::Partial, J, 2);
  const double rate = static_cast<double>(r.failures) / static_cast<double>(J);
  EXPECT_GT(rate, std::exp(-3.0) / 2);
  EXPECT_LT(rate, std::exp(-3.0) * 2);
}

TEST(Bootstrap, ConstantCellsHaveZeroVariance) {
  // One respondent per age, each reporting the same contact: every resample that
  // covers all ages reproduces the same intensities.
  const Index A = 2;
  std::vector<Respondent> rs{{0, 0, 0}, {1, 1, 0}};
  std::vector<ContactRecord> rec{{0, 0, 0, 1, std::nullopt}, {1, 1, 0, 0, std::nullopt}};
  const auto pop = PopulationTable(Eigen::MatrixXd::Constant(1, A, 10.0));
  const auto r = bootstrap(rs, rec, AgePartition::singletons(A), StrataSpace(), AgeGrid(0, 1), pop, Mode::Partial,
                           200, 3, 0.95, false);
  EXPECT_GT(r.successes, 0);
  for (double v : r.variance.values()) EXPECT_EQ(v, 0.0);
}

TEST(Bootstrap, Deterministic) {
  Rng rng(86);
  const Survey s = contrived(300, 100, 4, rng);
  const auto pop = PopulationTable(Eigen::MatrixXd::Constant(1, 4, 100.0));
  auto run = [&] {
    return bootstrap(s.respondents, s.records, AgePartition::singletons(4), StrataSpace(), AgeGrid(0, 3), pop,
                     Mode::Partial, 200, 9);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.lower.max_abs_diff(b.lower), 0.0);
  EXPECT_EQ(a.variance.max_abs_diff(b.variance), 0.0);
}

TEST(SocialmixrExt, EstimatesOnTheFineGrid) {
  ScenarioConfig sc;
  sc.grid = AgeGrid(20, 29);
  sc.respondents = 600;
  sc.features.push_back({FeatureSpec("sex", {"f", "m"}), 0.2, 0.0, 1.0});
  const Scenario s = simulate_scenario(sc);
  SocialmixrConfig cfg;
  cfg.breakpoints = {20, 25};
  cfg.replicates = 50;
  const auto e = socialmixr_ext(s.survey.respondents, s.survey.records, s.space, sc.grid, s.truth.pop,
                                Mode::Complete, cfg);
  EXPECT_EQ(e.point_fine.slices(), 4);
  EXPECT_EQ(e.point_fine.ages(), 10);
  EXPECT_EQ(e.partition.size(), 2);
  for (Index i = 0; i < e.point_fine.size(); ++i)
    EXPECT_LE(e.lower_fine.values()[static_cast<std::size_t>(i)], e.upper_fine.values()[static_cast<std::size_t>(i)]);
}
