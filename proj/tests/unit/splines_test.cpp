#include "gmix/error.hpp"
#include "gmix/splines.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace gmix;

namespace {

// Textbook recursive definition, deliberately unoptimised.
double naive_basis(const Eigen::VectorXd& t, Index i, int p, double x) {
  if (p == 0) return (t(i) <= x && x < t(i + 1)) ? 1.0 : 0.0;
  double left = 0.0, right = 0.0;
  if (t(i + p) > t(i)) left = (x - t(i)) / (t(i + p) - t(i)) * naive_basis(t, i, p - 1, x);
  if (t(i + p + 1) > t(i + 1)) right = (t(i + p + 1) - x) / (t(i + p + 1) - t(i + 1)) * naive_basis(t, i + 1, p - 1, x);
  return left + right;
}

}  // namespace

TEST(BsplineBasis, PartitionOfUnity) {
  for (Index M : {4, 7, 10, 15}) {
    const auto sb = bspline_basis(AgeGrid(0, 39), M);
    EXPECT_EQ(sb.B.cols(), M);
    EXPECT_LT((sb.B.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-14);
    EXPECT_GE(sb.B.minCoeff(), 0.0);
  }
}

TEST(BsplineBasis, FourFunctionsAreBernsteinPolynomials) {
  const AgeGrid grid(10, 20);
  const auto sb = bspline_basis(grid, 4);
  EXPECT_NEAR(sb.B(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(sb.B.row(0).tail(3).cwiseAbs().sum(), 0.0, 1e-15);
  EXPECT_NEAR(sb.B(10, 3), 1.0, 1e-15);
  for (Index a = 0; a < grid.size(); ++a) {
    const double t = static_cast<double>(a) / 10.0;
    const double want[4] = {std::pow(1 - t, 3), 3 * t * std::pow(1 - t, 2), 3 * t * t * (1 - t), t * t * t};
    for (Index i = 0; i < 4; ++i) EXPECT_NEAR(sb.B(a, i), want[i], 1e-14);
  }
}

TEST(BsplineBasis, CoxDeBoorMatchesNaiveRecursion) {
  Rng rng(11);
  const auto sb = bspline_basis(AgeGrid(0, 30), 9);
  for (int trial = 0; trial < 50; ++trial) {
    const double x = test::uniform(rng, 0.0, 30.0 - 1e-9);
    const Eigen::VectorXd row = bspline_row(sb.knots, 9, x);
    for (Index i = 0; i < 9; ++i) EXPECT_NEAR(row(i), naive_basis(sb.knots, i, 3, x), 1e-13);
  }
}

TEST(BsplineBasis, RejectsTooFewFunctions) { EXPECT_THROW(bspline_basis(AgeGrid(0, 9), 3), ConfigError); }

TEST(TensorDesign, OnesGiveUnitSurface) {
  const auto b1 = bspline_basis(AgeGrid(0, 7), 5), b2 = bspline_basis(AgeGrid(0, 7), 6);
  const Eigen::MatrixXd phi = tensor_design(b1, b2);
  EXPECT_LT(((phi * Eigen::VectorXd::Ones(30)).array() - 1.0).abs().maxCoeff(), 1e-13);
}

TEST(TensorDesign, RankOneCoefficients) {
  Rng rng(12);
  const auto b1 = bspline_basis(AgeGrid(0, 7), 5), b2 = bspline_basis(AgeGrid(0, 7), 6);
  const Eigen::VectorXd u = test::random_matrix(5, 1, rng), v = test::random_matrix(6, 1, rng);
  const RowMatrix xi = u * v.transpose();
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(xi.data(), 30);
  const Eigen::VectorXd f = tensor_design(b1, b2) * flat;
  const RowMatrix want = (b1.B * u) * (b2.B * v).transpose();
  for (Index a = 0; a < 8; ++a)
    for (Index b = 0; b < 8; ++b) EXPECT_NEAR(f(a * 8 + b), want(a, b), 1e-12);
}

TEST(TensorDesign, MatchesDenseProduct) {
  Rng rng(13);
  const auto b1 = bspline_basis(AgeGrid(0, 9), 6), b2 = bspline_basis(AgeGrid(0, 9), 5);
  const RowMatrix xi = test::random_matrix(6, 5, rng);
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(xi.data(), 30);
  const Eigen::VectorXd f = tensor_design(b1, b2) * flat;
  const RowMatrix want = b1.B * xi * b2.B.transpose();
  for (Index a = 0; a < 10; ++a)
    for (Index b = 0; b < 10; ++b) EXPECT_NEAR(f(a * 10 + b), want(a, b), 1e-12);
}

TEST(SymmetricSurface, ZeroAndExactSymmetry) {
  const auto sb = bspline_basis(AgeGrid(0, 11), 6);
  EXPECT_EQ(symmetric_surface(sb, RowMatrix::Zero(6, 6)).cwiseAbs().maxCoeff(), 0.0);
  Rng rng(14);
  const RowMatrix f = symmetric_surface(sb, test::random_matrix(6, 6, rng));
  EXPECT_EQ((f - f.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(SymmetricSurface, LowerTriangleIsDirectEvaluation) {
  Rng rng(15);
  const auto sb = bspline_basis(AgeGrid(0, 11), 6);
  const RowMatrix xi = test::random_matrix(6, 6, rng);
  const RowMatrix f = symmetric_surface(sb, xi);
  for (Index a = 0; a < 12; ++a)
    for (Index b = 0; b <= a; ++b) {
      double v = 0.0;
      for (Index i = 0; i < 6; ++i)
        for (Index j = 0; j < 6; ++j) v += sb.B(a, i) * xi(i, j) * sb.B(b, j);
      EXPECT_NEAR(f(a, b), v, 1e-13);
    }
}

TEST(SymmetricSurface, AdjointMatchesInnerProduct) {
  // <G, S(Ξ)> = <S*(G), Ξ> for the linear map S.
  Rng rng(16);
  const auto sb = bspline_basis(AgeGrid(0, 9), 5);
  const RowMatrix xi = test::random_matrix(5, 5, rng), g = test::random_matrix(10, 10, rng);
  const double lhs = (g.array() * symmetric_surface(sb, xi).array()).sum();
  const double rhs = (symmetric_surface_adjoint(sb, g).array() * xi.array()).sum();
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Penalty, OperatorMatchesDenseKroneckerSum) {
  Rng rng(17);
  const auto q = penalty_operator(5, 6);
  const RowMatrix xi = test::random_matrix(5, 6, rng);
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(xi.data(), 30);
  const Eigen::MatrixXd dense = q.dense();
  EXPECT_NEAR(q.quadratic(xi), flat.dot(dense * flat), 1e-10);
  const RowMatrix applied = q.apply(xi);
  const Eigen::VectorXd want = dense * flat;
  for (Index i = 0; i < 30; ++i) EXPECT_NEAR(applied.data()[i], want(i), 1e-12);
  // Null space of D1 ⊕ D2 on row-major vec is spanned by {1, i, j, i·j}.
  EXPECT_EQ(q.rank, 30 - 4);
}

TEST(Igmrf, NullSpaceIsFlat) {
  const auto q = penalty_operator(6, 6);
  RowMatrix plane(6, 6);
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 6; ++j) plane(i, j) = 0.3 + 0.7 * i - 1.1 * j + 0.05 * i * j;
  EXPECT_NEAR(q.quadratic(plane), 0.0, 1e-10);
  EXPECT_NEAR(igmrf_logpdf(plane, 3.0, q), igmrf_logpdf(RowMatrix::Zero(6, 6), 3.0, q), 1e-9);
}

TEST(Igmrf, DoublingPrecision) {
  Rng rng(18);
  const auto q = penalty_operator(6, 6);
  const RowMatrix xi = test::random_matrix(6, 6, rng);
  const double tau = 0.7;
  const double diff = igmrf_logpdf(xi, 2 * tau, q) - igmrf_logpdf(xi, tau, q);
  EXPECT_NEAR(diff, 0.5 * q.rank * std::log(2.0) - 0.5 * tau * q.quadratic(xi), 1e-10);
  EXPECT_THROW(igmrf_logpdf(xi, 0.0, q), DataError);
}

TEST(Igmrf, GradientMatchesFiniteDifferences) {
  Rng rng(19);
  const auto q = penalty_operator(5, 5);
  const RowMatrix xi = test::random_matrix(5, 5, rng);
  const double tau = 1.7;
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(xi.data(), 25);
  auto f = [&](const Eigen::VectorXd& v) { return igmrf_logpdf(ConstRowMap(v.data(), 5, 5), tau, q); };
  const RowMatrix g = igmrf_grad(xi, tau, q);
  const Eigen::VectorXd analytic = Eigen::Map<const Eigen::VectorXd>(g.data(), 25);
  EXPECT_LT(test::max_rel_err(analytic, test::finite_difference(f, x)), 1e-6);
}
