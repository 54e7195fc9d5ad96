#include "gmix/splines.hpp"

#include "gmix/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace gmix {

namespace {

constexpr int kOrder = 4;

}  // namespace

Eigen::VectorXd bspline_row(const Eigen::VectorXd& t, Index M, double x) {
  // Cox–de Boor, with the right end of the range assigned to the last span.
  Eigen::VectorXd out = Eigen::VectorXd::Zero(M);
  const Index n_knots = t.size();
  Index span = kOrder - 1;
  if (x >= t(M)) {
    span = M - 1;
  } else {
    while (span + 1 < n_knots && t(span + 1) <= x) ++span;
  }
  double N[kOrder] = {1.0, 0.0, 0.0, 0.0};
  double left[kOrder], right[kOrder];
  for (int j = 1; j < kOrder; ++j) {
    left[j] = x - t(span + 1 - j);
    right[j] = t(span + j) - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom != 0.0 ? N[r] / denom : 0.0;
      N[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    N[j] = saved;
  }
  for (int r = 0; r < kOrder; ++r) out(span - (kOrder - 1) + r) = N[r];
  return out;
}

SplineBasis bspline_basis(const AgeGrid& grid, Index M) {
  if (M < kOrder) throw ConfigError("spline basis needs at least 4 functions, got " + std::to_string(M));
  const double lo = grid.min_age();
  const double hi = grid.max_age();
  const Index interior = M - kOrder;
  SplineBasis sb;
  sb.M = M;
  sb.knots.resize(M + kOrder);
  for (int i = 0; i < kOrder; ++i) {
    sb.knots(i) = lo;
    sb.knots(M + i) = hi;
  }
  for (Index i = 1; i <= interior; ++i)
    sb.knots(kOrder - 1 + i) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(interior + 1);
  sb.B.resize(grid.size(), M);
  for (Index a = 0; a < grid.size(); ++a) sb.B.row(a) = bspline_row(sb.knots, M, grid.age(a)).transpose();
  return sb;
}

Eigen::MatrixXd second_difference_matrix(Index M) {
  if (M < 3) throw ConfigError("second-order difference penalty needs M ≥ 3");
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(M - 2, M);
  for (Index i = 0; i < M - 2; ++i) {
    D(i, i) = 1.0;
    D(i, i + 1) = -2.0;
    D(i, i + 2) = 1.0;
  }
  return D;
}

PenaltyOperator penalty_operator(Index M1, Index M2) {
  PenaltyOperator q;
  q.D1 = second_difference_matrix(M1);
  q.D2 = second_difference_matrix(M2);
  q.Q01 = q.D1.transpose() * q.D1;
  q.Q02 = q.D2.transpose() * q.D2;
  // Eigenvalues of a Kronecker sum are all pairwise sums.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(q.Q01), e2(q.Q02);
  const auto& l1 = e1.eigenvalues();
  const auto& l2 = e2.eigenvalues();
  const double top = l1.maxCoeff() + l2.maxCoeff();
  const double tol = 1e-9 * top;
  for (Index i = 0; i < l1.size(); ++i)
    for (Index j = 0; j < l2.size(); ++j)
      if (l1(i) + l2(j) > tol) ++q.rank;
  return q;
}

double PenaltyOperator::quadratic(const Eigen::Ref<const RowMatrix>& xi) const {
  const RowMatrix r = D1 * xi;
  const RowMatrix c = xi * D2.transpose();
  return r.squaredNorm() + c.squaredNorm();
}

RowMatrix PenaltyOperator::apply(const Eigen::Ref<const RowMatrix>& xi) const { return Q01 * xi + xi * Q02; }

Eigen::MatrixXd PenaltyOperator::dense() const {
  const Index m1 = rows(), m2 = cols();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(m1 * m2, m1 * m2);
  for (Index i = 0; i < m1; ++i)
    for (Index j = 0; j < m2; ++j)
      for (Index k = 0; k < m1; ++k)
        for (Index l = 0; l < m2; ++l) {
          double v = 0.0;
          if (j == l) v += Q01(i, k);
          if (i == k) v += Q02(j, l);
          Q(i * m2 + j, k * m2 + l) = v;
        }
  return Q;
}

Eigen::MatrixXd tensor_design(const SplineBasis& b1, const SplineBasis& b2) {
  const Index A1 = b1.B.rows(), A2 = b2.B.rows();
  if (A1 != A2) throw DataError("tensor_design: bases evaluated on different grids");
  Eigen::MatrixXd phi(A1 * A2, b1.M * b2.M);
  for (Index a = 0; a < A1; ++a)
    for (Index b = 0; b < A2; ++b)
      for (Index i = 0; i < b1.M; ++i)
        for (Index j = 0; j < b2.M; ++j) phi(a * A2 + b, i * b2.M + j) = b1.B(a, i) * b2.B(b, j);
  return phi;
}

RowMatrix symmetric_surface(const SplineBasis& basis, const Eigen::Ref<const RowMatrix>& xi) {
  const RowMatrix left = basis.B * xi;  // A × M
  const Index A = basis.B.rows();
  RowMatrix f(A, A);
  for (Index a = 0; a < A; ++a)
    for (Index b = 0; b <= a; ++b) {
      const double v = left.row(a).dot(basis.B.row(b));
      f(a, b) = v;
      f(b, a) = v;
    }
  return f;
}

RowMatrix symmetric_surface_adjoint(const SplineBasis& basis, const Eigen::Ref<const RowMatrix>& grad_f) {
  const Index A = basis.B.rows();
  RowMatrix folded = RowMatrix::Zero(A, A);
  for (Index a = 0; a < A; ++a) {
    folded(a, a) = grad_f(a, a);
    for (Index b = 0; b < a; ++b) folded(a, b) = grad_f(a, b) + grad_f(b, a);
  }
  return basis.B.transpose() * folded * basis.B;
}

double igmrf_logpdf(const Eigen::Ref<const RowMatrix>& xi, double tau, const PenaltyOperator& q) {
  if (!(tau > 0.0)) throw DataError("igmrf_logpdf: precision must be positive");
  return 0.5 * static_cast<double>(q.rank) * std::log(tau) - 0.5 * tau * q.quadratic(xi);
}

RowMatrix igmrf_grad(const Eigen::Ref<const RowMatrix>& xi, double tau, const PenaltyOperator& q) {
  if (!(tau > 0.0)) throw DataError("igmrf_grad: precision must be positive");
  return -tau * q.apply(xi);
}

}  // namespace gmix
