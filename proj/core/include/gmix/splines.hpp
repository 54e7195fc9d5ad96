#pragma once

#include "gmix/core_domain.hpp"
#include "gmix/tensor.hpp"

namespace gmix {

/// Clamped cubic B-spline basis evaluated on the grid ages.
struct SplineBasis {
  Eigen::VectorXd knots;
  Index M = 0;
  Eigen::MatrixXd B;  // A × M
};

/// Equally spaced interior knots over [min age, max age], boundary knots repeated four times.
SplineBasis bspline_basis(const AgeGrid& grid, Index M);

/// Evaluate the basis of `knots` (order 4) at an arbitrary point x inside the knot range.
Eigen::VectorXd bspline_row(const Eigen::VectorXd& knots, Index M, double x);

/// Second-order difference penalty for an M1×M2 coefficient array Ξ, acting as
/// Q = Q0₁ ⊕ Q0₂ on the row-major vectorization of Ξ.
struct PenaltyOperator {
  Eigen::MatrixXd D1, D2;  // (M−2)×M difference matrices
  Eigen::MatrixXd Q01, Q02;
  Index rank = 0;

  Index rows() const { return Q01.rows(); }
  Index cols() const { return Q02.rows(); }
  /// ξᵀQξ = tr(ΞᵀQ0₁Ξ) + tr(ΞQ0₂Ξᵀ).
  double quadratic(const Eigen::Ref<const RowMatrix>& xi) const;
  /// Qξ reshaped to M1×M2: Q0₁Ξ + ΞQ0₂.
  RowMatrix apply(const Eigen::Ref<const RowMatrix>& xi) const;
  /// Dense M1M2×M1M2 matrix; for tests and small problems.
  Eigen::MatrixXd dense() const;
};

Eigen::MatrixXd second_difference_matrix(Index M);
PenaltyOperator penalty_operator(Index M1, Index M2);

/// A²×M1M2 design Φ with row a*A+b and column i*M2+j, so reshape(Φξ) = B1 Ξ B2ᵀ.
Eigen::MatrixXd tensor_design(const SplineBasis& b1, const SplineBasis& b2);

/// f = B Ξ Bᵀ evaluated on a ≥ b and mirrored; exactly symmetric.
RowMatrix symmetric_surface(const SplineBasis& basis, const Eigen::Ref<const RowMatrix>& xi);

/// Adjoint of symmetric_surface: given ∂L/∂f, returns ∂L/∂Ξ.
RowMatrix symmetric_surface_adjoint(const SplineBasis& basis, const Eigen::Ref<const RowMatrix>& grad_f);

/// Improper IGMRF log density up to a τ-free constant: ½·rank·log τ − ½·τ·ξᵀQξ.
double igmrf_logpdf(const Eigen::Ref<const RowMatrix>& xi, double tau, const PenaltyOperator& q);
/// ∂/∂Ξ of igmrf_logpdf: −τ·Qξ.
RowMatrix igmrf_grad(const Eigen::Ref<const RowMatrix>& xi, double tau, const PenaltyOperator& q);

}  // namespace gmix
