#pragma once

#include "gmix/core_domain.hpp"
#include "gmix/inference.hpp"
#include "gmix/random.hpp"

namespace gmix {

/// Bounds on attributable fractions η^{k,ℓ}_{a,b}, stored in slice k*K+ℓ.
struct MixingBounds {
  Index K = 1;
  Tensor3 lower;
  Tensor3 upper;
};

/// Expected contact totals Z^{k,.}_{a,b} = m^{k,.}_{a,b} P^k_a from partial intensities.
Tensor3 expected_margins(const Tensor3& m_partial, const PopulationTable& pop);

/// Largest relative gap between Σ_k Z^k_{a,b} and Σ_k Z^k_{b,a}.
double balance_residual(const Tensor3& z);

/// Scales the two directions of every age pair to their geometric-mean total.
/// Throws DataError when the imbalance exceeds `tolerance` (relative).
Tensor3 rebalance_margins(const Tensor3& z, double tolerance);

/// Sharp bounds for each fiber from balanced margins.
MixingBounds mixing_bounds(const Tensor3& z, double balance_tolerance = 1e-9);

/// Inverse-CDF draw from Beta(a1, a2) truncated to [l, u], driven by the uniform w.
double truncated_beta_sample(double a1, double a2, double l, double u, double w);

/// Dirichlet(alpha) restricted to the box [lower, upper] (sequential conditional sampler).
Eigen::VectorXd truncated_dirichlet_sample(const Eigen::VectorXd& alpha, const Eigen::VectorXd& lower,
                                           const Eigen::VectorXd& upper, Rng& rng, int max_retries = 20);

/// One complete-data realisation consistent with the given partial intensities.
struct CompleteDraw {
  Tensor3 m;    // K²×A×A
  Tensor3 eta;  // K²×A×A, fibers over ℓ sum to one
};

/// Samples attributable fractions for every (a,b) with a ≥ b as a contingency
/// table whose margins are the expected totals, then fills a < b from the
/// reciprocity relation. `alpha` scales the prior mean P^ℓ_b/P_b.
CompleteDraw sample_complete(const Tensor3& m_partial, const PopulationTable& pop, double alpha, Rng& rng,
                             double balance_tolerance = 1e-6);

/// Posterior predictive of complete intensities from a partial-data posterior.
class CompletePrediction {
 public:
  CompletePrediction(PosteriorSamples samples, PopulationTable pop, double alpha, std::uint64_t seed);

  Index size() const { return samples_.size(); }
  double alpha() const { return alpha_; }
  /// Deterministic in (seed, i).
  CompleteDraw draw(Index i) const;

 private:
  PosteriorSamples samples_;
  PopulationTable pop_;
  double alpha_;
  std::uint64_t seed_;
};

CompletePrediction predict_complete(const PosteriorSamples& samples, const PopulationTable& pop, double alpha,
                                    std::uint64_t seed);

struct NgmResult {
  Eigen::MatrixXd ngm;  // (K·A)², row (ℓ,b) recipient, column (k,a) source
  double r0 = 0.0;
  Index iterations = 0;
};

/// Next-generation matrix K_{(ℓ,b),(k,a)} = β m D^k_a S^ℓ_b / P^ℓ_b and its
/// dominant eigenvalue by power iteration.
NgmResult ngm_r0(const Tensor3& m_complete, const Tensor3& beta, const Eigen::MatrixXd& durations,
                 const Eigen::MatrixXd& susceptible, const PopulationTable& pop, double tolerance = 1e-10,
                 Index max_iterations = 100000);

}  // namespace gmix
