#pragma once

#include "gmix/constraints.hpp"
#include "gmix/core_domain.hpp"
#include "gmix/splines.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gmix {

struct Priors {
  double tau_shape = 2.0;   // Gamma shape for every smoothing precision
  double tau_rate = 0.01;   // Gamma rate
  double beta0_sd = 2.5;
  double phi_rate = 1.0;    // Exponential rate for the overdispersion
};

struct ModelSpec {
  Mode mode = Mode::Complete;
  StrataSpace space;
  AgeGrid grid;
  Index m_gamma = 15;
  Index m_omega = 15;
  Priors priors;
  std::optional<double> beta0_center;  // replaces the population-derived centre when set
  /// Which features get a modifier surface; empty means all. Inactive features
  /// still stratify the data but are assumed to mix proportionately.
  std::vector<bool> active_features;

  bool feature_active(Index j) const {
    return active_features.empty() || active_features[static_cast<std::size_t>(j)];
  }
};

/// Prior centre for β₀: minus the average log target population.
double beta0_center(const PopulationTable& pop, Mode mode);

/// Negative binomial log pmf with mean mu and variance mu + mu²/phi.
double nb_logpmf(double y, double mu, double phi);

/// Offsets of each block inside the unconstrained parameter vector.
struct ParameterLayout {
  struct FeatureBlock {
    Index feature = 0;
    Index K = 0;
    Index within = 0;   // number of symmetric within-stratum surfaces (complete mode)
    Index slices = 0;   // free surfaces in total
    Index xi = 0;       // offset of the first coefficient
    Index log_tau = 0;
  };
  Index beta0 = 0;
  Index xi_gamma = 1;
  Index m_gamma = 0;
  Index log_tau_gamma = 0;
  Index m_omega = 0;
  std::vector<FeatureBlock> features;
  Index log_phi = 0;
  Index size = 0;

  std::string name(Index i) const;
};

class Model {
 public:
  Model(ModelSpec spec, SurveyTensor data, PopulationTable pop);

  const ModelSpec& spec() const { return spec_; }
  const ParameterLayout& layout() const { return layout_; }
  Index dim() const { return layout_.size; }
  const SurveyTensor& data() const { return data_; }
  const PopulationTable& population() const { return pop_; }
  const Tensor3& proportions() const { return s_; }
  const Tensor3& centering() const { return w_; }
  double beta0_prior_center() const { return beta0_bar_; }
  const SplineBasis& gamma_basis() const { return basis_gamma_; }
  const SplineBasis& omega_basis() const { return basis_omega_; }

  /// Restrict the likelihood to cells with mask == 1 (same layout as the counts).
  void set_cell_mask(std::vector<std::uint8_t> mask);
  const std::vector<std::uint8_t>& cell_mask() const { return mask_; }
  /// Whether cell (i,a,b) enters the likelihood: respondents present and not masked.
  bool cell_included(Index i, Index a, Index b) const;

  Eigen::VectorXd initial_params() const;

  /// γ, δ, m and φ at θ.
  ContactMatrixSet evaluate(const Eigen::VectorXd& theta) const;
  /// E[Y]; zero where the stratum-age cell has no respondents.
  Tensor3 expected_counts(const Eigen::VectorXd& theta) const;
  /// Ω before the softmax (centering plus Kronecker sum of active feature surfaces).
  Tensor3 omega(const Eigen::VectorXd& theta) const;

  double log_joint(const Eigen::VectorXd& theta) const;
  double log_joint_and_grad(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const;

 private:
  struct Forward {
    RowMatrix log_gamma;
    std::vector<Tensor3> components;  // per active feature block
    Tensor3 omega;
    Tensor3 h;  // softmax of omega, fiber-wise
  };
  Forward forward(const Eigen::VectorXd& theta) const;
  double log_prior(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const;
  double evaluate_density(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const;
  double log_target_pop(Index i, Index b) const;

  ModelSpec spec_;
  SurveyTensor data_;
  PopulationTable pop_;
  Index K_ = 1;
  Index A_ = 0;
  Tensor3 s_;
  Tensor3 w_;
  double beta0_bar_ = 0.0;
  SplineBasis basis_gamma_;
  SplineBasis basis_omega_;
  PenaltyOperator q_gamma_;
  PenaltyOperator q_omega_;
  ParameterLayout layout_;
  /// For each feature block, the component slice feeding composite slice i.
  std::vector<std::vector<Index>> component_slice_;
  std::vector<std::uint8_t> mask_;
  Eigen::MatrixXd log_pop_;  // log P^k_a
  Eigen::VectorXd log_total_;
  double log_factorial_sum_ = 0.0;
};

}  // namespace gmix
