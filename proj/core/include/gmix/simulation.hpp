#pragma once

#include "gmix/core_domain.hpp"
#include "gmix/random.hpp"

#include <array>
#include <optional>
#include <vector>

namespace gmix {

/// Setting-specific contact templates: household, school, work, community.
using TemplateSet = std::array<RowMatrix, 4>;

/// Smooth parametric stand-ins for the four setting templates on `grid`.
TemplateSet bundled_templates(const AgeGrid& grid);
/// A smooth positive reference population on `grid`.
Eigen::VectorXd bundled_population(const AgeGrid& grid);

struct FeatureScenario {
  FeatureSpec spec;
  double eta = 0.2;    // deviation strength
  double nu = 0.0;     // assortativity boost on within-category blocks
  double alpha = 1.0;  // demographic deviation scale
};

struct ScenarioConfig {
  AgeGrid grid{18, 57};
  std::vector<FeatureScenario> features;
  Index respondents = 1500;
  double mean_intensity = 10.0;
  std::uint64_t seed = 1;
  std::optional<TemplateSet> templates;              // bundled when empty
  std::optional<Eigen::VectorXd> base_population;    // bundled when empty

  StrataSpace space() const;
  void validate() const;
};

struct GroundTruth {
  PopulationTable pop;
  RowMatrix gamma;        // A×A baseline rates
  Tensor3 delta;          // K*²×A×A
  Tensor3 m;              // K*²×A×A
  Tensor3 eta;            // K*²×A×A attributable fractions
  Tensor3 delta_partial;  // K*×A×A
  Tensor3 m_partial;      // K*×A×A
};

/// Stratified population from per-age totals: smooth Gaussian-process
/// category curves per feature, combined multiplicatively and rounded.
/// `categories[j]` and `alpha[j]` describe feature j.
PopulationTable synth_demographics(const Eigen::VectorXd& base_pop, const std::vector<Index>& categories,
                                   const std::vector<double>& alpha, Rng& rng);

/// One draw of a zero-mean squared-exponential Gaussian process at the given points.
Eigen::VectorXd gp_sample(const Eigen::VectorXd& x, double amplitude, double lengthscale, Rng& rng,
                          double jitter = 1e-9);

/// Dirichlet(1,1,1,1) mixture of the templates scaled so that the
/// population-weighted mean row sum equals C.
RowMatrix template_mixture(const TemplateSet& templates, Rng& rng, double C, const Eigen::VectorXd& pop,
                           Eigen::Vector4d* weights = nullptr);

/// M̃_{a,b} = ½(M_{a,b} + M_{b,a} P_b / P_a), so that P_a M̃_{a,b} is symmetric.
RowMatrix reciprocity_correct(const RowMatrix& M, const Eigen::VectorXd& pop);

/// Reciprocal K²×A×A multiplicative deviations for one feature.
Tensor3 deviation_tensor(Index K, const TemplateSet& templates, double eta, double nu, Rng& rng);

/// Stratified truth from a baseline rate matrix and per-feature deviations
/// (one tensor per feature of the population's strata space, in order).
GroundTruth compose_ground_truth(const RowMatrix& gamma, const std::vector<Tensor3>& deviations,
                                 const PopulationTable& pop, const StrataSpace& space);

/// Respondent ages from the population marginal, strata from P^s_a / P_a.
std::vector<Respondent> draw_respondents(const PopulationTable& pop, const AgeGrid& grid, Index n, Rng& rng);

struct SimulatedSurvey {
  std::vector<Respondent> respondents;
  std::vector<ContactRecord> records;  // complete records (contact stratum known)
  SurveyTensor complete;
  SurveyTensor partial;
};

/// Poisson(m ζ_i) contacts for every respondent and (contact stratum, age), ζ_i ~ Gamma(5, rate 5).
SimulatedSurvey simulate_counts(const GroundTruth& truth, const std::vector<Respondent>& respondents,
                                const AgeGrid& grid, const StrataSpace& space, Rng& rng);

/// Records with the contact stratum removed.
std::vector<ContactRecord> drop_contact_strata(const std::vector<ContactRecord>& records);

struct Scenario {
  ScenarioConfig config;
  StrataSpace space;
  GroundTruth truth;
  SimulatedSurvey survey;
};

/// Full pipeline: demographics, baseline, deviations, respondents, counts.
Scenario simulate_scenario(const ScenarioConfig& config);

}  // namespace gmix
