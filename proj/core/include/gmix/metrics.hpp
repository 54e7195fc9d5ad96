#pragma once

#include "gmix/inference.hpp"
#include "gmix/model.hpp"

#include <vector>

namespace gmix {

struct MapeResult {
  double value = 0.0;  // percent
  Index used = 0;
  Index excluded = 0;  // cells with zero truth
};

MapeResult mape(const Tensor3& estimate, const Tensor3& truth);
double rmse(const Tensor3& estimate, const Tensor3& truth);
/// Mean interval score (u−l) + (2/α)(l−y)·1{y<l} + (2/α)(y−u)·1{y>u}, α = 1 − level.
double interval_score(const Tensor3& lower, const Tensor3& upper, const Tensor3& truth, double level = 0.95);
/// Percentage of cells with lower ≤ truth ≤ upper.
double coverage(const Tensor3& lower, const Tensor3& upper, const Tensor3& truth);

/// log((1/n) Σ exp(v_i)), stable.
double log_mean_exp(const std::vector<double>& v);

/// Fold of every count cell, from a hash of its (strata, ages) index and the seed.
std::vector<int> assign_folds(const SurveyTensor& data, int folds, std::uint64_t seed);

struct ElpdResult {
  double elpd = 0.0;
  double se = 0.0;
  Eigen::VectorXd pointwise;       // one entry per held-out cell with respondents
  std::vector<Index> cells;        // flat cell index of each pointwise entry
  std::vector<bool> fold_failed;
};

/// K-fold cross-validated expected log predictive density. Each fold is fitted
/// on the remaining cells; held-out counts are scored by the log of the
/// negative binomial likelihood averaged over `draws` posterior draws.
ElpdResult kfold_elpd(const ModelSpec& spec, const SurveyTensor& data, const PopulationTable& pop, int folds,
                      const FitConfig& cfg, Index draws);

struct ElpdDifference {
  double diff = 0.0;  // elpd(a) − elpd(b)
  double se = 0.0;
};

/// Paired difference over common held-out cells.
ElpdDifference elpd_difference(const ElpdResult& a, const ElpdResult& b);

}  // namespace gmix
