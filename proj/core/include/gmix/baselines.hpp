#pragma once

#include "gmix/core_domain.hpp"
#include "gmix/random.hpp"

#include <utility>
#include <vector>

namespace gmix {

/// Ordered, disjoint, covering age ranges over grid positions (inclusive).
class AgePartition {
 public:
  AgePartition() = default;
  AgePartition(std::vector<std::pair<Index, Index>> ranges, Index ages);

  static AgePartition singletons(Index ages);
  /// Ranges starting at each listed age; the first must be the grid's minimum age.
  static AgePartition from_breakpoints(const AgeGrid& grid, const std::vector<int>& lower_ages);

  Index size() const { return static_cast<Index>(ranges_.size()); }
  Index ages() const { return ages_; }
  Index first(Index c) const { return ranges_[static_cast<std::size_t>(c)].first; }
  Index last(Index c) const { return ranges_[static_cast<std::size_t>(c)].second; }
  Index width(Index c) const { return last(c) - first(c) + 1; }
  Index range_of(Index a) const { return lookup_[static_cast<std::size_t>(a)]; }
  const std::vector<std::pair<Index, Index>>& ranges() const { return ranges_; }
  /// Lower ages of the ranges on `grid`.
  std::vector<int> breakpoints(const AgeGrid& grid) const;
  /// Range c merged with range c + 1.
  AgePartition merged(Index c) const;

 private:
  std::vector<std::pair<Index, Index>> ranges_;
  std::vector<Index> lookup_;
  Index ages_ = 0;
};

/// Sums each slice over ranges in both age dimensions.
Tensor3 coarsen_counts(const Tensor3& y, const AgePartition& part);
/// Sums columns (ages) of a strata × ages matrix over ranges.
Eigen::MatrixXd coarsen_columns(const Eigen::MatrixXd& x, const AgePartition& part);

/// m̂_{c,d} = y_{c,d} / N_c per slice; slices follow the survey layout of `mode`.
Tensor3 empirical_intensity(const Tensor3& y_coarse, const Eigen::MatrixXd& n_coarse, Mode mode);

/// m̃^{s,t}_{c,d} = ½(m̂^{s,t}_{c,d} + m̂^{t,s}_{d,c} P^t_d / P^s_c) on complete-layout tensors.
Tensor3 reciprocity_adjust(const Tensor3& m_hat, const Eigen::MatrixXd& pop_coarse);

/// w_{c,d} = Σ_{a∈c, b∈d} (P_a / P_c) m_{a,b}.
RowMatrix pixilate(const RowMatrix& m, const Eigen::VectorXd& pop, const AgePartition& part);
/// m̄_{a,b} = (P_c / P_a) w_{c,d} / (|c||d|); a right inverse of pixilate.
RowMatrix depixilate(const RowMatrix& w, const Eigen::VectorXd& pop, const AgePartition& part);

/// Slice-wise (de)pixilation weighting rows by the source stratum's population.
Tensor3 pixilate_stratified(const Tensor3& m, const PopulationTable& pop, const AgePartition& part, Mode mode);
Tensor3 depixilate_stratified(const Tensor3& w, const PopulationTable& pop, const AgePartition& part, Mode mode);

struct CoarsenResult {
  AgePartition partition;
  double criterion = 0.0;  // Σ exp(−N) after merging
  bool warning = false;    // a single range remains and the rule still fails
};

/// Merges ranges until Σ_{s,c} exp(−N^s_c) ≤ alpha / J. `n` is strata × ranges.
/// The range holding the smallest count is merged with its neighbour of
/// smaller count; ties go to the younger neighbour.
CoarsenResult auto_coarsen(const AgePartition& start, const Eigen::MatrixXd& n, double alpha, Index J);

struct BootstrapResult {
  Tensor3 point;     // estimate from the full sample
  Tensor3 mean;
  Tensor3 variance;  // 1/(J−1) Σ (m^(j) − m̂)² over successful replicates
  Tensor3 lower;
  Tensor3 upper;
  Index successes = 0;
  Index failures = 0;
};

/// Respondent-level resampling with replacement. Replicates in which any
/// stratum-range cell has no respondents are skipped and counted.
BootstrapResult bootstrap(const std::vector<Respondent>& respondents, const std::vector<ContactRecord>& records,
                          const AgePartition& part, const StrataSpace& space, const AgeGrid& grid,
                          const PopulationTable& pop, Mode mode, Index J, std::uint64_t seed, double level = 0.95,
                          bool reciprocity = true);

struct SocialmixrConfig {
  std::vector<int> breakpoints;  // empty: one-year ranges
  bool coarsen = true;
  double coarsen_alpha = 0.05;
  Index replicates = 1000;
  double level = 0.95;
  bool reciprocity = true;
  std::uint64_t seed = 1;
};

struct SocialmixrEstimate {
  AgePartition partition;
  bool coarsen_warning = false;
  BootstrapResult boot;     // on the coarse ranges
  Tensor3 point_fine;       // depixilated to one-year ages
  Tensor3 lower_fine;
  Tensor3 upper_fine;
};

/// Empirical intensities with reciprocity adjustment and bootstrap intervals,
/// computed on (possibly coarsened) ranges and depixilated to the grid.
SocialmixrEstimate socialmixr_ext(const std::vector<Respondent>& respondents,
                                  const std::vector<ContactRecord>& records, const StrataSpace& space,
                                  const AgeGrid& grid, const PopulationTable& pop, Mode mode,
                                  const SocialmixrConfig& cfg);

}  // namespace gmix
