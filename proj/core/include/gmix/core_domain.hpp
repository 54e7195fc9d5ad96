#pragma once

#include "gmix/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gmix {

enum class Mode { Complete, Partial };

const char* to_string(Mode mode);
Mode mode_from_string(const std::string& name);

/// Contiguous 1-year ages, e.g. 18..84.
class AgeGrid {
 public:
  AgeGrid() = default;
  AgeGrid(int min_age, int max_age);
  explicit AgeGrid(const std::vector<int>& ages);

  Index size() const { return max_age_ - min_age_ + 1; }
  int min_age() const { return min_age_; }
  int max_age() const { return max_age_; }
  int age(Index i) const { return min_age_ + static_cast<int>(i); }
  bool contains(int age) const { return age >= min_age_ && age <= max_age_; }
  /// Position of `age` in the grid; DataError if outside.
  Index index_of(int age) const;
  std::vector<int> ages() const;

  bool operator==(const AgeGrid&) const = default;

 private:
  int min_age_ = 0;
  int max_age_ = 1;
};

struct FeatureSpec {
  std::string name;
  std::vector<std::string> categories;

  FeatureSpec() = default;
  FeatureSpec(std::string name, std::vector<std::string> categories);
  Index size() const { return static_cast<Index>(categories.size()); }
  /// Category position of `label`; DataError if unknown.
  int index_of(const std::string& label) const;
};

/// Cartesian product of features. Composite index is mixed-radix with the
/// first feature most significant, so stratum proportions of independent
/// features compose as a Kronecker product in feature order.
class StrataSpace {
 public:
  StrataSpace() = default;
  explicit StrataSpace(std::vector<FeatureSpec> features);

  const std::vector<FeatureSpec>& features() const { return features_; }
  Index feature_count() const { return static_cast<Index>(features_.size()); }
  Index size() const { return k_star_; }
  Index categories(Index j) const { return features_[static_cast<std::size_t>(j)].size(); }

  std::vector<int> tuple_of(Index s) const;
  Index index_of(const std::vector<int>& tuple) const;
  /// Category of feature j inside composite stratum s.
  int category(Index s, Index j) const;

  /// Human-readable label such as "female|urban"; "all" when there are no features.
  std::string label(Index s) const;

 private:
  std::vector<FeatureSpec> features_;
  std::vector<Index> radix_;  // stride of each feature in the composite index
  Index k_star_ = 1;
};

/// Population counts P^s_a (strata × ages) with totals P_a.
class PopulationTable {
 public:
  PopulationTable() = default;
  /// counts: K* × A. Totals are the column sums, so Σ_s P^s_a = P_a holds by construction.
  explicit PopulationTable(Eigen::MatrixXd counts);

  Index strata() const { return counts_.rows(); }
  Index ages() const { return counts_.cols(); }
  double operator()(Index s, Index a) const { return counts_(s, a); }
  double total(Index a) const { return totals_(a); }
  const Eigen::MatrixXd& counts() const { return counts_; }
  const Eigen::VectorXd& totals() const { return totals_; }

 private:
  Eigen::MatrixXd counts_;
  Eigen::VectorXd totals_;
};

/// Aggregated contact counts.
/// complete: Y has K*² slices indexed s*K*+t (respondent stratum s, contact stratum t).
/// partial:  Y has K* slices indexed by respondent stratum.
struct SurveyTensor {
  Mode mode = Mode::Complete;
  Index strata = 1;
  Tensor3 y;
  Eigen::MatrixXd n;  // K* × A respondent counts
  Tensor3 offsets;    // empty, or the same shape as y

  Index ages() const { return y.ages(); }
  bool has_offsets() const { return offsets.size() > 0; }
  double offset(Index i, Index a, Index b) const { return has_offsets() ? offsets(i, a, b) : 0.0; }
  /// Respondent stratum of slice i.
  Index source_stratum(Index i) const { return mode == Mode::Complete ? i / strata : i; }

  /// Throws DataError on negative or non-integer counts, shape mismatches,
  /// or contacts recorded for an empty (stratum, age) cell.
  void validate() const;
};

/// Baseline rates, modifiers, intensities and overdispersion for one parameter value.
struct ContactMatrixSet {
  Mode mode = Mode::Complete;
  RowMatrix gamma;
  Tensor3 delta;
  Tensor3 m;
  double phi = 0.0;
};

struct Respondent {
  std::int64_t id = 0;
  int age = 0;
  Index stratum = 0;
};

struct ContactRecord {
  std::int64_t respondent = 0;  // id of the reporting respondent
  int age = 0;                  // respondent age
  Index stratum = 0;            // respondent stratum
  int contact_age = 0;
  std::optional<Index> contact_stratum;
};

/// Sums records into cells of Y and counts respondents per (stratum, age).
/// The mode follows from whether records carry a contact stratum; `mode`
/// fixes it explicitly (needed when there are no records at all).
SurveyTensor aggregate_survey(const std::vector<ContactRecord>& records, const StrataSpace& space,
                              const AgeGrid& grid, const std::vector<Respondent>& respondents,
                              std::optional<Mode> mode = std::nullopt);

/// γ_{a,b} = m_{a,b} / P_b.
RowMatrix intensity_to_rate(const RowMatrix& m, const Eigen::VectorXd& pop);
RowMatrix rate_to_intensity(const RowMatrix& rate, const Eigen::VectorXd& pop);

using AgeMerge = std::vector<std::vector<Index>>;

/// Population-weighted average over merged rows, plain sum over merged columns.
RowMatrix aggregate_intensity(const RowMatrix& m, const Eigen::VectorXd& pop, const AgeMerge& row_merge,
                              const AgeMerge& col_merge);

}  // namespace gmix
