#include "gmix/core_domain.hpp"

#include "gmix/error.hpp"

#include <cmath>
#include <set>
#include <string>

namespace gmix {

const char* to_string(Mode mode) { return mode == Mode::Complete ? "complete" : "partial"; }

Mode mode_from_string(const std::string& name) {
  if (name == "complete") return Mode::Complete;
  if (name == "partial") return Mode::Partial;
  throw ConfigError("unknown mode '" + name + "' (expected complete or partial)");
}

AgeGrid::AgeGrid(int min_age, int max_age) : min_age_(min_age), max_age_(max_age) {
  if (max_age - min_age + 1 < 2) throw DataError("AgeGrid needs at least two ages");
}

AgeGrid::AgeGrid(const std::vector<int>& ages) {
  if (ages.size() < 2) throw DataError("AgeGrid needs at least two ages");
  for (std::size_t i = 1; i < ages.size(); ++i) {
    if (ages[i] != ages[i - 1] + 1)
      throw DataError("AgeGrid ages must be contiguous and increasing (at position " + std::to_string(i) + ")");
  }
  min_age_ = ages.front();
  max_age_ = ages.back();
}

Index AgeGrid::index_of(int age) const {
  if (!contains(age))
    throw DataError("age " + std::to_string(age) + " outside grid " + std::to_string(min_age_) + ".." +
                    std::to_string(max_age_));
  return age - min_age_;
}

std::vector<int> AgeGrid::ages() const {
  std::vector<int> out;
  for (int a = min_age_; a <= max_age_; ++a) out.push_back(a);
  return out;
}

FeatureSpec::FeatureSpec(std::string name_, std::vector<std::string> categories_)
    : name(std::move(name_)), categories(std::move(categories_)) {
  if (categories.size() < 2) throw DataError("feature '" + name + "' needs at least two categories");
  std::set<std::string> seen(categories.begin(), categories.end());
  if (seen.size() != categories.size()) throw DataError("feature '" + name + "' has duplicate category labels");
}

int FeatureSpec::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < categories.size(); ++i)
    if (categories[i] == label) return static_cast<int>(i);
  throw DataError("unknown category '" + label + "' for feature '" + name + "'");
}

StrataSpace::StrataSpace(std::vector<FeatureSpec> features) : features_(std::move(features)) {
  std::set<std::string> names;
  for (const auto& f : features_) {
    if (f.size() < 2) throw DataError("feature '" + f.name + "' needs at least two categories");
    if (!names.insert(f.name).second) throw DataError("duplicate feature name '" + f.name + "'");
  }
  radix_.assign(features_.size(), 1);
  k_star_ = 1;
  for (std::size_t j = features_.size(); j-- > 0;) {
    radix_[j] = k_star_;
    k_star_ *= features_[j].size();
  }
}

std::vector<int> StrataSpace::tuple_of(Index s) const {
  if (s < 0 || s >= k_star_) throw DataError("stratum index " + std::to_string(s) + " out of range");
  std::vector<int> tuple(features_.size());
  for (std::size_t j = 0; j < features_.size(); ++j) tuple[j] = static_cast<int>((s / radix_[j]) % features_[j].size());
  return tuple;
}

Index StrataSpace::index_of(const std::vector<int>& tuple) const {
  if (tuple.size() != features_.size()) throw DataError("stratum tuple has wrong length");
  Index s = 0;
  for (std::size_t j = 0; j < features_.size(); ++j) {
    if (tuple[j] < 0 || tuple[j] >= features_[j].size())
      throw DataError("category index out of range for feature '" + features_[j].name + "'");
    s += tuple[j] * radix_[j];
  }
  return s;
}

int StrataSpace::category(Index s, Index j) const {
  const auto jj = static_cast<std::size_t>(j);
  return static_cast<int>((s / radix_[jj]) % features_[jj].size());
}

std::string StrataSpace::label(Index s) const {
  if (features_.empty()) return "all";
  std::string out;
  const auto tuple = tuple_of(s);
  for (std::size_t j = 0; j < features_.size(); ++j) {
    if (j) out += '|';
    out += features_[j].categories[static_cast<std::size_t>(tuple[j])];
  }
  return out;
}

PopulationTable::PopulationTable(Eigen::MatrixXd counts) : counts_(std::move(counts)) {
  if (counts_.rows() < 1 || counts_.cols() < 2) throw DataError("population table needs ≥1 stratum and ≥2 ages");
  for (Index s = 0; s < counts_.rows(); ++s)
    for (Index a = 0; a < counts_.cols(); ++a)
      if (!std::isfinite(counts_(s, a)) || counts_(s, a) < 0.0)
        throw DataError("population count (stratum " + std::to_string(s) + ", age index " + std::to_string(a) +
                        ") must be finite and nonnegative");
  totals_ = counts_.colwise().sum().transpose();
  for (Index a = 0; a < totals_.size(); ++a)
    if (!(totals_(a) > 0.0)) throw DataError("total population at age index " + std::to_string(a) + " is zero");
}

void SurveyTensor::validate() const {
  const Index slices_expected = mode == Mode::Complete ? strata * strata : strata;
  if (y.slices() != slices_expected) throw DataError("survey tensor has wrong number of stratum slices");
  if (n.rows() != strata || n.cols() != y.ages()) throw DataError("respondent counts have wrong shape");
  if (has_offsets() && !offsets.same_shape(y)) throw DataError("offsets must match the shape of the counts");
  for (Index s = 0; s < strata; ++s)
    for (Index a = 0; a < n.cols(); ++a)
      if (!(n(s, a) >= 0.0) || n(s, a) != std::floor(n(s, a)))
        throw DataError("respondent count (stratum " + std::to_string(s) + ", age index " + std::to_string(a) +
                        ") must be a nonnegative integer");
  const Index A = y.ages();
  for (Index i = 0; i < y.slices(); ++i)
    for (Index a = 0; a < A; ++a)
      for (Index b = 0; b < A; ++b) {
        const double v = y(i, a, b);
        if (!(v >= 0.0) || v != std::floor(v))
          throw DataError("contact count at (slice " + std::to_string(i) + ", " + std::to_string(a) + ", " +
                          std::to_string(b) + ") must be a nonnegative integer");
        if (v > 0.0 && n(source_stratum(i), a) == 0.0)
          throw DataError("contacts recorded for stratum " + std::to_string(source_stratum(i)) + ", age index " +
                          std::to_string(a) + " which has no respondents");
        if (has_offsets() && !std::isfinite(offsets(i, a, b))) throw DataError("non-finite offset");
      }
}

SurveyTensor aggregate_survey(const std::vector<ContactRecord>& records, const StrataSpace& space,
                              const AgeGrid& grid, const std::vector<Respondent>& respondents,
                              std::optional<Mode> mode) {
  const Index K = space.size();
  const Index A = grid.size();
  SurveyTensor out;
  out.strata = K;
  out.mode = mode.value_or(Mode::Partial);
  if (!records.empty()) {
    const bool first = records.front().contact_stratum.has_value();
    for (std::size_t r = 0; r < records.size(); ++r)
      if (records[r].contact_stratum.has_value() != first)
        throw DataError("contact record " + std::to_string(r) +
                        ": contact stratum must be given for all records or none");
    const Mode inferred = first ? Mode::Complete : Mode::Partial;
    if (mode && *mode != inferred)
      throw DataError(std::string("contact records describe ") + to_string(inferred) + " data but " +
                      to_string(*mode) + " was requested");
    out.mode = inferred;
  }
  out.n = Eigen::MatrixXd::Zero(K, A);
  for (std::size_t r = 0; r < respondents.size(); ++r) {
    const auto& p = respondents[r];
    if (p.stratum < 0 || p.stratum >= K) throw DataError("respondent " + std::to_string(r) + ": stratum out of range");
    if (!grid.contains(p.age))
      throw DataError("respondent " + std::to_string(r) + ": age " + std::to_string(p.age) + " outside grid");
    out.n(p.stratum, grid.index_of(p.age)) += 1.0;
  }
  out.y = Tensor3(out.mode == Mode::Complete ? K * K : K, A);
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& c = records[r];
    const std::string where = "contact record " + std::to_string(r);
    if (!grid.contains(c.age)) throw DataError(where + ": respondent age " + std::to_string(c.age) + " outside grid");
    if (!grid.contains(c.contact_age))
      throw DataError(where + ": contact age " + std::to_string(c.contact_age) + " outside grid");
    if (c.stratum < 0 || c.stratum >= K) throw DataError(where + ": respondent stratum out of range");
    Index slice = c.stratum;
    if (c.contact_stratum) {
      if (*c.contact_stratum < 0 || *c.contact_stratum >= K) throw DataError(where + ": contact stratum out of range");
      slice = c.stratum * K + *c.contact_stratum;
    }
    out.y(slice, grid.index_of(c.age), grid.index_of(c.contact_age)) += 1.0;
  }
  out.validate();
  return out;
}

RowMatrix intensity_to_rate(const RowMatrix& m, const Eigen::VectorXd& pop) {
  if (pop.size() != m.cols()) throw DataError("intensity_to_rate: population length mismatch");
  for (Index b = 0; b < pop.size(); ++b)
    if (!(pop(b) > 0.0)) throw DataError("intensity_to_rate: zero population at age index " + std::to_string(b));
  return m * pop.cwiseInverse().asDiagonal();
}

RowMatrix rate_to_intensity(const RowMatrix& rate, const Eigen::VectorXd& pop) {
  if (pop.size() != rate.cols()) throw DataError("rate_to_intensity: population length mismatch");
  return rate * pop.asDiagonal();
}

namespace {

void check_merge(const AgeMerge& merge, Index A, const char* what) {
  std::vector<int> seen(static_cast<std::size_t>(A), 0);
  for (std::size_t c = 0; c < merge.size(); ++c) {
    if (merge[c].empty()) throw DataError(std::string(what) + ": partition cell " + std::to_string(c) + " is empty");
    for (Index a : merge[c]) {
      if (a < 0 || a >= A) throw DataError(std::string(what) + ": age index out of range");
      if (seen[static_cast<std::size_t>(a)]++) throw DataError(std::string(what) + ": partition cells overlap");
    }
  }
  for (Index a = 0; a < A; ++a)
    if (!seen[static_cast<std::size_t>(a)])
      throw DataError(std::string(what) + ": age index " + std::to_string(a) + " not covered");
}

}  // namespace

RowMatrix aggregate_intensity(const RowMatrix& m, const Eigen::VectorXd& pop, const AgeMerge& row_merge,
                              const AgeMerge& col_merge) {
  const Index A = m.rows();
  if (m.cols() != A || pop.size() != A) throw DataError("aggregate_intensity: shape mismatch");
  check_merge(row_merge, A, "row partition");
  check_merge(col_merge, A, "column partition");
  RowMatrix out = RowMatrix::Zero(static_cast<Index>(row_merge.size()), static_cast<Index>(col_merge.size()));
  for (std::size_t c = 0; c < row_merge.size(); ++c) {
    double pc = 0.0;
    for (Index a : row_merge[c]) pc += pop(a);
    for (std::size_t d = 0; d < col_merge.size(); ++d) {
      double acc = 0.0;
      for (Index a : row_merge[c])
        for (Index b : col_merge[d]) acc += pop(a) * m(a, b);
      out(static_cast<Index>(c), static_cast<Index>(d)) = acc / pc;
    }
  }
  return out;
}

}  // namespace gmix
