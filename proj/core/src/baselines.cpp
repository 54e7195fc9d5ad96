#include "gmix/baselines.hpp"

#include "gmix/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>

namespace gmix {

namespace {

constexpr std::uint64_t kPurposeBootstrap = 20;

Index slices_for(Mode mode, Index K) { return mode == Mode::Complete ? K * K : K; }

double quantile_sorted(const std::vector<double>& v, double p) {
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

AgePartition::AgePartition(std::vector<std::pair<Index, Index>> ranges, Index ages)
    : ranges_(std::move(ranges)), ages_(ages) {
  if (ranges_.empty()) throw DataError("age partition needs at least one range");
  Index expect = 0;
  for (const auto& [lo, hi] : ranges_) {
    if (lo != expect || hi < lo) throw DataError("age ranges must be ordered, nonempty and contiguous");
    expect = hi + 1;
  }
  if (expect != ages) throw DataError("age ranges must cover the whole grid");
  lookup_.resize(static_cast<std::size_t>(ages));
  for (std::size_t c = 0; c < ranges_.size(); ++c)
    for (Index a = ranges_[c].first; a <= ranges_[c].second; ++a) lookup_[static_cast<std::size_t>(a)] = static_cast<Index>(c);
}

AgePartition AgePartition::singletons(Index ages) {
  std::vector<std::pair<Index, Index>> r;
  for (Index a = 0; a < ages; ++a) r.emplace_back(a, a);
  return AgePartition(std::move(r), ages);
}

AgePartition AgePartition::from_breakpoints(const AgeGrid& grid, const std::vector<int>& lower_ages) {
  if (lower_ages.empty()) return singletons(grid.size());
  if (lower_ages.front() != grid.min_age())
    throw ConfigError("the first breakpoint must equal the youngest grid age " + std::to_string(grid.min_age()));
  std::vector<std::pair<Index, Index>> r;
  for (std::size_t i = 0; i < lower_ages.size(); ++i) {
    const Index lo = grid.index_of(lower_ages[i]);
    const Index hi = i + 1 < lower_ages.size() ? grid.index_of(lower_ages[i + 1]) - 1 : grid.size() - 1;
    if (hi < lo) throw ConfigError("breakpoints must be strictly increasing");
    r.emplace_back(lo, hi);
  }
  return AgePartition(std::move(r), grid.size());
}

std::vector<int> AgePartition::breakpoints(const AgeGrid& grid) const {
  std::vector<int> out;
  for (const auto& r : ranges_) out.push_back(grid.age(r.first));
  return out;
}

AgePartition AgePartition::merged(Index c) const {
  if (c < 0 || c + 1 >= size()) throw DataError("cannot merge range " + std::to_string(c) + " with its successor");
  auto r = ranges_;
  r[static_cast<std::size_t>(c)].second = r[static_cast<std::size_t>(c + 1)].second;
  r.erase(r.begin() + c + 1);
  return AgePartition(std::move(r), ages_);
}

Tensor3 coarsen_counts(const Tensor3& y, const AgePartition& part) {
  if (y.ages() != part.ages()) throw DataError("coarsen_counts: partition does not match the grid");
  const Index B = part.size();
  Tensor3 out(y.slices(), B);
  for (Index i = 0; i < y.slices(); ++i)
    for (Index a = 0; a < y.ages(); ++a)
      for (Index b = 0; b < y.ages(); ++b) out(i, part.range_of(a), part.range_of(b)) += y(i, a, b);
  return out;
}

Eigen::MatrixXd coarsen_columns(const Eigen::MatrixXd& x, const AgePartition& part) {
  if (x.cols() != part.ages()) throw DataError("coarsen_columns: partition does not match the grid");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), part.size());
  for (Index a = 0; a < x.cols(); ++a) out.col(part.range_of(a)) += x.col(a);
  return out;
}

Tensor3 empirical_intensity(const Tensor3& y_coarse, const Eigen::MatrixXd& n_coarse, Mode mode) {
  const Index K = n_coarse.rows();
  const Index B = y_coarse.ages();
  if (y_coarse.slices() != slices_for(mode, K) || n_coarse.cols() != B)
    throw DataError("empirical_intensity: shape mismatch");
  Tensor3 out(y_coarse.slices(), B);
  for (Index i = 0; i < y_coarse.slices(); ++i) {
    const Index s = mode == Mode::Complete ? i / K : i;
    for (Index c = 0; c < B; ++c) {
      const double n = n_coarse(s, c);
      if (!(n > 0.0))
        throw DataError("no respondents in stratum " + std::to_string(s) + ", age range " + std::to_string(c));
      for (Index d = 0; d < B; ++d) out(i, c, d) = y_coarse(i, c, d) / n;
    }
  }
  return out;
}

Tensor3 reciprocity_adjust(const Tensor3& m_hat, const Eigen::MatrixXd& pop_coarse) {
  const Index K = pop_coarse.rows();
  const Index B = m_hat.ages();
  if (m_hat.slices() != K * K || pop_coarse.cols() != B) throw DataError("reciprocity_adjust: shape mismatch");
  Tensor3 out(K * K, B);
  for (Index s = 0; s < K; ++s)
    for (Index t = 0; t < K; ++t)
      for (Index c = 0; c < B; ++c)
        for (Index d = 0; d < B; ++d)
          out(s * K + t, c, d) =
              0.5 * (m_hat(s * K + t, c, d) + m_hat(t * K + s, d, c) * pop_coarse(t, d) / pop_coarse(s, c));
  return out;
}

RowMatrix pixilate(const RowMatrix& m, const Eigen::VectorXd& pop, const AgePartition& part) {
  const Index A = m.rows();
  if (m.cols() != A || pop.size() != A || part.ages() != A) throw DataError("pixilate: shape mismatch");
  const Index B = part.size();
  Eigen::VectorXd pc = Eigen::VectorXd::Zero(B);
  for (Index a = 0; a < A; ++a) pc(part.range_of(a)) += pop(a);
  RowMatrix w = RowMatrix::Zero(B, B);
  for (Index a = 0; a < A; ++a) {
    const Index c = part.range_of(a);
    const double weight = pop(a) / pc(c);
    for (Index b = 0; b < A; ++b) w(c, part.range_of(b)) += weight * m(a, b);
  }
  return w;
}

RowMatrix depixilate(const RowMatrix& w, const Eigen::VectorXd& pop, const AgePartition& part) {
  const Index A = part.ages();
  const Index B = part.size();
  if (w.rows() != B || w.cols() != B || pop.size() != A) throw DataError("depixilate: shape mismatch");
  Eigen::VectorXd pc = Eigen::VectorXd::Zero(B);
  for (Index a = 0; a < A; ++a) pc(part.range_of(a)) += pop(a);
  RowMatrix m(A, A);
  for (Index a = 0; a < A; ++a) {
    const Index c = part.range_of(a);
    for (Index b = 0; b < A; ++b) {
      const Index d = part.range_of(b);
      m(a, b) = (pc(c) / pop(a)) * w(c, d) / static_cast<double>(part.width(c) * part.width(d));
    }
  }
  return m;
}

Tensor3 pixilate_stratified(const Tensor3& m, const PopulationTable& pop, const AgePartition& part, Mode mode) {
  const Index K = pop.strata();
  if (m.slices() != slices_for(mode, K)) throw DataError("pixilate_stratified: slice count mismatch");
  Tensor3 out(m.slices(), part.size());
  for (Index i = 0; i < m.slices(); ++i) {
    const Index s = mode == Mode::Complete ? i / K : i;
    out.slice(i) = pixilate(m.slice(i), pop.counts().row(s).transpose(), part);
  }
  return out;
}

Tensor3 depixilate_stratified(const Tensor3& w, const PopulationTable& pop, const AgePartition& part, Mode mode) {
  const Index K = pop.strata();
  if (w.slices() != slices_for(mode, K)) throw DataError("depixilate_stratified: slice count mismatch");
  Tensor3 out(w.slices(), part.ages());
  for (Index i = 0; i < w.slices(); ++i) {
    const Index s = mode == Mode::Complete ? i / K : i;
    out.slice(i) = depixilate(w.slice(i), pop.counts().row(s).transpose(), part);
  }
  return out;
}

CoarsenResult auto_coarsen(const AgePartition& start, const Eigen::MatrixXd& n, double alpha, Index J) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("coarsening alpha must lie in (0, 1)");
  if (J < 1) throw ConfigError("coarsening needs J ≥ 1");
  if (n.cols() != start.size()) throw DataError("auto_coarsen: counts do not match the partition");
  CoarsenResult res;
  res.partition = start;
  Eigen::MatrixXd counts = n;
  const double threshold = alpha / static_cast<double>(J);
  auto criterion = [&] { return (-counts.array()).exp().sum(); };
  res.criterion = criterion();
  while (res.criterion > threshold && res.partition.size() > 1) {
    const Eigen::VectorXd binding = counts.colwise().minCoeff().transpose();
    Index c = 0;
    for (Index i = 1; i < binding.size(); ++i)
      if (binding(i) < binding(c)) c = i;
    Index left;  // merge ranges left and left + 1
    if (c == 0) {
      left = 0;
    } else if (c == binding.size() - 1) {
      left = c - 1;
    } else {
      left = binding(c - 1) <= binding(c + 1) ? c - 1 : c;
    }
    res.partition = res.partition.merged(left);
    Eigen::MatrixXd next(counts.rows(), counts.cols() - 1);
    for (Index j = 0, k = 0; j < counts.cols(); ++j) {
      if (j == left + 1) continue;
      next.col(k) = counts.col(j);
      if (j == left) next.col(k) += counts.col(j + 1);
      ++k;
    }
    counts = next;
    res.criterion = criterion();
  }
  res.warning = res.criterion > threshold;
  return res;
}

BootstrapResult bootstrap(const std::vector<Respondent>& respondents, const std::vector<ContactRecord>& records,
                          const AgePartition& part, const StrataSpace& space, const AgeGrid& grid,
                          const PopulationTable& pop, Mode mode, Index J, std::uint64_t seed, double level,
                          bool reciprocity) {
  if (J < 1) throw ConfigError("bootstrap needs J ≥ 1");
  if (respondents.empty()) throw DataError("bootstrap needs at least one respondent");
  const Index K = space.size();
  const Index B = part.size();
  const Index n_slices = slices_for(mode, K);
  const Eigen::MatrixXd pop_coarse = coarsen_columns(pop.counts(), part);
  const bool adjust = reciprocity && mode == Mode::Complete;

  // Per-respondent coarse contact lists.
  std::vector<Index> position(respondents.size());
  std::unordered_map<std::int64_t, std::size_t> by_id;
  for (std::size_t i = 0; i < respondents.size(); ++i) {
    if (!by_id.emplace(respondents[i].id, i).second)
      throw DataError("duplicate respondent id " + std::to_string(respondents[i].id));
  }
  std::vector<std::vector<std::pair<Index, double>>> contacts(respondents.size());
  for (const auto& r : records) {
    const auto it = by_id.find(r.respondent);
    if (it == by_id.end()) throw DataError("contact record refers to unknown respondent " + std::to_string(r.respondent));
    const Index slice = mode == Mode::Complete ? r.stratum * K + r.contact_stratum.value() : r.stratum;
    const Index c = part.range_of(grid.index_of(r.age));
    const Index d = part.range_of(grid.index_of(r.contact_age));
    auto& list = contacts[it->second];
    const Index cell = (slice * B + c) * B + d;
    if (!list.empty() && list.back().first == cell) {
      list.back().second += 1.0;
    } else {
      list.emplace_back(cell, 1.0);
    }
  }
  std::vector<Index> home(respondents.size());  // s * B + c
  for (std::size_t i = 0; i < respondents.size(); ++i)
    home[i] = respondents[i].stratum * B + part.range_of(grid.index_of(respondents[i].age));

  auto estimate = [&](const std::vector<double>& weight, Tensor3& out) -> bool {
    Tensor3 y(n_slices, B);
    Eigen::MatrixXd n = Eigen::MatrixXd::Zero(K, B);
    for (std::size_t i = 0; i < respondents.size(); ++i) {
      const double w = weight[i];
      if (w == 0.0) continue;
      n(home[i] / B, home[i] % B) += w;
      for (const auto& [cell, cnt] : contacts[i]) y.values()[static_cast<std::size_t>(cell)] += w * cnt;
    }
    if ((n.array() <= 0.0).any()) return false;
    out = empirical_intensity(y, n, mode);
    if (adjust) out = reciprocity_adjust(out, pop_coarse);
    return true;
  };

  BootstrapResult res;
  const std::vector<double> ones(respondents.size(), 1.0);
  if (!estimate(ones, res.point))
    throw DataError("point estimate impossible: some stratum-age range has no respondents (coarsen the ranges)");

  const Index cells = res.point.size();
  std::vector<double> store;
  store.reserve(static_cast<std::size_t>(cells * J));
  std::vector<double> weight(respondents.size());
  Tensor3 rep;
  Rng rng = make_rng(seed, 0, kPurposeBootstrap);
  const auto N = static_cast<std::uint64_t>(respondents.size());
  for (Index j = 0; j < J; ++j) {
    std::fill(weight.begin(), weight.end(), 0.0);
    for (std::uint64_t i = 0; i < N; ++i) weight[static_cast<std::size_t>(rng() % N)] += 1.0;
    if (!estimate(weight, rep)) {
      ++res.failures;
      continue;
    }
    ++res.successes;
    store.insert(store.end(), rep.values().begin(), rep.values().end());
  }
  if (res.successes == 0) throw NumericalError("every bootstrap replicate failed; coarsen the age ranges");

  res.mean = Tensor3(n_slices, B);
  res.variance = Tensor3(n_slices, B);
  res.lower = Tensor3(n_slices, B);
  res.upper = Tensor3(n_slices, B);
  const double lo_p = 0.5 * (1.0 - level);
  std::vector<double> column(static_cast<std::size_t>(res.successes));
  for (Index c = 0; c < cells; ++c) {
    double acc = 0.0, sq = 0.0;
    const double point = res.point.values()[static_cast<std::size_t>(c)];
    for (Index j = 0; j < res.successes; ++j) {
      const double v = store[static_cast<std::size_t>(j * cells + c)];
      column[static_cast<std::size_t>(j)] = v;
      acc += v;
      sq += (v - point) * (v - point);
    }
    std::sort(column.begin(), column.end());
    const auto cell = static_cast<std::size_t>(c);
    res.mean.values()[cell] = acc / static_cast<double>(res.successes);
    res.variance.values()[cell] = res.successes > 1 ? sq / static_cast<double>(res.successes - 1) : 0.0;
    res.lower.values()[cell] = quantile_sorted(column, lo_p);
    res.upper.values()[cell] = quantile_sorted(column, 1.0 - lo_p);
  }
  return res;
}

SocialmixrEstimate socialmixr_ext(const std::vector<Respondent>& respondents,
                                  const std::vector<ContactRecord>& records, const StrataSpace& space,
                                  const AgeGrid& grid, const PopulationTable& pop, Mode mode,
                                  const SocialmixrConfig& cfg) {
  SocialmixrEstimate est;
  est.partition = AgePartition::from_breakpoints(grid, cfg.breakpoints);
  if (cfg.coarsen) {
    Eigen::MatrixXd n = Eigen::MatrixXd::Zero(space.size(), grid.size());
    for (const auto& r : respondents) n(r.stratum, grid.index_of(r.age)) += 1.0;
    const CoarsenResult cr = auto_coarsen(est.partition, coarsen_columns(n, est.partition), cfg.coarsen_alpha,
                                          cfg.replicates);
    est.partition = cr.partition;
    est.coarsen_warning = cr.warning;
  }
  est.boot = bootstrap(respondents, records, est.partition, space, grid, pop, mode, cfg.replicates, cfg.seed,
                       cfg.level, cfg.reciprocity);
  est.point_fine = depixilate_stratified(est.boot.point, pop, est.partition, mode);
  est.lower_fine = depixilate_stratified(est.boot.lower, pop, est.partition, mode);
  est.upper_fine = depixilate_stratified(est.boot.upper, pop, est.partition, mode);
  return est;
}

}  // namespace gmix
