#include "gmix/metrics.hpp"

#include "gmix/error.hpp"
#include "gmix/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace gmix {

namespace {

constexpr std::uint64_t kPurposeFolds = 30;

void check_shapes(const Tensor3& x, const Tensor3& y, const char* what) {
  if (!x.same_shape(y)) throw DataError(std::string(what) + ": tensors differ in shape");
}

double sample_variance(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

MapeResult mape(const Tensor3& estimate, const Tensor3& truth) {
  check_shapes(estimate, truth, "mape");
  MapeResult r;
  double acc = 0.0;
  for (Index i = 0; i < truth.size(); ++i) {
    const double t = truth.values()[static_cast<std::size_t>(i)];
    if (t == 0.0) {
      ++r.excluded;
      continue;
    }
    acc += std::abs(estimate.values()[static_cast<std::size_t>(i)] - t) / std::abs(t);
    ++r.used;
  }
  r.value = r.used ? 100.0 * acc / static_cast<double>(r.used) : 0.0;
  return r;
}

double rmse(const Tensor3& estimate, const Tensor3& truth) {
  check_shapes(estimate, truth, "rmse");
  double acc = 0.0;
  for (Index i = 0; i < truth.size(); ++i) {
    const double d = estimate.values()[static_cast<std::size_t>(i)] - truth.values()[static_cast<std::size_t>(i)];
    acc += d * d;
  }
  return truth.size() ? std::sqrt(acc / static_cast<double>(truth.size())) : 0.0;
}

double interval_score(const Tensor3& lower, const Tensor3& upper, const Tensor3& truth, double level) {
  check_shapes(lower, truth, "interval_score");
  check_shapes(upper, truth, "interval_score");
  const double alpha = 1.0 - level;
  double acc = 0.0;
  for (Index i = 0; i < truth.size(); ++i) {
    const auto c = static_cast<std::size_t>(i);
    const double l = lower.values()[c], u = upper.values()[c], y = truth.values()[c];
    if (l > u) throw DataError("interval_score: lower bound above upper bound at cell " + std::to_string(i));
    double s = u - l;
    if (y < l) s += (2.0 / alpha) * (l - y);
    if (y > u) s += (2.0 / alpha) * (y - u);
    acc += s;
  }
  return truth.size() ? acc / static_cast<double>(truth.size()) : 0.0;
}

double coverage(const Tensor3& lower, const Tensor3& upper, const Tensor3& truth) {
  check_shapes(lower, truth, "coverage");
  check_shapes(upper, truth, "coverage");
  Index hit = 0;
  for (Index i = 0; i < truth.size(); ++i) {
    const auto c = static_cast<std::size_t>(i);
    if (lower.values()[c] <= truth.values()[c] && truth.values()[c] <= upper.values()[c]) ++hit;
  }
  return truth.size() ? 100.0 * static_cast<double>(hit) / static_cast<double>(truth.size()) : 0.0;
}

double log_mean_exp(const std::vector<double>& v) {
  if (v.empty()) throw DataError("log_mean_exp of an empty vector");
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - mx);
  return mx + std::log(acc / static_cast<double>(v.size()));
}

std::vector<int> assign_folds(const SurveyTensor& data, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross-validation needs at least two folds");
  std::vector<int> out(static_cast<std::size_t>(data.y.size()));
  for (std::size_t c = 0; c < out.size(); ++c)
    out[c] = static_cast<int>(substream_seed(seed, c, kPurposeFolds) % static_cast<std::uint64_t>(folds));
  return out;
}

ElpdResult kfold_elpd(const ModelSpec& spec, const SurveyTensor& data, const PopulationTable& pop, int folds,
                      const FitConfig& cfg, Index draws) {
  const std::vector<int> fold_of = assign_folds(data, folds, cfg.seed);
  ElpdResult res;
  res.fold_failed.assign(static_cast<std::size_t>(folds), false);
  std::vector<double> pointwise;
  const Index A = data.ages();
  for (int f = 0; f < folds; ++f) {
    auto model = std::make_shared<Model>(spec, data, pop);
    std::vector<std::uint8_t> train(fold_of.size());
    for (std::size_t c = 0; c < fold_of.size(); ++c) train[c] = fold_of[c] != f;
    model->set_cell_mask(train);
    FitConfig fold_cfg = cfg;
    fold_cfg.seed = substream_seed(cfg.seed, static_cast<std::uint64_t>(f), kPurposeFolds + 1);
    PosteriorSamples samples(model, Eigen::MatrixXd(0, model->dim()));
    try {
      const VariationalState st = fit(*model, fold_cfg);
      samples = sample_posterior(st, model, draws, fold_cfg.seed);
    } catch (const NumericalError&) {
      res.fold_failed[static_cast<std::size_t>(f)] = true;
      continue;
    }
    std::vector<Tensor3> mu;
    std::vector<double> phi;
    for (Index d = 0; d < samples.size(); ++d) {
      mu.push_back(model->expected_counts(samples.theta(d)));
      phi.push_back(std::exp(samples.draws()(d, model->layout().log_phi)));
    }
    std::vector<double> lp(static_cast<std::size_t>(samples.size()));
    for (Index i = 0; i < data.y.slices(); ++i)
      for (Index a = 0; a < A; ++a)
        for (Index b = 0; b < A; ++b) {
          const Index cell = (i * A + a) * A + b;
          if (fold_of[static_cast<std::size_t>(cell)] != f) continue;
          if (!(data.n(data.source_stratum(i), a) > 0.0)) continue;
          for (Index d = 0; d < samples.size(); ++d)
            lp[static_cast<std::size_t>(d)] = nb_logpmf(data.y(i, a, b), mu[static_cast<std::size_t>(d)](i, a, b),
                                                        phi[static_cast<std::size_t>(d)]);
          pointwise.push_back(log_mean_exp(lp));
          res.cells.push_back(cell);
        }
  }
  // Cells are gathered fold by fold; order them by cell index for pairing.
  std::vector<std::size_t> order(res.cells.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return res.cells[x] < res.cells[y]; });
  std::vector<Index> cells(order.size());
  res.pointwise.resize(static_cast<Index>(order.size()));
  for (std::size_t i = 0; i < order.size(); ++i) {
    cells[i] = res.cells[order[i]];
    res.pointwise(static_cast<Index>(i)) = pointwise[order[i]];
  }
  res.cells = std::move(cells);
  res.elpd = res.pointwise.sum();
  res.se = std::sqrt(static_cast<double>(res.pointwise.size()) * sample_variance(res.pointwise));
  return res;
}

ElpdDifference elpd_difference(const ElpdResult& a, const ElpdResult& b) {
  std::vector<double> diffs;
  std::size_t j = 0;
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    while (j < b.cells.size() && b.cells[j] < a.cells[i]) ++j;
    if (j < b.cells.size() && b.cells[j] == a.cells[i])
      diffs.push_back(a.pointwise(static_cast<Index>(i)) - b.pointwise(static_cast<Index>(j)));
  }
  if (diffs.empty()) throw DataError("ELPD results share no held-out cells");
  const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(diffs.data(), static_cast<Index>(diffs.size()));
  return {d.sum(), std::sqrt(static_cast<double>(d.size()) * sample_variance(d))};
}

}  // namespace gmix
