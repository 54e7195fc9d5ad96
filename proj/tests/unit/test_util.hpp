#pragma once

#include "gmix/core_domain.hpp"
#include "gmix/random.hpp"
#include "gmix/tensor.hpp"

#include <functional>
#include <vector>

namespace gmix::test {

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline Eigen::MatrixXd random_matrix(Index rows, Index cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = uniform(rng, lo, hi);
  return m;
}

inline Tensor3 random_tensor(Index slices, Index ages, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor3 t(slices, ages);
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

inline PopulationTable random_population(Index K, Index A, Rng& rng, double lo = 100.0, double hi = 5000.0) {
  return PopulationTable(random_matrix(K, A, rng, lo, hi));
}

/// Features with the given category counts, named f0, f1, ...
inline StrataSpace make_space(const std::vector<Index>& sizes) {
  std::vector<FeatureSpec> fs;
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    std::vector<std::string> cats;
    for (Index c = 0; c < sizes[j]; ++c) cats.push_back("c" + std::to_string(c));
    fs.emplace_back("f" + std::to_string(j), cats);
  }
  return StrataSpace(fs);
}

/// Central differences of f at x; step h·max(1, |x_i|).
inline Eigen::VectorXd finite_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x(i)));
    xp(i) = x(i) + step;
    const double up = f(xp);
    xp(i) = x(i) - step;
    const double down = f(xp);
    xp(i) = x(i);
    g(i) = (up - down) / (2 * step);
  }
  return g;
}

/// max_i |a_i − b_i| / max(1, |b_i|)
inline double max_rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a(i) - b(i)) / std::max(1.0, std::abs(b(i))));
  return worst;
}

}  // namespace gmix::test
