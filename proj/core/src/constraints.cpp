#include "gmix/constraints.hpp"

#include "gmix/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace gmix {

namespace {

Index square_root_exact(Index n) {
  auto r = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(n))));
  if (r * r != n) throw DataError("slice count " + std::to_string(n) + " is not a perfect square");
  return r;
}

}  // namespace

TransposePermutation build_transpose_permutation(Index K) {
  if (K < 1) throw DataError("transpose permutation needs K ≥ 1");
  TransposePermutation p;
  p.K = K;
  p.perm.resize(static_cast<std::size_t>(K * K));
  for (Index k = 0; k < K; ++k)
    for (Index l = 0; l < K; ++l) p.perm[static_cast<std::size_t>(k * K + l)] = l * K + k;
  return p;
}

Index ConstrainedTensor::pair_index(Index k, Index l, Index K) {
  // pairs (0,1),(0,2),...,(0,K-1),(1,2),...
  return k * (2 * K - k - 1) / 2 + (l - k - 1);
}

Tensor3 materialize(const ConstrainedTensor& ct) {
  const Index K = ct.K;
  const Index A = ct.A;
  if (static_cast<Index>(ct.free_within.size()) != K) throw DataError("materialize: missing within-stratum block");
  if (static_cast<Index>(ct.free_between.size()) != K * (K - 1) / 2)
    throw DataError("materialize: missing between-strata block");
  Tensor3 out(K * K, A);
  for (Index k = 0; k < K; ++k) {
    const auto& w = ct.free_within[static_cast<std::size_t>(k)];
    if (w.rows() != A || w.cols() != A) throw DataError("materialize: within block has wrong shape");
    auto slice = out.slice(k * K + k);
    for (Index a = 0; a < A; ++a)
      for (Index b = 0; b <= a; ++b) {
        slice(a, b) = w(a, b);
        slice(b, a) = w(a, b);
      }
  }
  for (Index k = 0; k < K; ++k)
    for (Index l = k + 1; l < K; ++l) {
      const auto& f = ct.free_between[static_cast<std::size_t>(ConstrainedTensor::pair_index(k, l, K))];
      if (f.rows() != A || f.cols() != A) throw DataError("materialize: between block has wrong shape");
      out.slice(k * K + l) = f;
      out.slice(l * K + k) = f.transpose();
    }
  return out;
}

Tensor3 proportion_tensor(const PopulationTable& pop, Mode mode) {
  const Index K = pop.strata();
  const Index A = pop.ages();
  Eigen::MatrixXd q(K, A);
  for (Index k = 0; k < K; ++k)
    for (Index a = 0; a < A; ++a) q(k, a) = pop(k, a) / pop.total(a);
  if (mode == Mode::Partial) {
    Tensor3 s(K, A);
    for (Index k = 0; k < K; ++k)
      for (Index a = 0; a < A; ++a)
        for (Index b = 0; b < A; ++b) s(k, a, b) = q(k, a);
    return s;
  }
  Tensor3 s(K * K, A);
  for (Index k = 0; k < K; ++k)
    for (Index l = 0; l < K; ++l)
      for (Index a = 0; a < A; ++a)
        for (Index b = 0; b < A; ++b) s(k * K + l, a, b) = q(k, a) * q(l, b);
  return s;
}

Tensor3 softmax_fiber(const Tensor3& omega, const Tensor3& s) {
  if (!omega.same_shape(s)) throw DataError("softmax_fiber: Ω and s shapes differ");
  const Index n = omega.slices();
  const Index A = omega.ages();
  const Index K = n == 1 ? 1 : static_cast<Index>(std::llround(std::sqrt(static_cast<double>(n))));
  const bool paired = K * K == n;
  Tensor3 delta(n, A);
  std::vector<double> h(static_cast<std::size_t>(n));
  for (Index a = 0; a < A; ++a)
    for (Index b = 0; b < A; ++b) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Index i = 0; i < n; ++i) mx = std::max(mx, omega(i, a, b));
      double total = 0.0;
      for (Index i = 0; i < n; ++i) {
        h[static_cast<std::size_t>(i)] = std::exp(omega(i, a, b) - mx);
        total += h[static_cast<std::size_t>(i)];
      }
      for (Index i = 0; i < n; ++i) {
        const double si = s(i, a, b);
        if (!(si > 0.0)) {
          std::string where = paired ? "(k=" + std::to_string(i / K) + ", l=" + std::to_string(i % K)
                                     : "(k=" + std::to_string(i);
          throw DataError("softmax_fiber: nonpositive proportion at " + where + ", a=" + std::to_string(a) +
                          ", b=" + std::to_string(b) + ")");
        }
        delta(i, a, b) = h[static_cast<std::size_t>(i)] / total / si;
      }
    }
  return delta;
}

Tensor3 clr_inverse_center(const Tensor3& s) {
  const Index n = s.slices();
  const Index A = s.ages();
  Tensor3 w(n, A);
  for (Index a = 0; a < A; ++a)
    for (Index b = 0; b < A; ++b) {
      double mean = 0.0;
      for (Index i = 0; i < n; ++i) {
        if (!(s(i, a, b) > 0.0)) throw DataError("clr_inverse_center: nonpositive proportion");
        w(i, a, b) = std::log(s(i, a, b));
        mean += w(i, a, b);
      }
      mean /= static_cast<double>(n);
      for (Index i = 0; i < n; ++i) w(i, a, b) -= mean;
    }
  return w;
}

Tensor3 kronecker_sum_mode1(const std::vector<Tensor3>& components, bool paired) {
  if (components.empty()) throw DataError("kronecker_sum_mode1: no components");
  const Index A = components.front().ages();
  std::vector<Index> sizes;
  Index k_star = 1;
  for (const auto& c : components) {
    if (c.ages() != A) throw DataError("kronecker_sum_mode1: components disagree on the number of ages");
    const Index kj = paired ? square_root_exact(c.slices()) : c.slices();
    sizes.push_back(kj);
    k_star *= kj;
  }
  if (components.size() == 1) return components.front();
  // Category of each component for every composite stratum.
  const std::size_t J = components.size();
  std::vector<std::vector<Index>> cat(static_cast<std::size_t>(k_star), std::vector<Index>(J));
  for (Index s = 0; s < k_star; ++s) {
    Index rem = s;
    for (std::size_t j = J; j-- > 0;) {
      cat[static_cast<std::size_t>(s)][j] = rem % sizes[j];
      rem /= sizes[j];
    }
  }
  const Index n_out = paired ? k_star * k_star : k_star;
  Tensor3 out(n_out, A);
  const Index stride = A * A;
  for (Index i = 0; i < n_out; ++i) {
    const Index s = paired ? i / k_star : i;
    const Index t = paired ? i % k_star : 0;
    double* dst = out.values().data() + i * stride;
    for (std::size_t j = 0; j < J; ++j) {
      const Index kj = cat[static_cast<std::size_t>(s)][j];
      const Index src_slice = paired ? kj * sizes[j] + cat[static_cast<std::size_t>(t)][j] : kj;
      const double* src = components[j].values().data() + src_slice * stride;
      for (Index c = 0; c < stride; ++c) dst[c] += src[c];
    }
  }
  return out;
}

RankResult rank_condition(const PopulationTable& pop, Mode mode) {
  const Index K = pop.strata();
  const Index A = pop.ages();
  Eigen::MatrixXd S;
  Index cols = 0;
  double scale = 0.0;
  if (mode == Mode::Complete) {
    cols = K * K;
    S.resize(A * A, cols);
    for (Index a = 0; a < A; ++a)
      for (Index b = 0; b < A; ++b)
        for (Index k = 0; k < K; ++k)
          for (Index l = 0; l < K; ++l)
            S(a * A + b, k * K + l) = pop(k, a) * pop(l, b) / (pop.total(a) * pop.total(b));
    scale = static_cast<double>(std::max(A * A, cols));
  } else {
    cols = K;
    S.resize(A, cols);
    for (Index a = 0; a < A; ++a)
      for (Index k = 0; k < K; ++k) S(a, k) = pop(k, a) / pop.total(a);
    scale = static_cast<double>(std::max(A, cols));
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(S);
  const auto& sv = svd.singularValues();
  const double tol = scale * std::numeric_limits<double>::epsilon() * (sv.size() ? sv(0) : 0.0);
  RankResult r;
  r.columns = cols;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++r.rank;
  r.feasible_nontrivial = r.rank < cols;
  return r;
}

double reciprocity_residual(const Tensor3& omega) {
  const Index K = square_root_exact(omega.slices());
  const Index A = omega.ages();
  double worst = 0.0;
  for (Index k = 0; k < K; ++k)
    for (Index l = 0; l < K; ++l)
      for (Index a = 0; a < A; ++a)
        for (Index b = 0; b < A; ++b)
          worst = std::max(worst, std::abs(omega(k * K + l, a, b) - omega(l * K + k, b, a)));
  return worst;
}

double consistency_residual(const Tensor3& delta, const Tensor3& s) {
  if (!delta.same_shape(s)) throw DataError("consistency_residual: shape mismatch");
  double worst = 0.0;
  for (Index a = 0; a < delta.ages(); ++a)
    for (Index b = 0; b < delta.ages(); ++b) {
      double acc = 0.0;
      for (Index i = 0; i < delta.slices(); ++i) acc += delta(i, a, b) * s(i, a, b);
      worst = std::max(worst, std::abs(acc - 1.0));
    }
  return worst;
}

}  // namespace gmix
