#include "gmix/prediction.hpp"

#include "gmix/error.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace gmix {

namespace {

constexpr std::uint64_t kPurposePredict = 3;
constexpr double kBoundSlack = 1e-9;

std::string pair_name(Index a, Index b) { return "(" + std::to_string(a) + ", " + std::to_string(b) + ")"; }

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

}  // namespace

Tensor3 expected_margins(const Tensor3& m_partial, const PopulationTable& pop) {
  const Index K = m_partial.slices();
  const Index A = m_partial.ages();
  if (pop.strata() != K || pop.ages() != A) throw DataError("expected_margins: population shape mismatch");
  Tensor3 z(K, A);
  for (Index k = 0; k < K; ++k)
    for (Index a = 0; a < A; ++a)
      for (Index b = 0; b < A; ++b) z(k, a, b) = m_partial(k, a, b) * pop(k, a);
  return z;
}

double balance_residual(const Tensor3& z) {
  double worst = 0.0;
  const Index A = z.ages();
  for (Index a = 0; a < A; ++a)
    for (Index b = 0; b < a; ++b) {
      double t1 = 0.0, t2 = 0.0;
      for (Index k = 0; k < z.slices(); ++k) {
        t1 += z(k, a, b);
        t2 += z(k, b, a);
      }
      const double scale = std::max(std::abs(t1), std::abs(t2));
      if (scale > 0.0) worst = std::max(worst, std::abs(t1 - t2) / scale);
    }
  return worst;
}

Tensor3 rebalance_margins(const Tensor3& z, double tolerance) {
  Tensor3 out = z;
  const Index A = z.ages();
  for (Index a = 0; a < A; ++a)
    for (Index b = 0; b < a; ++b) {
      double t1 = 0.0, t2 = 0.0;
      for (Index k = 0; k < z.slices(); ++k) {
        t1 += z(k, a, b);
        t2 += z(k, b, a);
      }
      if (!(t1 > 0.0) || !(t2 > 0.0)) throw DataError("expected totals must be positive at " + pair_name(a, b));
      if (std::abs(t1 - t2) / std::max(t1, t2) > tolerance)
        throw DataError("contact totals are not balanced at age pair " + pair_name(a, b) + ": " + std::to_string(t1) +
                        " vs " + std::to_string(t2));
      const double g = std::sqrt(t1 * t2);
      for (Index k = 0; k < z.slices(); ++k) {
        out(k, a, b) = z(k, a, b) * (g / t1);
        out(k, b, a) = z(k, b, a) * (g / t2);
      }
    }
  return out;
}

MixingBounds mixing_bounds(const Tensor3& z, double balance_tolerance) {
  const Index K = z.slices();
  const Index A = z.ages();
  for (Index i = 0; i < z.size(); ++i)
    if (!(z.values()[static_cast<std::size_t>(i)] > 0.0)) throw DataError("mixing_bounds: margins must be positive");
  for (Index a = 0; a < A; ++a)
    for (Index b = 0; b < a; ++b) {
      double t1 = 0.0, t2 = 0.0;
      for (Index k = 0; k < K; ++k) {
        t1 += z(k, a, b);
        t2 += z(k, b, a);
      }
      if (std::abs(t1 - t2) > balance_tolerance * std::max(t1, t2))
        throw DataError("mixing_bounds: margins not balanced at age pair " + pair_name(a, b));
    }
  MixingBounds mb;
  mb.K = K;
  mb.lower = Tensor3(K * K, A);
  mb.upper = Tensor3(K * K, A);
  for (Index a = 0; a < A; ++a)
    for (Index b = 0; b < A; ++b) {
      double total_ab = 0.0;
      for (Index t = 0; t < K; ++t) total_ab += z(t, a, b);
      for (Index k = 0; k < K; ++k) {
        const double zk = z(k, a, b);
        const double others = total_ab - zk;
        for (Index l = 0; l < K; ++l) {
          const double zl = z(l, b, a);
          mb.lower(k * K + l, a, b) = clamp01(std::max(0.0, (zl - others) / zk));
          mb.upper(k * K + l, a, b) = clamp01(std::min(1.0, zl / zk));
        }
      }
    }
  return mb;
}

double truncated_beta_sample(double a1, double a2, double l, double u, double w) {
  if (!(a1 > 0.0) || !(a2 > 0.0)) throw DataError("truncated beta: shape parameters must be positive");
  if (!(l >= 0.0) || !(u <= 1.0) || !(l < u)) throw DataError("truncated beta: need 0 ≤ l < u ≤ 1");
  if (!(w >= 0.0 && w <= 1.0)) throw DataError("truncated beta: uniform variate outside [0, 1]");
  if (w == 0.0) return l;
  if (w == 1.0) return u;
  using boost::math::ibeta;
  using boost::math::ibetac;
  const double fl = ibeta(a1, a2, l);
  double x;
  if (fl <= 0.5) {
    const double fu = ibeta(a1, a2, u);
    if (!(fu - fl >= 1e-300)) throw NumericalError("truncated beta: interval carries no probability mass");
    x = boost::math::ibeta_inv(a1, a2, fl + w * (fu - fl));
  } else {
    // Upper tail: work with survival functions to keep precision.
    const double sl = ibetac(a1, a2, l);
    const double su = ibetac(a1, a2, u);
    if (!(sl - su >= 1e-300)) throw NumericalError("truncated beta: interval carries no probability mass");
    x = boost::math::ibetac_inv(a1, a2, sl - w * (sl - su));
  }
  return std::min(u, std::max(l, x));
}

Eigen::VectorXd truncated_dirichlet_sample(const Eigen::VectorXd& alpha, const Eigen::VectorXd& lower,
                                           const Eigen::VectorXd& upper, Rng& rng, int max_retries) {
  const Index n = alpha.size();
  if (n < 1 || lower.size() != n || upper.size() != n) throw DataError("truncated Dirichlet: size mismatch");
  for (Index i = 0; i < n; ++i) {
    if (!(alpha(i) > 0.0)) throw DataError("truncated Dirichlet: concentrations must be positive");
    if (!(lower(i) >= -kBoundSlack) || !(upper(i) <= 1.0 + kBoundSlack) || lower(i) > upper(i) + kBoundSlack)
      throw DataError("truncated Dirichlet: bounds must satisfy 0 ≤ l ≤ u ≤ 1 (component " + std::to_string(i) + ")");
  }
  if (lower.sum() > 1.0 + kBoundSlack || upper.sum() < 1.0 - kBoundSlack)
    throw DataError("truncated Dirichlet: bounds are infeasible (Σl > 1 or Σu < 1)");
  Eigen::VectorXd l = lower.cwiseMax(0.0).cwiseMin(1.0);
  Eigen::VectorXd u = upper.cwiseMax(l).cwiseMin(1.0);
  // Suffix sums over components below ℓ.
  Eigen::VectorXd l_below(n), u_below(n), a_below(n);
  double ls = 0.0, us = 0.0, as = 0.0;
  for (Index i = 0; i < n; ++i) {
    l_below(i) = ls;
    u_below(i) = us;
    a_below(i) = as;
    ls += l(i);
    us += u(i);
    as += alpha(i);
  }
  Eigen::VectorXd x(n);
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    double rem = 1.0;
    bool ok = true;
    for (Index i = n - 1; i >= 1; --i) {
      if (rem <= 0.0) {
        x(i) = 0.0;
        continue;
      }
      const double lo = clamp01(std::max(l(i), rem - u_below(i)) / rem);
      const double hi = clamp01(std::min(u(i), rem - l_below(i)) / rem);
      double frac;
      if (lo > hi + kBoundSlack) {
        ok = false;
        break;
      }
      if (hi - lo <= 1e-14) {
        frac = lo;
      } else {
        const double w = uniform01(rng);
        try {
          frac = truncated_beta_sample(alpha(i), a_below(i), lo, hi, w);
        } catch (const NumericalError&) {
          // The interval sits in a tail with negligible Beta mass; the
          // conditional is then effectively flat across it.
          frac = lo + w * (hi - lo);
        }
      }
      x(i) = frac * rem;
      rem -= x(i);
    }
    if (!ok) continue;
    x(0) = std::max(0.0, rem);
    return x;
  }
  throw NumericalError("truncated Dirichlet: could not draw a feasible fiber after " + std::to_string(max_retries) +
                       " retries");
}

CompleteDraw sample_complete(const Tensor3& m_partial, const PopulationTable& pop, double alpha, Rng& rng,
                             double balance_tolerance) {
  if (!(alpha > 0.0)) throw ConfigError("Dirichlet concentration must be positive");
  const Index K = m_partial.slices();
  const Index A = m_partial.ages();
  const Tensor3 z = rebalance_margins(expected_margins(m_partial, pop), balance_tolerance);
  CompleteDraw out{Tensor3(K * K, A), Tensor3(K * K, A)};
  auto& eta = out.eta;

  Eigen::VectorXd rows(K), cols(K), lo(K), hi(K), conc(K);
  for (Index a = 0; a < A; ++a)
    for (Index b = 0; b <= a; ++b) {
      for (Index l = 0; l < K; ++l) conc(l) = alpha * pop(l, b) / pop.total(b);
      if (a != b) {
        // Table rows: source strata at (a,b); columns: source strata at (b,a).
        for (Index k = 0; k < K; ++k) {
          rows(k) = z(k, a, b);
          cols(k) = z(k, b, a);
        }
        double rest = rows.sum();
        for (Index k = 0; k + 1 < K; ++k) {
          rest -= rows(k);
          for (Index l = 0; l < K; ++l) {
            lo(l) = clamp01(std::max(0.0, cols(l) - rest) / rows(k));
            hi(l) = clamp01(std::min(rows(k), cols(l)) / rows(k));
          }
          const Eigen::VectorXd x = truncated_dirichlet_sample(conc, lo, hi, rng);
          for (Index l = 0; l < K; ++l) {
            eta(k * K + l, a, b) = x(l);
            cols(l) = std::max(0.0, cols(l) - x(l) * rows(k));
          }
        }
        const Index last = K - 1;
        const double col_total = cols.sum();
        for (Index l = 0; l < K; ++l) eta(last * K + l, a, b) = col_total > 0.0 ? cols(l) / col_total : 0.0;
        // Reciprocity fill: η^{ℓ,k}_{b,a} = Z^k_{a,b} η^{k,ℓ}_{a,b} / Z^ℓ_{b,a}.
        for (Index k = 0; k < K; ++k)
          for (Index l = 0; l < K; ++l) eta(l * K + k, b, a) = z(k, a, b) * eta(k * K + l, a, b) / z(l, b, a);
      } else {
        // Symmetric table at a = b.
        Eigen::VectorXd rem(K);
        for (Index k = 0; k < K; ++k) rem(k) = z(k, a, a);
        RowMatrix table = RowMatrix::Zero(K, K);
        for (Index k = 0; k < K; ++k) {
          const Index n = K - k;
          if (n == 1 || rem(k) <= 0.0) {
            table(k, k) = std::max(0.0, rem(k));
            rem(k) = 0.0;
            continue;
          }
          Eigen::VectorXd c(n), l(n), u(n);
          double others = 0.0;
          for (Index j = k + 1; j < K; ++j) others += rem(j);
          for (Index j = 0; j < n; ++j) c(j) = conc(k + j);
          l(0) = clamp01(std::max(0.0, rem(k) - others) / rem(k));
          u(0) = 1.0;
          for (Index j = 1; j < n; ++j) {
            l(j) = 0.0;
            u(j) = clamp01(std::min(rem(k), rem(k + j)) / rem(k));
          }
          const Eigen::VectorXd x = truncated_dirichlet_sample(c, l, u, rng);
          table(k, k) = x(0) * rem(k);
          for (Index j = 1; j < n; ++j) {
            const double v = x(j) * rem(k);
            table(k, k + j) = v;
            table(k + j, k) = v;
            rem(k + j) = std::max(0.0, rem(k + j) - v);
          }
          rem(k) = 0.0;
        }
        for (Index k = 0; k < K; ++k) {
          const double total = table.row(k).sum();
          for (Index l = 0; l < K; ++l) eta(k * K + l, a, a) = table(k, l) / total;
        }
      }
    }

  // Every fraction, sampled or derived, must lie inside its own sharp bounds.
  const MixingBounds mb = mixing_bounds(z, 1e-9);
  for (Index i = 0; i < eta.size(); ++i) {
    const double v = eta.values()[static_cast<std::size_t>(i)];
    if (v < mb.lower.values()[static_cast<std::size_t>(i)] - 1e-8 ||
        v > mb.upper.values()[static_cast<std::size_t>(i)] + 1e-8)
      throw NumericalError("predicted attributable fraction escaped its mixing bounds");
  }
  for (Index k = 0; k < K; ++k)
    for (Index l = 0; l < K; ++l)
      for (Index a = 0; a < A; ++a)
        for (Index b = 0; b < A; ++b) out.m(k * K + l, a, b) = m_partial(k, a, b) * eta(k * K + l, a, b);
  return out;
}

CompletePrediction::CompletePrediction(PosteriorSamples samples, PopulationTable pop, double alpha,
                                       std::uint64_t seed)
    : samples_(std::move(samples)), pop_(std::move(pop)), alpha_(alpha), seed_(seed) {
  if (samples_.model().spec().mode != Mode::Partial)
    throw DataError("prediction of complete intensities needs a partial-data fit");
  if (!(alpha > 0.0)) throw ConfigError("Dirichlet concentration must be positive");
}

CompleteDraw CompletePrediction::draw(Index i) const {
  const ContactMatrixSet cs = samples_.contact_set(i);
  Rng rng = make_rng(seed_, static_cast<std::uint64_t>(i), kPurposePredict);
  return sample_complete(cs.m, pop_, alpha_, rng);
}

CompletePrediction predict_complete(const PosteriorSamples& samples, const PopulationTable& pop, double alpha,
                                    std::uint64_t seed) {
  return CompletePrediction(samples, pop, alpha, seed);
}

NgmResult ngm_r0(const Tensor3& m_complete, const Tensor3& beta, const Eigen::MatrixXd& durations,
                 const Eigen::MatrixXd& susceptible, const PopulationTable& pop, double tolerance,
                 Index max_iterations) {
  const Index K = pop.strata();
  const Index A = pop.ages();
  if (m_complete.slices() != K * K || m_complete.ages() != A || !beta.same_shape(m_complete))
    throw DataError("ngm_r0: intensity and transmissibility tensors must be K²×A×A");
  if (durations.rows() != K || durations.cols() != A || susceptible.rows() != K || susceptible.cols() != A)
    throw DataError("ngm_r0: durations and susceptibles must be K×A");
  for (Index k = 0; k < K; ++k)
    for (Index a = 0; a < A; ++a) {
      if (susceptible(k, a) < 0.0 || susceptible(k, a) > pop(k, a) * (1.0 + 1e-12))
        throw DataError("ngm_r0: susceptibles must lie between 0 and the population");
      if (!(pop(k, a) > 0.0)) throw DataError("ngm_r0: stratum populations must be positive");
    }
  NgmResult res;
  res.ngm.resize(K * A, K * A);
  for (Index k = 0; k < K; ++k)
    for (Index l = 0; l < K; ++l)
      for (Index a = 0; a < A; ++a)
        for (Index b = 0; b < A; ++b)
          res.ngm(l * A + b, k * A + a) = beta(k * K + l, a, b) * m_complete(k * K + l, a, b) * durations(k, a) *
                                           susceptible(l, b) / pop(l, b);
  if ((res.ngm.array() < 0.0).any()) throw DataError("ngm_r0: next-generation matrix has negative entries");
  Eigen::VectorXd v = Eigen::VectorXd::Constant(K * A, 1.0 / static_cast<double>(K * A));
  double lambda = 0.0;
  for (Index it = 1; it <= max_iterations; ++it) {
    Eigen::VectorXd w = res.ngm * v;
    const double total = w.sum();
    if (total <= 0.0) {
      res.r0 = 0.0;
      res.iterations = it;
      return res;
    }
    const double next = total / v.sum();
    v = w / total;
    if (std::abs(next - lambda) <= tolerance * next) {
      res.r0 = next;
      res.iterations = it;
      return res;
    }
    lambda = next;
  }
  throw NumericalError("power iteration for R0 did not converge in " + std::to_string(max_iterations) + " iterations");
}

}  // namespace gmix
