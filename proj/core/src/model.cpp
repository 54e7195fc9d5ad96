#include "gmix/model.hpp"

#include "gmix/error.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace gmix {

namespace {

constexpr Index kSmallCount = 64;

// log Γ(y+φ) − log Γ(φ) and its φ-derivative ψ(y+φ) − ψ(φ).
// For small integer y the ratio is a finite product, which is both faster and
// more accurate than differencing two large lgamma values.
void lgamma_ratio(double y, double phi, double& value, double& deriv) {
  if (y < kSmallCount) {
    value = 0.0;
    deriv = 0.0;
    const auto n = static_cast<int>(y);
    for (int j = 0; j < n; ++j) {
      value += std::log(phi + j);
      deriv += 1.0 / (phi + j);
    }
    return;
  }
  value = std::lgamma(y + phi) - std::lgamma(phi);
  deriv = boost::math::digamma(y + phi) - boost::math::digamma(phi);
}

}  // namespace

double beta0_center(const PopulationTable& pop, Mode mode) {
  const Index K = pop.strata();
  const Index A = pop.ages();
  double acc = 0.0;
  if (mode == Mode::Complete) {
    // −(A²K²)⁻¹ Σ_{k,ℓ,a,b} log P^ℓ_b; the sum over (k,a) is a plain replication.
    for (Index l = 0; l < K; ++l)
      for (Index b = 0; b < A; ++b) {
        if (!(pop(l, b) > 0.0)) throw DataError("beta0_center: population must be positive");
        acc += std::log(pop(l, b));
      }
    return -acc / static_cast<double>(A * K);
  }
  for (Index b = 0; b < A; ++b) acc += std::log(pop.total(b));
  return -acc / static_cast<double>(A);
}

double nb_logpmf(double y, double mu, double phi) {
  if (!(mu > 0.0) || !(phi > 0.0) || !(y >= 0.0) || y != std::floor(y))
    throw DataError("nb_logpmf: need mu > 0, phi > 0 and a nonnegative integer y");
  double ratio = 0.0, unused = 0.0;
  lgamma_ratio(y, phi, ratio, unused);
  const double log_total = std::log(phi + mu);
  return ratio - std::lgamma(y + 1.0) + phi * (std::log(phi) - log_total) + y * (std::log(mu) - log_total);
}

std::string ParameterLayout::name(Index i) const {
  auto coef = [](Index off, Index m) { return "[" + std::to_string(off / m) + "," + std::to_string(off % m) + "]"; };
  if (i == beta0) return "beta0";
  if (i >= xi_gamma && i < xi_gamma + m_gamma * m_gamma) return "xi_gamma" + coef(i - xi_gamma, m_gamma);
  if (i == log_tau_gamma) return "log_tau_gamma";
  if (i == log_phi) return "log_phi";
  for (const auto& fb : features) {
    const Index per = m_omega * m_omega;
    if (i >= fb.xi && i < fb.xi + fb.slices * per) {
      const Index off = i - fb.xi;
      return "xi_omega[" + std::to_string(fb.feature) + "][" + std::to_string(off / per) + "]" + coef(off % per, m_omega);
    }
    if (i == fb.log_tau) return "log_tau_omega[" + std::to_string(fb.feature) + "]";
  }
  return "theta[" + std::to_string(i) + "]";
}

Model::Model(ModelSpec spec, SurveyTensor data, PopulationTable pop)
    : spec_(std::move(spec)), data_(std::move(data)), pop_(std::move(pop)) {
  K_ = spec_.space.size();
  A_ = spec_.grid.size();
  if (data_.mode != spec_.mode)
    throw DataError(std::string("survey data is ") + to_string(data_.mode) + " but the model is " +
                    to_string(spec_.mode));
  if (data_.strata != K_ || data_.ages() != A_)
    throw DataError("survey data dimensions do not match the strata space and age grid");
  if (pop_.strata() != K_ || pop_.ages() != A_)
    throw DataError("population table dimensions do not match the strata space and age grid");
  if (!spec_.active_features.empty() &&
      static_cast<Index>(spec_.active_features.size()) != spec_.space.feature_count())
    throw ConfigError("active_features must list every feature");
  data_.validate();

  s_ = proportion_tensor(pop_, spec_.mode);
  w_ = clr_inverse_center(s_);
  beta0_bar_ = spec_.beta0_center ? *spec_.beta0_center : beta0_center(pop_, spec_.mode);
  basis_gamma_ = bspline_basis(spec_.grid, spec_.m_gamma);
  basis_omega_ = bspline_basis(spec_.grid, spec_.m_omega);
  q_gamma_ = penalty_operator(spec_.m_gamma, spec_.m_gamma);
  q_omega_ = penalty_operator(spec_.m_omega, spec_.m_omega);

  log_pop_ = pop_.counts().array().log().matrix();
  log_total_ = pop_.totals().array().log().matrix();

  const Index mg2 = spec_.m_gamma * spec_.m_gamma;
  const Index mo2 = spec_.m_omega * spec_.m_omega;
  layout_.m_gamma = spec_.m_gamma;
  layout_.m_omega = spec_.m_omega;
  layout_.beta0 = 0;
  layout_.xi_gamma = 1;
  layout_.log_tau_gamma = 1 + mg2;
  Index next = layout_.log_tau_gamma + 1;
  const Index n_slices = data_.y.slices();
  for (Index j = 0; j < spec_.space.feature_count(); ++j) {
    if (!spec_.feature_active(j)) continue;
    ParameterLayout::FeatureBlock fb;
    fb.feature = j;
    fb.K = spec_.space.categories(j);
    if (spec_.mode == Mode::Complete) {
      fb.within = fb.K;
      fb.slices = fb.K + fb.K * (fb.K - 1) / 2;
    } else {
      fb.within = 0;
      fb.slices = fb.K;
    }
    fb.xi = next;
    next += fb.slices * mo2;
    fb.log_tau = next++;
    layout_.features.push_back(fb);

    std::vector<Index> map(static_cast<std::size_t>(n_slices));
    for (Index i = 0; i < n_slices; ++i) {
      if (spec_.mode == Mode::Complete) {
        const Index s = i / K_, t = i % K_;
        map[static_cast<std::size_t>(i)] = spec_.space.category(s, j) * fb.K + spec_.space.category(t, j);
      } else {
        map[static_cast<std::size_t>(i)] = spec_.space.category(i, j);
      }
    }
    component_slice_.push_back(std::move(map));
  }
  layout_.log_phi = next++;
  layout_.size = next;

  set_cell_mask(std::vector<std::uint8_t>(static_cast<std::size_t>(data_.y.size()), 1));
}

void Model::set_cell_mask(std::vector<std::uint8_t> mask) {
  if (static_cast<Index>(mask.size()) != data_.y.size()) throw DataError("cell mask has the wrong size");
  mask_ = std::move(mask);
  log_factorial_sum_ = 0.0;
  for (Index i = 0; i < data_.y.slices(); ++i)
    for (Index a = 0; a < A_; ++a)
      for (Index b = 0; b < A_; ++b)
        if (cell_included(i, a, b)) log_factorial_sum_ += std::lgamma(data_.y(i, a, b) + 1.0);
}

bool Model::cell_included(Index i, Index a, Index b) const {
  return data_.n(data_.source_stratum(i), a) > 0.0 && mask_[static_cast<std::size_t>((i * A_ + a) * A_ + b)] != 0;
}

double Model::log_target_pop(Index i, Index b) const {
  return spec_.mode == Mode::Complete ? log_pop_(i % K_, b) : log_total_(b);
}

Eigen::VectorXd Model::initial_params() const {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim());
  double y_total = 0.0, exposure = 0.0;
  for (Index i = 0; i < data_.y.slices(); ++i)
    for (Index a = 0; a < A_; ++a)
      for (Index b = 0; b < A_; ++b)
        if (cell_included(i, a, b)) {
          y_total += data_.y(i, a, b);
          exposure += data_.n(data_.source_stratum(i), a) * std::exp(log_target_pop(i, b) + data_.offset(i, a, b));
        }
  theta(layout_.beta0) = (y_total > 0.0 && exposure > 0.0) ? std::log(y_total / exposure) : beta0_bar_;
  const double log_tau0 = std::log(spec_.priors.tau_shape / spec_.priors.tau_rate);
  theta(layout_.log_tau_gamma) = log_tau0;
  for (const auto& fb : layout_.features) theta(fb.log_tau) = log_tau0;
  theta(layout_.log_phi) = 0.0;
  return theta;
}

Model::Forward Model::forward(const Eigen::VectorXd& theta) const {
  if (theta.size() != dim()) throw DataError("parameter vector has the wrong length");
  Forward fw;
  const Index mg = spec_.m_gamma;
  const Index mo = spec_.m_omega;
  const ConstRowMap xi_gamma(theta.data() + layout_.xi_gamma, mg, mg);
  fw.log_gamma = symmetric_surface(basis_gamma_, xi_gamma);
  fw.log_gamma.array() += theta(layout_.beta0);

  fw.omega = w_;
  const Index n = w_.slices();
  const Index stride = A_ * A_;
  for (std::size_t f = 0; f < layout_.features.size(); ++f) {
    const auto& fb = layout_.features[f];
    Tensor3 comp;
    if (spec_.mode == Mode::Complete) {
      ConstrainedTensor ct;
      ct.K = fb.K;
      ct.A = A_;
      for (Index k = 0; k < fb.K; ++k) {
        const ConstRowMap xi(theta.data() + fb.xi + k * mo * mo, mo, mo);
        ct.free_within.push_back(symmetric_surface(basis_omega_, xi));
      }
      for (Index p = 0; p < fb.slices - fb.within; ++p) {
        const ConstRowMap xi(theta.data() + fb.xi + (fb.within + p) * mo * mo, mo, mo);
        ct.free_between.push_back(basis_omega_.B * xi * basis_omega_.B.transpose());
      }
      comp = materialize(ct);
    } else {
      comp = Tensor3(fb.K, A_);
      for (Index k = 0; k < fb.K; ++k) {
        const ConstRowMap xi(theta.data() + fb.xi + k * mo * mo, mo, mo);
        comp.slice(k) = basis_omega_.B * xi * basis_omega_.B.transpose();
      }
    }
    const auto& map = component_slice_[f];
    for (Index i = 0; i < n; ++i) {
      double* dst = fw.omega.values().data() + i * stride;
      const double* src = comp.values().data() + map[static_cast<std::size_t>(i)] * stride;
      for (Index c = 0; c < stride; ++c) dst[c] += src[c];
    }
    fw.components.push_back(std::move(comp));
  }

  fw.h = Tensor3(n, A_);
  for (Index a = 0; a < A_; ++a)
    for (Index b = 0; b < A_; ++b) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Index i = 0; i < n; ++i) mx = std::max(mx, fw.omega(i, a, b));
      double total = 0.0;
      for (Index i = 0; i < n; ++i) {
        const double e = std::exp(fw.omega(i, a, b) - mx);
        fw.h(i, a, b) = e;
        total += e;
      }
      for (Index i = 0; i < n; ++i) fw.h(i, a, b) /= total;
    }
  return fw;
}

Tensor3 Model::omega(const Eigen::VectorXd& theta) const { return forward(theta).omega; }

ContactMatrixSet Model::evaluate(const Eigen::VectorXd& theta) const {
  const Forward fw = forward(theta);
  ContactMatrixSet out;
  out.mode = spec_.mode;
  out.gamma = fw.log_gamma.array().exp().matrix();
  const Index n = fw.h.slices();
  out.delta = Tensor3(n, A_);
  out.m = Tensor3(n, A_);
  for (Index i = 0; i < n; ++i)
    for (Index a = 0; a < A_; ++a)
      for (Index b = 0; b < A_; ++b) {
        const double d = fw.h(i, a, b) / s_(i, a, b);
        out.delta(i, a, b) = d;
        out.m(i, a, b) = out.gamma(a, b) * d * std::exp(log_target_pop(i, b));
      }
  out.phi = std::exp(theta(layout_.log_phi));
  return out;
}

Tensor3 Model::expected_counts(const Eigen::VectorXd& theta) const {
  const Forward fw = forward(theta);
  const Index n = fw.h.slices();
  Tensor3 mu(n, A_);
  for (Index i = 0; i < n; ++i) {
    const Index src = data_.source_stratum(i);
    for (Index a = 0; a < A_; ++a) {
      const double nk = data_.n(src, a);
      if (nk <= 0.0) continue;
      for (Index b = 0; b < A_; ++b)
        mu(i, a, b) = std::exp(fw.log_gamma(a, b) + std::log(fw.h(i, a, b)) - std::log(s_(i, a, b)) +
                               log_target_pop(i, b) + std::log(nk) + data_.offset(i, a, b));
    }
  }
  return mu;
}

double Model::log_prior(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const {
  const auto& pr = spec_.priors;
  double lp = 0.0;

  const double z = (theta(layout_.beta0) - beta0_bar_) / pr.beta0_sd;
  lp += -0.5 * z * z - std::log(pr.beta0_sd * std::sqrt(2.0 * std::numbers::pi));
  if (grad) (*grad)(layout_.beta0) += -z / pr.beta0_sd;

  const double tau_const = pr.tau_shape * std::log(pr.tau_rate) - std::lgamma(pr.tau_shape);
  // Gamma prior on τ expressed on log τ, Jacobian included.
  auto tau_prior = [&](Index idx) {
    const double u = theta(idx);
    const double tau = std::exp(u);
    if (grad) (*grad)(idx) += pr.tau_shape - pr.tau_rate * tau;
    return tau_const + pr.tau_shape * u - pr.tau_rate * tau;
  };
  // IGMRF for one coefficient block with precision exp(theta(tau_idx)).
  auto igmrf_block = [&](Index off, Index m, const PenaltyOperator& q, Index tau_idx) {
    const ConstRowMap xi(theta.data() + off, m, m);
    const double tau = std::exp(theta(tau_idx));
    const double quad = q.quadratic(xi);
    if (grad) {
      RowMap g(grad->data() + off, m, m);
      g -= tau * q.apply(xi);
      (*grad)(tau_idx) += 0.5 * static_cast<double>(q.rank) - 0.5 * tau * quad;
    }
    return 0.5 * static_cast<double>(q.rank) * theta(tau_idx) - 0.5 * tau * quad;
  };

  lp += igmrf_block(layout_.xi_gamma, spec_.m_gamma, q_gamma_, layout_.log_tau_gamma);
  lp += tau_prior(layout_.log_tau_gamma);
  const Index mo2 = spec_.m_omega * spec_.m_omega;
  for (const auto& fb : layout_.features) {
    for (Index k = 0; k < fb.slices; ++k) lp += igmrf_block(fb.xi + k * mo2, spec_.m_omega, q_omega_, fb.log_tau);
    lp += tau_prior(fb.log_tau);
  }

  const double phi = std::exp(theta(layout_.log_phi));
  lp += std::log(pr.phi_rate) - pr.phi_rate * phi + theta(layout_.log_phi);
  if (grad) (*grad)(layout_.log_phi) += 1.0 - pr.phi_rate * phi;
  return lp;
}

double Model::log_joint(const Eigen::VectorXd& theta) const { return evaluate_density(theta, nullptr); }

double Model::log_joint_and_grad(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
  grad = Eigen::VectorXd::Zero(dim());
  return evaluate_density(theta, &grad);
}

double Model::evaluate_density(const Eigen::VectorXd& theta, Eigen::VectorXd* grad_out) const {
  for (Index i = 0; i < theta.size(); ++i)
    if (!std::isfinite(theta(i))) throw NumericalError("non-finite parameter " + layout_.name(i));
  const bool want_grad = grad_out != nullptr;
  const Forward fw = forward(theta);
  const Index n = fw.h.slices();
  const double log_phi = theta(layout_.log_phi);
  const double phi = std::exp(log_phi);

  Tensor3 r(n, A_);
  double loglik = -log_factorial_sum_;
  double dphi = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Index src = data_.source_stratum(i);
    for (Index a = 0; a < A_; ++a) {
      const double nk = data_.n(src, a);
      if (nk <= 0.0) continue;
      const double log_n = std::log(nk);
      for (Index b = 0; b < A_; ++b) {
        if (mask_[static_cast<std::size_t>((i * A_ + a) * A_ + b)] == 0) continue;
        const double eta = fw.log_gamma(a, b) + std::log(fw.h(i, a, b)) - std::log(s_(i, a, b)) +
                           log_target_pop(i, b) + log_n + data_.offset(i, a, b);
        const double mu = std::exp(eta);
        const double y = data_.y(i, a, b);
        const double log_total = std::log(phi + mu);
        double ratio = 0.0, dratio = 0.0;
        lgamma_ratio(y, phi, ratio, dratio);
        loglik += ratio + phi * (log_phi - log_total) + y * (eta - log_total);
        if (want_grad) r(i, a, b) = phi * (y - mu) / (phi + mu);
        dphi += dratio + log_phi - log_total + (mu - y) / (phi + mu);
      }
    }
  }
  if (!std::isfinite(loglik)) throw NumericalError("non-finite negative binomial log likelihood");
  const double lp = log_prior(theta, grad_out);
  if (!std::isfinite(lp)) throw NumericalError("non-finite log prior (check precision and dispersion parameters)");
  if (!want_grad) return loglik + lp;
  Eigen::VectorXd& grad = *grad_out;

  grad(layout_.log_phi) += phi * dphi;

  RowMatrix g_gamma = RowMatrix::Zero(A_, A_);
  for (Index i = 0; i < n; ++i) g_gamma += r.slice(i);
  grad(layout_.beta0) += g_gamma.sum();
  {
    RowMap g(grad.data() + layout_.xi_gamma, spec_.m_gamma, spec_.m_gamma);
    g += symmetric_surface_adjoint(basis_gamma_, g_gamma);
  }

  if (!layout_.features.empty()) {
    // ∂/∂ω_i = r_i − h_i Σ_j r_j on every fiber.
    Tensor3 g_omega(n, A_);
    for (Index i = 0; i < n; ++i)
      for (Index a = 0; a < A_; ++a)
        for (Index b = 0; b < A_; ++b) g_omega(i, a, b) = r(i, a, b) - fw.h(i, a, b) * g_gamma(a, b);

    const Index mo = spec_.m_omega;
    const Index stride = A_ * A_;
    const auto& B = basis_omega_.B;
    for (std::size_t f = 0; f < layout_.features.size(); ++f) {
      const auto& fb = layout_.features[f];
      Tensor3 g_comp(fw.components[f].slices(), A_);
      const auto& map = component_slice_[f];
      for (Index i = 0; i < n; ++i) {
        double* dst = g_comp.values().data() + map[static_cast<std::size_t>(i)] * stride;
        const double* src = g_omega.values().data() + i * stride;
        for (Index c = 0; c < stride; ++c) dst[c] += src[c];
      }
      if (spec_.mode == Mode::Complete) {
        for (Index k = 0; k < fb.K; ++k) {
          RowMap g(grad.data() + fb.xi + k * mo * mo, mo, mo);
          g += symmetric_surface_adjoint(basis_omega_, g_comp.slice(k * fb.K + k));
        }
        for (Index k = 0; k < fb.K; ++k)
          for (Index l = k + 1; l < fb.K; ++l) {
            const Index p = ConstrainedTensor::pair_index(k, l, fb.K);
            RowMap g(grad.data() + fb.xi + (fb.within + p) * mo * mo, mo, mo);
            const RowMatrix g_f = g_comp.slice(k * fb.K + l) + g_comp.slice(l * fb.K + k).transpose();
            g += B.transpose() * g_f * B;
          }
      } else {
        for (Index k = 0; k < fb.K; ++k) {
          RowMap g(grad.data() + fb.xi + k * mo * mo, mo, mo);
          g += B.transpose() * g_comp.slice(k) * B;
        }
      }
    }
  }
  for (Index i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad(i))) throw NumericalError("non-finite gradient for " + layout_.name(i));
  return loglik + lp;
}

}  // namespace gmix
