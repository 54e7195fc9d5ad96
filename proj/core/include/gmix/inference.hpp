#pragma once

#include "gmix/error.hpp"
#include "gmix/model.hpp"
#include "gmix/random.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace gmix {

enum class FitMethod { Svi, Map };

const char* to_string(FitMethod method);
FitMethod fit_method_from_string(const std::string& name);

struct FitConfig {
  Index iterations = 20000;
  Index mc_samples = 1;
  double max_lr = 0.01;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  std::uint64_t seed = 1;
  Index posterior_draws = 3000;
  FitMethod method = FitMethod::Svi;
  double init_sigma = 0.05;
  Index max_consecutive_failures = 10;

  void validate() const;
};

/// Mean-field Gaussian q(θ) = N(mu, diag(exp(log_sigma))²). A point-mass
/// state (MAP fits) has no spread and every draw equals mu.
struct VariationalState {
  Eigen::VectorXd mu;
  Eigen::VectorXd log_sigma;
  Index step = 0;
  bool point_mass = false;
  std::vector<double> trace;  // ELBO (or log joint for MAP) per iteration
};

/// Log density with gradient; the gradient argument is resized by the callee.
using LogDensity = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Thrown when the objective stays non-finite for too many consecutive steps.
class FitDivergence : public NumericalError {
 public:
  FitDivergence(const std::string& what, std::vector<double> trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

/// Reparameterised ELBO estimate with gradients w.r.t. mu and log_sigma,
/// averaged over `mc_samples` draws of ε.
double elbo_and_grad(const VariationalState& state, const LogDensity& log_density, Rng& rng, Index mc_samples,
                     Eigen::VectorXd& grad_mu, Eigen::VectorXd& grad_log_sigma);

/// Differential entropy of the mean-field Gaussian: Σ(log σ + ½ log 2πe).
double gaussian_entropy(const Eigen::VectorXd& log_sigma);

/// Cosine warm-up from max_lr/div_factor to max_lr at pct_start of the run,
/// then cosine decay to max_lr/div_factor/final_div_factor.
double one_cycle_lr(Index step, Index total, double max_lr, double pct_start = 0.3, double div_factor = 25.0,
                    double final_div_factor = 1e4);

/// Adam ascent on the ELBO (SVI) or the log joint (MAP).
VariationalState fit(const LogDensity& log_density, const Eigen::VectorXd& init, const FitConfig& cfg);
VariationalState fit(const Model& model, const FitConfig& cfg);

/// Posterior draws in θ-space tied to the model that maps them to contact matrices.
class PosteriorSamples {
 public:
  PosteriorSamples(std::shared_ptr<const Model> model, Eigen::MatrixXd draws);

  Index size() const { return draws_.rows(); }
  const Model& model() const { return *model_; }
  std::shared_ptr<const Model> model_ptr() const { return model_; }
  const Eigen::MatrixXd& draws() const { return draws_; }
  Eigen::VectorXd theta(Index i) const { return draws_.row(i).transpose(); }
  ContactMatrixSet contact_set(Index i) const { return model_->evaluate(theta(i)); }

 private:
  std::shared_ptr<const Model> model_;
  Eigen::MatrixXd draws_;  // draws × dim
};

/// θ ~ q, one counter-based RNG substream per draw.
PosteriorSamples sample_posterior(const VariationalState& state, std::shared_ptr<const Model> model, Index draws,
                                  std::uint64_t seed);

struct Summary {
  Tensor3 mean;
  Tensor3 lower;
  Tensor3 upper;
};

/// Empirical quantile with linear interpolation between order statistics; sorts `values`.
double quantile(std::vector<double>& values, double p);

/// Cellwise mean and central `level` interval over draws produced by `draw_fn`.
/// Draws are regenerated per block of cells when storing all of them at once
/// would exceed `budget_bytes`, so `draw_fn` must be deterministic.
Summary summarize_draws(Index draws, const std::function<Tensor3(Index)>& draw_fn, double level = 0.95,
                        std::size_t budget_bytes = std::size_t{512} << 20);

/// Summary of one named quantity of a posterior: "gamma", "delta", "m" or "phi".
/// gamma comes back as a single slice and phi as a 1×1×1 tensor.
Summary summarize(const PosteriorSamples& samples, const std::string& quantity, double level = 0.95);

}  // namespace gmix
