#pragma once

// Hierarchical-Bayes EM for the shared residual model.
//
// Generative structure: (mu_alpha, C_alpha) ~ NIW(lambda, nu, kappa^{-1}),
// alpha_l ~ N(mu_alpha, C_alpha), eta_l = kappa_l alpha_l + noise_l.
//
// run_em iterates in the field view f_l = kappa alpha_l (values of the
// residual field on the pooled design). The map is linear and invertible, so
// the iterates are the same as in the coefficient view, but no kappa^{-1}
// appears inside the loop: the M-step scale matrix becomes kappa itself.

#include "hmtmf/kernels.hpp"
#include "hmtmf/noise.hpp"
#include "hmtmf/types.hpp"

#include <functional>
#include <optional>

namespace hmtmf {

enum class EMCriterion { mu_alpha_delta, per_task_alpha_delta };

struct EMConfig {
  double t1 = 1e-6;  // relative to |mu_alpha| + 1
  double t2 = 1e-6;  // relative to |alpha_hat_l| + 1
  int k1_max = 200;
  EMCriterion criterion = EMCriterion::mu_alpha_delta;
  double noise_floor = 0.0;  // absolute; 0 selects 1e-12 x residual variance

  void validate() const;
};

EMConfig em_config(const HyperParams& hyper, EMCriterion criterion = EMCriterion::mu_alpha_delta);

struct EMIteration {
  int index = 0;
  double objective = 0.0;
  double delta_mu_alpha = 0.0;
  double max_delta_alpha = 0.0;
};

struct EMTrace {
  std::vector<EMIteration> iterations;
  bool converged = false;
};

/// Posterior moments of one task's latent vector.
struct TaskPosterior {
  Vector mean;
  Matrix cov;
};

/// E-step in the coefficient view:
///   C_alpha_l = (kappa_l^T S^{-1} kappa_l + C_alpha^{-1})^{-1}
///   alpha_hat = C_alpha_l (kappa_l^T S^{-1} eta_l + C_alpha^{-1} mu_alpha)
TaskPosterior e_step(const Matrix& kappa_l, const NoiseMatrix& noise_l, const Vector& eta_l, const Vector& mu_alpha,
                     const Matrix& C_alpha);

/// E-step in the field view, observing rows `rows` of f ~ N(mean, cov).
/// Uses the gain form, so zero noise entries are admissible.
TaskPosterior field_e_step(std::span<const Index> rows, const NoiseMatrix& noise_l, const Vector& eta_l,
                           const Vector& mean, const Matrix& cov);

struct SharedMoments {
  Vector mean;
  Matrix cov;
};

/// M-step:
///   mean = sum(means) / (lambda + m)
///   cov  = [lambda mean mean^T + nu scale + sum covs + sum (mu_l - mean)(mu_l - mean)^T] / (nu + m)
/// `scale` is kappa^{-1} in the coefficient view and kappa in the field view.
SharedMoments m_step(std::span<const Vector> means, std::span<const Matrix> covs, const Matrix& scale, double lambda,
                     double nu);

/// Expected complete-data log likelihood plus log hyperprior plus the
/// entropy of the task posteriors, in the coefficient view.
///
/// The hyperprior enters as -(nu/2)(ln|C| + tr(kappa^{-1} C^{-1})) - (lambda/2) mu^T C^{-1} mu,
/// whose joint maximizer with the expected log likelihood is exactly the
/// closed-form M-step. The posterior entropy term does not depend on
/// (mu_alpha, C_alpha); including it makes the value a free energy that EM
/// never decreases. Dropped constants: the 2*pi terms, ln(sigma_i^2) terms and
/// the Gaussian entropy constant.
double penalized_objective(const ModelState& state, const Matrix& kappa, std::span<const Matrix> kappa_l,
                           std::span<const NoiseMatrix> noise, std::span<const Vector> eta, double lambda, double nu);

/// Same quantity in the field view. Equals penalized_objective minus nu*ln|kappa|.
double field_objective(const ModelState& state, const Matrix& kappa, const PooledDesign& pooled,
                       std::span<const NoiseMatrix> noise, std::span<const Vector> eta, double lambda, double nu);

/// mu_alpha = 0, C_alpha = kappa^{-1}; in the field view mean 0, cov kappa.
ModelState initial_state(const BaseKernel& base, Index tasks);

/// Fills the coefficient view from the field view.
void derive_coefficients(ModelState& state, const BaseKernel& base);

/// Fills the field view from the coefficient view.
void derive_field(ModelState& state, const Matrix& kappa);

using EMObserver = std::function<void(const EMIteration&, const ModelState&)>;

struct EMResult {
  ModelState state;
  EMTrace trace;
};

/// Runs EM on trend-free residuals. When an observer is supplied the
/// coefficient view is derived at every iteration before it is called.
EMResult run_em(const BaseKernel& base, const PooledDesign& pooled, std::span<const Vector> residuals,
                std::span<const NoiseMatrix> noise, const HyperParams& hyper, const EMConfig& config,
                const ModelState* warm_start = nullptr, const EMObserver& observer = {});

/// Builds the base kernel from the pooled design first.
EMResult run_em(const PooledDesign& pooled, std::span<const Vector> residuals, std::span<const NoiseMatrix> noise,
                const KernelConfig& kernel, const HyperParams& hyper, const EMConfig& config,
                const ModelState* warm_start = nullptr);

/// Rows of kappa selected by a task's index map (kappa_l in the E-step).
Matrix task_kernel_rows(const Matrix& kappa, std::span<const Index> rows);

}  // namespace hmtmf
