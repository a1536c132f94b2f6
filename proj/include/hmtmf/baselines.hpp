#pragma once

// Comparison methods: single-task stochastic kriging and a multi-task model
// with one shared homoscedastic noise level.

#include "hmtmf/kernels.hpp"
#include "hmtmf/noise.hpp"
#include "hmtmf/optim.hpp"
#include "hmtmf/predictor.hpp"
#include "hmtmf/trend.hpp"

namespace hmtmf {

struct SKOptions {
  int restarts = 3;
  double relative_jitter = 1e-10;
  double max_delta_factor = 2.0;   // upper bound on delta_sq in units of squared design diameter
  double min_delta_factor = 1e-4;  // lower bound, same units
  NelderMeadOptions optimizer{0.5, 1e-10, 1e-6, 600};
};

/// Fitted stochastic kriging model of one task: Z_bar = U beta + M + eps with
/// cov(M) = tau_sq * k_delta and diagonal intrinsic noise.
struct SKModel {
  int task_id = 0;
  Matrix design;
  Vector means;
  Matrix basis;
  Vector noise;
  KernelConfig kernel;
  double tau_sq = 1.0;
  Vector beta;
  double log_likelihood = 0.0;
  bool converged = false;  // false: best iterate returned after the evaluation budget ran out
  Box domain;

  // Cached for prediction.
  SpdFactor factor;
  Vector weights;                 // Sigma^{-1} (Z_bar - U beta)
  Eigen::LLT<Matrix> trend_info;  // U^T Sigma^{-1} U
};

/// Profiled negative log likelihood of (tau_sq, delta_sq) with beta by GLS.
/// Writes the GLS coefficients to `beta` when non-null.
double sk_negative_log_likelihood(const Matrix& X, const Vector& z, const Matrix& U, const Vector& noise, double tau_sq,
                                  double delta_sq, double relative_jitter = 1e-10, Vector* beta = nullptr);

/// Generalized least squares coefficients for covariance Sigma.
Vector gls_beta(const Matrix& U, const Vector& z, const Matrix& Sigma);

SKModel sk_fit(const TaskDataset& task, const NoiseMatrix& noise, const SKOptions& options = {});

/// Fits with fixed hyperparameters, skipping the likelihood search.
SKModel sk_fit_fixed(const TaskDataset& task, const NoiseMatrix& noise, double tau_sq, double delta_sq,
                     double relative_jitter = 1e-10);

Prediction sk_predict(const SKModel& model, const Matrix& x_u, const Matrix& basis_u);

struct HomoscedasticFit {
  FitResult fit;
  double sigma_sq = 0.0;
  std::vector<double> sigma_sq_trace;  // estimate at each outer iteration
};

/// Maximizer of the Gaussian marginal likelihood of r ~ N(0, K + s I) over s in [lo, hi].
double estimate_shared_noise(const Matrix& K, const Vector& r, double lo, double hi);

/// Same pipeline as the heteroscedastic model with every task noise matrix
/// replaced by sigma_sq * I; sigma_sq is re-estimated at each outer iteration.
HomoscedasticFit homoscedastic_mtl_fit(std::span<const TaskDataset> tasks, const PooledDesign& pooled,
                                       const KernelConfig& kernel, const HyperParams& hyper, const EMConfig& em,
                                       const TrendConfig& trend);

}  // namespace hmtmf
