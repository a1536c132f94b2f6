#pragma once

#include "hmtmf/em.hpp"
#include "hmtmf/kernels.hpp"
#include "hmtmf/noise.hpp"
#include "hmtmf/types.hpp"

#include <functional>
#include <string>

namespace hmtmf {

enum class Regression { ols, huber_irls };

struct TrendConfig {
  Regression regression = Regression::ols;
  double huber_c = 1.345;
  double t3 = 1e-4;  // per task, relative to |beta_l| + 1
  double t4 = 1e-4;  // task average, relative to mean |beta_l| + 1
  int k2_max = 5;
  bool warm_start = true;
  int irls_max_iter = 100;

  void validate() const;
};

TrendConfig trend_config(const HyperParams& hyper, Regression regression = Regression::ols);

/// Least-squares (or Huber M-estimate) coefficients of y on the columns of U.
Vector fit_trend(const Matrix& U, const Vector& y, const TrendConfig& cfg);

/// Everything needed to predict from a fitted multi-task model.
struct FittedModel {
  PooledDesign pooled;
  KernelConfig kernel;
  HyperParams hyper;
  ModelState state;
  std::vector<int> task_ids;
  std::vector<Matrix> task_basis;  // U_l at the task design rows
  std::vector<Vector> sample_means;
  std::vector<Box> domains;

  Index tasks() const { return static_cast<Index>(task_ids.size()); }
  std::size_t position(int task_id) const;
};

enum class StopReason { per_task_beta, mean_beta, iteration_cap };
const char* to_string(StopReason reason) noexcept;

struct OuterIteration {
  int index = 0;
  double mean_delta_beta = 0.0;
  double max_delta_beta = 0.0;
  int em_iterations = 0;
  bool em_converged = false;
};

struct OuterTrace {
  std::vector<OuterIteration> iterations;
  std::vector<EMTrace> em;
  StopReason stop = StopReason::iteration_cap;
};

struct FitResult {
  FittedModel model;
  OuterTrace trace;
};

/// Produces the noise matrices for the next EM pass from the current
/// residuals and state. The heteroscedastic model returns fixed matrices.
using NoiseUpdate =
    std::function<std::vector<NoiseMatrix>(std::span<const Vector> residuals, const ModelState& state, int outer)>;

/// Alternates trend fits on Z_bar - eta_hat with EM on Z_bar - U beta.
FitResult iterate_model(std::span<const TaskDataset> tasks, const PooledDesign& pooled,
                        std::span<const NoiseMatrix> noise, const KernelConfig& kernel, const HyperParams& hyper,
                        const EMConfig& em, const TrendConfig& trend);

/// Generic form: noise comes from `update` at the start of every outer iteration.
FitResult iterate_model(std::span<const TaskDataset> tasks, const PooledDesign& pooled, const NoiseUpdate& update,
                        const KernelConfig& kernel, const HyperParams& hyper, const EMConfig& em,
                        const TrendConfig& trend);

/// Sample variance of all task sample means pooled together (0 when fewer than two).
double response_variance(std::span<const TaskDataset> tasks);

/// 1e-12 times response_variance (1e-12 if constant).
double response_noise_floor(std::span<const TaskDataset> tasks);

}  // namespace hmtmf
