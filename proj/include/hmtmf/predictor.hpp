#pragma once

#include "hmtmf/kernels.hpp"
#include "hmtmf/trend.hpp"

#include <optional>

namespace hmtmf {

/// Per-query breakdown of a prediction.
struct PredictionComponents {
  Vector trend;         // U_l(x_u)^T beta_l
  Vector residual;      // kernel-weighted shared residual term
  Vector var_residual;  // uncertainty carried by the pooled residual field
  Vector var_trend;     // uncertainty from estimating beta_l
};

struct Prediction {
  int task_id = 0;
  Matrix locations;
  Vector mean;
  Vector variance;
  std::optional<PredictionComponents> components;
  Index extrapolated = 0;  // queries outside the task domain
};

/// Prediction engine for one fitted model. Holds the base kernel factor and
/// the composite covariance so repeated queries avoid refactorizing.
/// The model must outlive the predictor.
class Predictor {
 public:
  explicit Predictor(const FittedModel& model);
  /// Explicit blend weights for the composite covariance.
  Predictor(const FittedModel& model, double m, double nu);
  Predictor(const Predictor&) = delete;
  Predictor& operator=(const Predictor&) = delete;

  Vector mean(int task_id, const Matrix& x_u, const Matrix& basis_u) const;
  Vector variance(int task_id, const Matrix& x_u, const Matrix& basis_u,
                  PredictionComponents* components = nullptr) const;
  Prediction predict(int task_id, const Matrix& x_u, const Matrix& basis_u, bool with_components = false) const;

  const BaseKernel& base() const { return base_; }
  const CompositeCovariance& composite() const { return *composite_; }

 private:
  void check_query(std::size_t task, const Matrix& x_u, const Matrix& basis_u) const;

  const FittedModel* model_;
  BaseKernel base_;
  std::optional<CompositeCovariance> composite_;
  std::vector<Index> stacked_rows_;  // pooled row of every task observation, tasks concatenated
  SpdFactor stacked_;                // composite over the stacked design plus block-diagonal noise
  std::vector<SpdFactor> per_task_;  // composite over X_l plus the task noise
  std::vector<Eigen::LLT<Matrix>> trend_info_;  // U_l^T Sigma_l^{-1} U_l
};

Vector predict_mean(const FittedModel& model, int task_id, const Matrix& x_u, const Matrix& basis_u);
Vector predict_variance(const FittedModel& model, int task_id, const Matrix& x_u, const Matrix& basis_u);
Prediction predict(const FittedModel& model, int task_id, const Matrix& x_u, const Matrix& basis_u,
                   bool with_components = false);

}  // namespace hmtmf
