#include "hmtmf/kernels.hpp"

#include <string>

namespace hmtmf {

void KernelConfig::validate() const {
  if (!(delta_sq > 0.0) || !std::isfinite(delta_sq)) {
    throw Error(ErrorCode::invalid_argument, "kernel delta_sq must be positive");
  }
}

double SpdFactor::log_det() const {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double default_jitter(const Matrix& M, double relative) {
  const double mean_diag = M.rows() ? M.diagonal().mean() : 0.0;
  return relative * (mean_diag > 0.0 ? mean_diag : 1.0);
}

SpdFactor regularize_spd(const Matrix& M, double jitter) {
  if (M.rows() != M.cols()) throw Error(ErrorCode::dimension_mismatch, "regularize_spd needs a square matrix");
  if (!(jitter > 0.0)) throw Error(ErrorCode::invalid_argument, "jitter must be positive");
  constexpr int kRetries = 5;
  SpdFactor out;
  double j = jitter;
  for (int attempt = 0; attempt <= kRetries; ++attempt, j *= 10.0) {
    out.matrix = M;
    out.matrix.diagonal().array() += j;
    out.llt.compute(out.matrix);
    out.jitter = j;
    out.attempts = attempt + 1;
    if (out.llt.info() == Eigen::Success && out.llt.matrixLLT().diagonal().allFinite()) return out;
  }
  throw Error(ErrorCode::kernel_degeneracy, "matrix of size " + std::to_string(M.rows()) +
                                                " is not positive definite after jitter " + std::to_string(j / 10.0));
}

BaseKernel make_base_kernel(const Matrix& pooled_points, const KernelConfig& cfg, double relative_jitter) {
  cfg.validate();
  BaseKernel base;
  base.config = cfg;
  base.points = pooled_points;
  const Matrix K = gram(cfg, pooled_points, pooled_points);
  base.factor = regularize_spd(K, default_jitter(K, relative_jitter));
  return base;
}

double design_tolerance(const Matrix& points) {
  if (points.rows() == 0) return 1e-9;
  const double diag = (points.colwise().maxCoeff() - points.colwise().minCoeff()).norm();
  return 1e-9 * (diag > 0.0 ? diag : 1.0);
}

CompositeCovariance::CompositeCovariance(const BaseKernel& base, const Matrix& field_cov, double m, double nu,
                                         double snap_tol)
    : base_(&base), field_cov_(field_cov), m_(m), nu_(nu), snap_tol_(snap_tol) {
  if (field_cov.rows() != base.points.rows() || field_cov.cols() != base.points.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "field covariance does not match the pooled design");
  }
  if (!(m > 0.0) || !(nu > 0.0)) throw Error(ErrorCode::invalid_argument, "blend weights must be positive");
}

Matrix CompositeCovariance::weights(const Matrix& A) const {
  if (A.cols() != base_->points.cols()) throw Error(ErrorCode::dimension_mismatch, "query dimension");
  Matrix W = base_->factor.solve(gram(base_->config, base_->points, A));
  if (snap_tol_ > 0.0) {
    for (Index j = 0; j < A.rows(); ++j) {
      for (Index i = 0; i < base_->points.rows(); ++i) {
        if ((base_->points.row(i) - A.row(j)).norm() <= snap_tol_) {
          W.col(j).setZero();
          W(i, j) = 1.0;
          break;
        }
      }
    }
  }
  return W;
}

Matrix CompositeCovariance::operator()(const Matrix& A, const Matrix& B) const {
  const Matrix WA = weights(A);
  const Matrix WB = &A == &B ? WA : weights(B);
  Matrix out = (m_ * (WA.transpose() * field_cov_ * WB) + nu_ * gram(base_->config, A, B)) / (m_ + nu_);
  if (&A == &B) out = 0.5 * (out + out.transpose()).eval();
  return out;
}

Vector CompositeCovariance::diagonal(const Matrix& A) const {
  const Matrix W = weights(A);
  const Vector learned = (W.array() * (field_cov_ * W).array()).colwise().sum().transpose();
  // Base kernel is 1 on the diagonal.
  return (m_ * learned.array() + nu_).matrix() / (m_ + nu_);
}

Matrix CompositeCovariance::on_design(std::span<const Index> rows, std::span<const Index> cols) const {
  const Matrix& K = base_->kappa();
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = 0; b < cols.size(); ++b) {
      const Index i = rows[a], j = cols[b];
      // Unjittered kernel value: kappa carries jitter only on its diagonal.
      const double k = i == j ? 1.0 : K(i, j);
      out(static_cast<Index>(a), static_cast<Index>(b)) = (m_ * field_cov_(i, j) + nu_ * k) / (m_ + nu_);
    }
  }
  return out;
}

Matrix CompositeCovariance::design_cross(std::span<const Index> rows, const Matrix& A, const Matrix& weights_A) const {
  const Matrix learned = field_cov_ * weights_A;  // n x |A|
  Matrix Xr(static_cast<Index>(rows.size()), base_->points.cols());
  Matrix Lr(static_cast<Index>(rows.size()), A.rows());
  for (std::size_t a = 0; a < rows.size(); ++a) {
    Xr.row(static_cast<Index>(a)) = base_->points.row(rows[a]);
    Lr.row(static_cast<Index>(a)) = learned.row(rows[a]);
  }
  return (m_ * Lr + nu_ * gram(base_->config, Xr, A)) / (m_ + nu_);
}

Matrix composite_covariance(const ModelState& state, const BaseKernel& base, double m, double nu, const Matrix& A,
                            const Matrix& B) {
  const CompositeCovariance cov(base, state.field_cov, m, nu, design_tolerance(base.points));
  return cov(A, B);
}

}  // namespace hmtmf
