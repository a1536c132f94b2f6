#pragma once

#include "hmtmf/types.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace hmtmf {

enum class KernelKind { squared_exponential };

struct KernelConfig {
  KernelKind kind = KernelKind::squared_exponential;
  double delta_sq = 80.0;

  void validate() const;
};

/// exp(-|xi - xj|^2 / delta_sq)
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar eval_kernel(const KernelConfig& cfg, const Eigen::MatrixBase<DerivedA>& xi,
                                      const Eigen::MatrixBase<DerivedB>& xj) {
  using Scalar = typename DerivedA::Scalar;
  if (xi.size() != xj.size()) throw Error(ErrorCode::dimension_mismatch, "kernel arguments differ in dimension");
  const Scalar d2 = (xi.derived().reshaped() - xj.derived().reshaped()).squaredNorm();
  return std::exp(-d2 / static_cast<Scalar>(cfg.delta_sq));
}

/// Kernel matrix between the rows of A and the rows of B.
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic> gram(const KernelConfig& cfg,
                                                                              const Eigen::MatrixBase<DerivedA>& A,
                                                                              const Eigen::MatrixBase<DerivedB>& B) {
  using Scalar = typename DerivedA::Scalar;
  using Out = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (A.rows() == 0 || B.rows() == 0) return Out(A.rows(), B.rows());
  if (A.cols() != B.cols()) throw Error(ErrorCode::dimension_mismatch, "gram point sets differ in dimension");
  // |a - b|^2 expanded; clamped at zero against cancellation.
  const auto a2 = A.rowwise().squaredNorm().eval();
  const auto b2 = B.rowwise().squaredNorm().eval();
  Out d2 = (-2.0 * (A * B.transpose())).eval();
  d2.colwise() += a2;
  d2.rowwise() += b2.transpose();
  if (A.rows() == B.rows() && A == B) d2 = (Scalar(0.5) * (d2 + d2.transpose())).eval();
  const Scalar inv = static_cast<Scalar>(1.0 / cfg.delta_sq);
  Out K = (-(d2.array().max(Scalar(0))) * inv).exp().matrix();
  // Exact ones for coincident points regardless of rounding in the expansion.
  for (Index j = 0; j < B.rows(); ++j) {
    for (Index i = 0; i < A.rows(); ++i) {
      if (K(i, j) > 1 - 64 * Eigen::NumTraits<Scalar>::epsilon()) K(i, j) = eval_kernel(cfg, A.row(i), B.row(j));
    }
  }
  return K;
}

/// Cholesky factor of a symmetric matrix after jitter regularization.
struct SpdFactor {
  Matrix matrix;  // M + jitter * I
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
  int attempts = 0;

  template <typename Derived>
  typename Derived::PlainObject solve(const Eigen::MatrixBase<Derived>& rhs) const {
    return llt.solve(rhs);
  }
  double log_det() const;
};

/// 1e-10 times the mean diagonal (or 1e-10 when the diagonal vanishes).
double default_jitter(const Matrix& M, double relative = 1e-10);

/// Factorizes M + jitter*I, multiplying jitter by 10 up to five more times.
SpdFactor regularize_spd(const Matrix& M, double jitter);

/// The base Gram matrix on the pooled design together with its factor.
struct BaseKernel {
  KernelConfig config;
  Matrix points;
  SpdFactor factor;  // factor.matrix is the (jittered) kappa used everywhere

  const Matrix& kappa() const { return factor.matrix; }
};

BaseKernel make_base_kernel(const Matrix& pooled_points, const KernelConfig& cfg, double relative_jitter);

/// 1e-9 times the bounding-box diagonal of a point set (1e-9 if degenerate).
double design_tolerance(const Matrix& points);

/// Learned-plus-base blend over arbitrary locations:
///   [m k(.,a)^T C_alpha k(.,b) + nu k(a,b)] / (m + nu).
/// Evaluated through the field view field_cov = kappa C_alpha kappa, so
/// k(.,a)^T C_alpha k(.,b) = w_a^T field_cov w_b with w = kappa^{-1} k(.,a).
/// Locations matching a pooled design point within `snap_tol` use the unit
/// weight vector for that point.
class CompositeCovariance {
 public:
  CompositeCovariance(const BaseKernel& base, const Matrix& field_cov, double m, double nu, double snap_tol);

  Matrix operator()(const Matrix& A, const Matrix& B) const;
  Vector diagonal(const Matrix& A) const;

  /// kappa^{-1} k(X, A) with snapping to design points.
  Matrix weights(const Matrix& A) const;

  /// Entries between pooled design rows; no solves involved.
  Matrix on_design(std::span<const Index> rows, std::span<const Index> cols) const;

  /// Covariances between pooled design rows and arbitrary locations given their weights.
  Matrix design_cross(std::span<const Index> rows, const Matrix& A, const Matrix& weights_A) const;

  double m() const { return m_; }
  double nu() const { return nu_; }

 private:
  const BaseKernel* base_;
  Matrix field_cov_;
  double m_;
  double nu_;
  double snap_tol_;
};

/// Free-function form of the blend; kappa and the pooled points come from `base`.
Matrix composite_covariance(const ModelState& state, const BaseKernel& base, double m, double nu, const Matrix& A,
                            const Matrix& B);

}  // namespace hmtmf
