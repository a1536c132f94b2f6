#include "hmtmf/baselines.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace hmtmf {

namespace {

double squared_diameter(const Matrix& X) {
  if (X.rows() < 2) return 1.0;
  const double d = (X.colwise().maxCoeff() - X.colwise().minCoeff()).squaredNorm();
  return d > 0.0 ? d : 1.0;
}

double residual_variance(const Matrix& U, const Vector& z) {
  const Vector r = z - U * U.householderQr().solve(z);
  return r.squaredNorm() / static_cast<double>(std::max<Index>(1, z.size()));
}

Matrix sk_covariance(const Matrix& X, const Vector& noise, double tau_sq, double delta_sq) {
  Matrix S = tau_sq * gram(KernelConfig{KernelKind::squared_exponential, delta_sq}, X, X);
  S.diagonal() += noise;
  return S;
}

void finish(SKModel& model, double relative_jitter) {
  const Matrix S = sk_covariance(model.design, model.noise, model.tau_sq, model.kernel.delta_sq);
  model.factor = regularize_spd(S, default_jitter(S, relative_jitter));
  const Matrix SiU = model.factor.solve(model.basis);
  model.trend_info.compute(model.basis.transpose() * SiU);
  if (model.trend_info.info() != Eigen::Success) {
    throw Error(ErrorCode::rank_deficient, "trend information matrix of task " + std::to_string(model.task_id));
  }
  model.beta = model.trend_info.solve(SiU.transpose() * model.means);
  const Vector r = model.means - model.basis * model.beta;
  model.weights = model.factor.solve(r);
  model.log_likelihood = -0.5 * (model.factor.log_det() + r.dot(model.weights));
}

// The likelihood search needs one spare point beyond the trend; fixed fits do not.
SKModel sk_init(const TaskDataset& task, const NoiseMatrix& noise, Index spare) {
  validate(task);
  if (noise.size() != task.size()) throw Error(ErrorCode::dimension_mismatch, "noise length differs from task size");
  if (task.size() < task.basis.cols() + spare) {
    throw Error(ErrorCode::invalid_argument, "stochastic kriging needs n_l >= p_l + " + std::to_string(spare) +
                                                 " (task " + std::to_string(task.task_id) + ")");
  }
  if ((noise.diag.array() < 0.0).any()) throw Error(ErrorCode::invalid_argument, "negative noise variance");
  SKModel model;
  model.task_id = task.task_id;
  model.design = task.locations();
  model.means = sample_means(task);
  model.basis = task.basis;
  model.noise = noise.diag;
  model.domain = task.domain;
  return model;
}

}  // namespace

Vector gls_beta(const Matrix& U, const Vector& z, const Matrix& Sigma) {
  if (U.rows() != Sigma.rows() || z.size() != Sigma.rows()) throw Error(ErrorCode::dimension_mismatch, "gls_beta sizes");
  Eigen::LLT<Matrix> exact(Sigma);
  Matrix SiU;
  Vector Siz;
  if (exact.info() == Eigen::Success) {
    SiU = exact.solve(U);
    Siz = exact.solve(z);
  } else {
    const SpdFactor f = regularize_spd(Sigma, default_jitter(Sigma));
    SiU = f.solve(U);
    Siz = f.solve(z);
  }
  return (U.transpose() * SiU).llt().solve(U.transpose() * Siz);
}

double sk_negative_log_likelihood(const Matrix& X, const Vector& z, const Matrix& U, const Vector& noise,
                                  double tau_sq, double delta_sq, double relative_jitter, Vector* beta) {
  const Matrix S = sk_covariance(X, noise, tau_sq, delta_sq);
  SpdFactor f;
  try {
    f = regularize_spd(S, default_jitter(S, relative_jitter));
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
  const Matrix SiU = f.solve(U);
  const Eigen::LLT<Matrix> info(U.transpose() * SiU);
  if (info.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const Vector b = info.solve(SiU.transpose() * z);
  const Vector r = z - U * b;
  if (beta) *beta = b;
  return 0.5 * (f.log_det() + r.dot(f.solve(r)));
}

SKModel sk_fit_fixed(const TaskDataset& task, const NoiseMatrix& noise, double tau_sq, double delta_sq,
                     double relative_jitter) {
  if (!(tau_sq > 0.0) || !(delta_sq > 0.0)) throw Error(ErrorCode::invalid_argument, "SK hyperparameters must be positive");
  SKModel model = sk_init(task, noise, 0);
  model.tau_sq = tau_sq;
  model.kernel.delta_sq = delta_sq;
  model.converged = true;
  finish(model, relative_jitter);
  return model;
}

SKModel sk_fit(const TaskDataset& task, const NoiseMatrix& noise, const SKOptions& options) {
  SKModel model = sk_init(task, noise, 1);
  const double diam2 = squared_diameter(model.design);
  double var = residual_variance(model.basis, model.means);
  if (!(var > 0.0)) var = std::max(1e-12, 1e-12 * model.means.squaredNorm());
  const double lo_d = std::log(options.min_delta_factor * diam2), hi_d = std::log(options.max_delta_factor * diam2);
  const double lo_t = std::log(var * 1e-8), hi_t = std::log(var * 1e4);
  auto clamp = [&](const Vector& t) {
    return Vector((Vector(2) << std::clamp(t(0), lo_t, hi_t), std::clamp(t(1), lo_d, hi_d)).finished());
  };
  auto objective = [&](const Vector& t) {
    const Vector c = clamp(t);
    // Quadratic wall outside the box keeps the simplex inside.
    const double wall = (t - c).squaredNorm();
    return sk_negative_log_likelihood(model.design, model.means, model.basis, model.noise, std::exp(c(0)),
                                      std::exp(c(1)), options.relative_jitter) +
           wall;
  };

  static constexpr double kStarts[] = {0.005, 0.05, 0.5};
  MinimizeResult best;
  best.value = std::numeric_limits<double>::infinity();
  bool any_converged = false;
  const int restarts = std::clamp(options.restarts, 1, 3);
  for (int s = 0; s < restarts; ++s) {
    const Vector x0 = clamp((Vector(2) << std::log(var), std::log(kStarts[s] * diam2)).finished());
    MinimizeResult r = nelder_mead(objective, x0, options.optimizer);
    any_converged = any_converged || r.converged;
    if (r.value < best.value) best = r;
  }
  if (!std::isfinite(best.value)) {
    throw Error(ErrorCode::numerical, "likelihood is not finite anywhere for task " + std::to_string(task.task_id));
  }
  const Vector c = clamp(best.x);
  model.tau_sq = std::exp(c(0));
  model.kernel.delta_sq = std::exp(c(1));
  model.converged = any_converged;
  finish(model, options.relative_jitter);
  return model;
}

Prediction sk_predict(const SKModel& model, const Matrix& x_u, const Matrix& basis_u) {
  if (x_u.cols() != model.design.cols()) throw Error(ErrorCode::dimension_mismatch, "query dimension");
  if (basis_u.rows() != x_u.rows() || basis_u.cols() != model.basis.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "query basis must be |x_u| x p");
  }
  Prediction out;
  out.task_id = model.task_id;
  out.locations = x_u;
  out.mean.resize(x_u.rows());
  out.variance.resize(x_u.rows());
  constexpr Index chunk = 4096;
  for (Index s = 0; s < x_u.rows(); s += chunk) {
    const Index q = std::min(chunk, x_u.rows() - s);
    const Matrix c = model.tau_sq * gram(model.kernel, model.design, x_u.middleRows(s, q));
    const Matrix Bq = basis_u.middleRows(s, q);
    out.mean.segment(s, q) = Bq * model.beta + c.transpose() * model.weights;
    const Matrix Sic = model.factor.solve(c);
    const Matrix zeta = Bq.transpose() - model.basis.transpose() * Sic;
    const Vector reduction = (c.array() * Sic.array()).colwise().sum().transpose();
    const Vector trend = (zeta.array() * model.trend_info.solve(zeta).array()).colwise().sum().transpose();
    out.variance.segment(s, q) =
        ((model.tau_sq - reduction.array()).max(0.0) + trend.array().max(0.0)).matrix();
  }
  for (Index i = 0; i < x_u.rows(); ++i) {
    out.extrapolated += model.domain.lower.size() == x_u.cols() && !model.domain.contains(x_u.row(i).transpose(), 1e-9)
                            ? 1
                            : 0;
  }
  return out;
}

double estimate_shared_noise(const Matrix& K, const Vector& r, double lo, double hi) {
  if (K.rows() != r.size()) throw Error(ErrorCode::dimension_mismatch, "residual length");
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (K + K.transpose()));
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::numerical, "eigendecomposition failed");
  const Vector lam = eig.eigenvalues().cwiseMax(0.0);
  const Vector proj2 = (eig.eigenvectors().transpose() * r).array().square();
  auto nll = [&](double s) { return 0.5 * ((lam.array() + s).log().sum() + (proj2.array() / (lam.array() + s)).sum()); };
  return log_grid_search(nll, lo, hi, 20, 1e-8).x(0);
}

HomoscedasticFit homoscedastic_mtl_fit(std::span<const TaskDataset> tasks, const PooledDesign& pooled,
                                       const KernelConfig& kernel, const HyperParams& hyper, const EMConfig& em,
                                       const TrendConfig& trend) {
  const BaseKernel base = make_base_kernel(pooled.points, kernel, hyper.jitter);
  const double rv = response_variance(tasks);
  const double lower = 1e-10 * (rv > 0.0 ? rv : 1.0);
  std::vector<Index> stacked;
  for (const auto& rows : pooled.index_maps) stacked.insert(stacked.end(), rows.begin(), rows.end());

  HomoscedasticFit out;
  NoiseUpdate update = [&](std::span<const Vector> residuals, const ModelState& state, int) {
    Vector r(static_cast<Index>(stacked.size()));
    Index off = 0;
    for (const auto& v : residuals) {
      r.segment(off, v.size()) = v;
      off += v.size();
    }
    const double resid_var = r.squaredNorm() / static_cast<double>(std::max<Index>(1, r.size()));
    const double upper = std::max(10.0 * resid_var, 10.0 * lower);
    const CompositeCovariance cov(base, state.field_cov, static_cast<double>(tasks.size()), hyper.nu,
                                  design_tolerance(base.points));
    const double s = estimate_shared_noise(cov.on_design(stacked, stacked), r, lower, upper);
    out.sigma_sq = s;
    out.sigma_sq_trace.push_back(s);
    std::vector<NoiseMatrix> noise;
    for (const auto& t : tasks) noise.push_back(NoiseMatrix{Vector::Constant(t.size(), s)});
    return noise;
  };
  out.fit = iterate_model(tasks, pooled, update, kernel, hyper, em, trend);
  return out;
}

}  // namespace hmtmf
