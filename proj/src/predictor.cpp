#include "hmtmf/predictor.hpp"

#include <algorithm>
#include <string>

namespace hmtmf {

namespace {

constexpr Index kChunk = 4096;

SpdFactor factor_or_throw(const Matrix& M, const char* what) {
  try {
    return regularize_spd(M, default_jitter(M));
  } catch (const Error&) {
    throw Error(ErrorCode::kernel_degeneracy, std::string(what) + " is singular after jitter");
  }
}

}  // namespace

Predictor::Predictor(const FittedModel& model) : Predictor(model, static_cast<double>(model.tasks()), model.hyper.nu) {}

Predictor::Predictor(const FittedModel& model, double m, double nu)
    : model_(&model), base_(make_base_kernel(model.pooled.points, model.kernel, model.hyper.jitter)) {
  const ModelState& st = model.state;
  if (st.field_cov.rows() != model.pooled.size() || st.tasks() != model.tasks()) {
    throw Error(ErrorCode::invalid_argument, "model state is not fitted");
  }
  composite_.emplace(base_, st.field_cov, m, nu, design_tolerance(base_.points));

  const std::size_t tasks = static_cast<std::size_t>(model.tasks());
  Index total = 0;
  for (std::size_t l = 0; l < tasks; ++l) total += static_cast<Index>(model.pooled.index_maps[l].size());
  Vector noise(total);
  stacked_rows_.reserve(static_cast<std::size_t>(total));
  for (std::size_t l = 0, off = 0; l < tasks; ++l) {
    const auto& rows = model.pooled.index_maps[l];
    const Vector& s = st.sigma_eps[l];
    if (s.size() != static_cast<Index>(rows.size())) throw Error(ErrorCode::dimension_mismatch, "task noise length");
    stacked_rows_.insert(stacked_rows_.end(), rows.begin(), rows.end());
    noise.segment(static_cast<Index>(off), s.size()) = s;
    off += rows.size();

    Matrix Sl = composite_->on_design(rows, rows);
    Sl.diagonal() += s;
    per_task_.push_back(factor_or_throw(Sl, "task covariance"));
    const Matrix& U = model.task_basis[l];
    Eigen::LLT<Matrix> info(U.transpose() * per_task_.back().solve(U));
    if (info.info() != Eigen::Success) {
      throw Error(ErrorCode::rank_deficient, "trend information matrix of task " + std::to_string(model.task_ids[l]));
    }
    trend_info_.push_back(std::move(info));
  }
  Matrix S = composite_->on_design(stacked_rows_, stacked_rows_);
  S.diagonal() += noise;
  stacked_ = factor_or_throw(S, "pooled covariance");
}

void Predictor::check_query(std::size_t task, const Matrix& x_u, const Matrix& basis_u) const {
  if (x_u.cols() != model_->pooled.dimension()) throw Error(ErrorCode::dimension_mismatch, "query dimension");
  if (basis_u.rows() != x_u.rows() || basis_u.cols() != model_->task_basis[task].cols()) {
    throw Error(ErrorCode::dimension_mismatch, "query basis must be |x_u| x p_l");
  }
}

Vector Predictor::mean(int task_id, const Matrix& x_u, const Matrix& basis_u) const {
  const std::size_t l = model_->position(task_id);
  check_query(l, x_u, basis_u);
  const Vector trend = basis_u * model_->state.beta_hat[l];
  // w^T f_hat equals k(x_u, X) alpha_hat and is exact at design points.
  Vector residual(x_u.rows());
  for (Index s = 0; s < x_u.rows(); s += kChunk) {
    const Index q = std::min(kChunk, x_u.rows() - s);
    residual.segment(s, q) = composite_->weights(x_u.middleRows(s, q)).transpose() * model_->state.field_hat[l];
  }
  return trend + residual;
}

Vector Predictor::variance(int task_id, const Matrix& x_u, const Matrix& basis_u,
                           PredictionComponents* components) const {
  const std::size_t l = model_->position(task_id);
  check_query(l, x_u, basis_u);
  const auto& rows = model_->pooled.index_maps[l];
  Index offset = 0;
  for (std::size_t h = 0; h < l; ++h) offset += static_cast<Index>(model_->pooled.index_maps[h].size());
  const Index nl = static_cast<Index>(rows.size());
  const Matrix& U = model_->task_basis[l];
  const double m = composite_->m(), nu = composite_->nu();

  Vector var_res(x_u.rows()), var_trend(x_u.rows());
  for (Index s = 0; s < x_u.rows(); s += kChunk) {
    const Index q = std::min(kChunk, x_u.rows() - s);
    const Matrix Xq = x_u.middleRows(s, q);
    const Matrix W = composite_->weights(Xq);
    const Vector learned = (W.array() * (model_->state.field_cov * W).array()).colwise().sum().transpose();
    const Vector prior = (m * learned.array() + nu).matrix() / (m + nu);
    const Matrix C = composite_->design_cross(stacked_rows_, Xq, W);
    const Vector reduction = (C.array() * stacked_.solve(C).array()).colwise().sum().transpose();
    for (Index j = 0; j < q; ++j) {
      const double v = prior(j) - reduction(j);
      if (v < -1e-10 * std::max(1.0, prior(j))) {
        throw Error(ErrorCode::numerical, "negative residual variance " + std::to_string(v) + " at query " +
                                              std::to_string(s + j));
      }
      var_res(s + j) = std::max(v, 0.0);
    }
    const Matrix zeta = basis_u.middleRows(s, q).transpose() - U.transpose() * per_task_[l].solve(C.middleRows(offset, nl));
    var_trend.segment(s, q) = (zeta.array() * trend_info_[l].solve(zeta).array()).colwise().sum().transpose().cwiseMax(0.0);
  }
  if (components) {
    components->var_residual = var_res;
    components->var_trend = var_trend;
  }
  return var_res + var_trend;
}

Prediction Predictor::predict(int task_id, const Matrix& x_u, const Matrix& basis_u, bool with_components) const {
  const std::size_t l = model_->position(task_id);
  check_query(l, x_u, basis_u);
  Prediction out;
  out.task_id = task_id;
  out.locations = x_u;
  PredictionComponents comps;
  out.variance = variance(task_id, x_u, basis_u, &comps);
  out.mean = mean(task_id, x_u, basis_u);
  if (with_components) {
    comps.trend = basis_u * model_->state.beta_hat[l];
    comps.residual = out.mean - comps.trend;
    out.components = std::move(comps);
  }
  if (l < model_->domains.size() && model_->domains[l].lower.size() == x_u.cols()) {
    const Box& box = model_->domains[l];
    const double tol = 1e-9 * std::max(1.0, box.diagonal());
    for (Index i = 0; i < x_u.rows(); ++i) out.extrapolated += box.contains(x_u.row(i).transpose(), tol) ? 0 : 1;
  }
  return out;
}

Vector predict_mean(const FittedModel& model, int task_id, const Matrix& x_u, const Matrix& basis_u) {
  return Predictor(model).mean(task_id, x_u, basis_u);
}

Vector predict_variance(const FittedModel& model, int task_id, const Matrix& x_u, const Matrix& basis_u) {
  return Predictor(model).variance(task_id, x_u, basis_u);
}

Prediction predict(const FittedModel& model, int task_id, const Matrix& x_u, const Matrix& basis_u,
                   bool with_components) {
  return Predictor(model).predict(task_id, x_u, basis_u, with_components);
}

}  // namespace hmtmf
