#include "hmtmf/trend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hmtmf {

void TrendConfig::validate() const {
  if (!(huber_c > 0.0)) throw Error(ErrorCode::invalid_argument, "huber_c must be positive");
  if (!(t3 > 0.0) || !(t4 > 0.0)) throw Error(ErrorCode::invalid_argument, "trend thresholds must be positive");
  if (k2_max < 1) throw Error(ErrorCode::invalid_argument, "k2_max must be >= 1");
  if (irls_max_iter < 1) throw Error(ErrorCode::invalid_argument, "irls_max_iter must be >= 1");
}

TrendConfig trend_config(const HyperParams& hyper, Regression regression) {
  TrendConfig cfg;
  cfg.regression = regression;
  cfg.t3 = hyper.t3;
  cfg.t4 = hyper.t4;
  cfg.k2_max = hyper.k2_max;
  return cfg;
}

namespace {

double median(Vector v) {
  const auto n = static_cast<std::size_t>(v.size());
  std::sort(v.data(), v.data() + n);
  return n % 2 ? v(static_cast<Index>(n / 2))
               : 0.5 * (v(static_cast<Index>(n / 2 - 1)) + v(static_cast<Index>(n / 2)));
}

Vector weighted_solve(const Matrix& U, const Vector& y, const Vector& w) {
  const Vector sw = w.cwiseSqrt();
  return (sw.asDiagonal() * U).householderQr().solve((sw.array() * y.array()).matrix());
}

}  // namespace

Vector fit_trend(const Matrix& U, const Vector& y, const TrendConfig& cfg) {
  cfg.validate();
  if (U.rows() != y.size()) throw Error(ErrorCode::dimension_mismatch, "basis rows and target length differ");
  if (U.cols() < 1) throw Error(ErrorCode::invalid_argument, "basis needs at least one column");
  if (U.rows() < U.cols()) {
    throw Error(ErrorCode::rank_deficient, "fewer observations (" + std::to_string(U.rows()) + ") than basis columns (" +
                                               std::to_string(U.cols()) + ")");
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(U);
  qr.setThreshold(1e-10);
  if (qr.rank() < U.cols()) {
    std::string cols;
    for (Index k = qr.rank(); k < U.cols(); ++k) {
      if (!cols.empty()) cols += ", ";
      cols += std::to_string(qr.colsPermutation().indices()(k));
    }
    throw Error(ErrorCode::rank_deficient, "basis columns {" + cols + "} are linearly dependent on the others");
  }
  Vector beta = U.householderQr().solve(y);
  if (cfg.regression == Regression::ols) return beta;

  // Huber M-estimate by IRLS; scale re-estimated each pass as MAD / 0.6745.
  const double scale_floor = 1e-12 * std::max(1.0, y.cwiseAbs().maxCoeff());
  for (int it = 0; it < cfg.irls_max_iter; ++it) {
    const Vector r = y - U * beta;
    const double s = std::max(median(r.cwiseAbs()) / 0.6745, scale_floor);
    Vector w(r.size());
    for (Index i = 0; i < r.size(); ++i) {
      const double u = std::abs(r(i)) / s;
      w(i) = u <= cfg.huber_c ? 1.0 : cfg.huber_c / u;
    }
    const Vector next = weighted_solve(U, y, w);
    const double step = (next - beta).norm();
    beta = next;
    if (step <= 1e-12 * (beta.norm() + 1.0)) break;
  }
  return beta;
}

std::size_t FittedModel::position(int task_id) const {
  const auto it = std::find(task_ids.begin(), task_ids.end(), task_id);
  if (it == task_ids.end()) throw Error(ErrorCode::unknown_task, "task id " + std::to_string(task_id) + " not in model");
  return static_cast<std::size_t>(it - task_ids.begin());
}

const char* to_string(StopReason reason) noexcept {
  switch (reason) {
    case StopReason::per_task_beta: return "per_task_beta";
    case StopReason::mean_beta: return "mean_beta";
    case StopReason::iteration_cap: return "iteration_cap";
  }
  return "unknown";
}

double response_variance(std::span<const TaskDataset> tasks) {
  std::vector<double> all;
  for (const auto& t : tasks) {
    const Vector z = sample_means(t);
    all.insert(all.end(), z.data(), z.data() + z.size());
  }
  if (all.size() < 2) return 0.0;
  const double mean = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
  double ss = 0.0;
  for (double v : all) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(all.size() - 1);
}

double response_noise_floor(std::span<const TaskDataset> tasks) {
  const double var = response_variance(tasks);
  return 1e-12 * (var > 0.0 ? var : 1.0);
}

FitResult iterate_model(std::span<const TaskDataset> tasks, const PooledDesign& pooled,
                        std::span<const NoiseMatrix> noise, const KernelConfig& kernel, const HyperParams& hyper,
                        const EMConfig& em, const TrendConfig& trend) {
  if (noise.size() != tasks.size()) throw Error(ErrorCode::dimension_mismatch, "one noise matrix per task required");
  std::vector<NoiseMatrix> fixed(noise.begin(), noise.end());
  auto update = [fixed](std::span<const Vector>, const ModelState&, int) { return fixed; };
  return iterate_model(tasks, pooled, update, kernel, hyper, em, trend);
}

FitResult iterate_model(std::span<const TaskDataset> tasks, const PooledDesign& pooled, const NoiseUpdate& update,
                        const KernelConfig& kernel, const HyperParams& hyper, const EMConfig& em,
                        const TrendConfig& trend) {
  hyper.validate();
  trend.validate();
  if (tasks.empty()) throw Error(ErrorCode::empty_input, "no tasks to fit");
  if (pooled.index_maps.size() != tasks.size()) throw Error(ErrorCode::dimension_mismatch, "pooled design task count");
  for (const auto& t : tasks) validate(t);

  const std::size_t m = tasks.size();
  const BaseKernel base = make_base_kernel(pooled.points, kernel, hyper.jitter);
  EMConfig em_cfg = em;
  if (em_cfg.noise_floor <= 0.0) em_cfg.noise_floor = response_noise_floor(tasks);

  FitResult result;
  FittedModel& model = result.model;
  model.pooled = pooled;
  model.kernel = kernel;
  model.hyper = hyper;
  for (const auto& t : tasks) {
    model.task_ids.push_back(t.task_id);
    model.task_basis.push_back(t.basis);
    model.sample_means.push_back(sample_means(t));
    model.domains.push_back(t.domain);
  }

  std::vector<Vector> eta_hat(m), beta(m), residuals(m);
  for (std::size_t l = 0; l < m; ++l) eta_hat[l] = Vector::Zero(tasks[l].size());
  ModelState state = initial_state(base, static_cast<Index>(m));
  std::vector<Vector> prev_beta;

  for (int j = 1; j <= trend.k2_max; ++j) {
    for (std::size_t l = 0; l < m; ++l) {
      beta[l] = fit_trend(model.task_basis[l], model.sample_means[l] - eta_hat[l], trend);
      residuals[l] = model.sample_means[l] - model.task_basis[l] * beta[l];
    }
    const std::vector<NoiseMatrix> noise = update(residuals, state, j);
    if (noise.size() != m) throw Error(ErrorCode::dimension_mismatch, "noise update returned wrong task count");
    const bool warm = trend.warm_start && j > 1;
    EMResult fit = run_em(base, pooled, residuals, noise, hyper, em_cfg, warm ? &state : nullptr);
    state = std::move(fit.state);
    for (std::size_t l = 0; l < m; ++l) {
      const auto& rows = pooled.index_maps[l];
      for (std::size_t a = 0; a < rows.size(); ++a) eta_hat[l](static_cast<Index>(a)) = state.field_hat[l](rows[a]);
    }

    OuterIteration it;
    it.index = j;
    it.em_iterations = static_cast<int>(fit.trace.iterations.size());
    it.em_converged = fit.trace.converged;
    bool per_task = false, mean_ok = false;
    if (prev_beta.empty()) {
      it.mean_delta_beta = it.max_delta_beta = std::numeric_limits<double>::quiet_NaN();
    } else {
      per_task = true;
      double sum_delta = 0.0, sum_norm = 0.0;
      for (std::size_t l = 0; l < m; ++l) {
        const double d = (beta[l] - prev_beta[l]).norm();
        sum_delta += d;
        sum_norm += beta[l].norm();
        it.max_delta_beta = std::max(it.max_delta_beta, d);
        per_task = per_task && d < trend.t3 * (beta[l].norm() + 1.0);
      }
      it.mean_delta_beta = sum_delta / static_cast<double>(m);
      mean_ok = it.mean_delta_beta < trend.t4 * (sum_norm / static_cast<double>(m) + 1.0);
    }
    result.trace.iterations.push_back(it);
    result.trace.em.push_back(std::move(fit.trace));
    prev_beta = beta;
    if (per_task) {
      result.trace.stop = StopReason::per_task_beta;
      break;
    }
    if (mean_ok) {
      result.trace.stop = StopReason::mean_beta;
      break;
    }
  }
  state.beta_hat = beta;
  model.state = std::move(state);
  return result;
}

}  // namespace hmtmf
