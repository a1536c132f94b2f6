#include "hmtmf/em.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace hmtmf {

namespace {

Matrix symmetrized(const Matrix& M) { return 0.5 * (M + M.transpose()); }

/// Plain Cholesky when it succeeds, otherwise the jitter ladder.
SpdFactor factor(const Matrix& M) {
  SpdFactor f;
  f.matrix = M;
  f.llt.compute(M);
  if (f.llt.info() == Eigen::Success) {
    f.attempts = 1;
    return f;
  }
  return regularize_spd(M, default_jitter(M));
}

double log_det_spd(const Matrix& M) {
  Eigen::LLT<Matrix> llt(M);
  if (llt.info() == Eigen::Success) return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  // Rounding can leave a PSD posterior covariance marginally indefinite.
  Eigen::LDLT<Matrix> ldlt(M);
  return ldlt.vectorD().array().abs().log().sum();
}

void check_task_inputs(const PooledDesign& pooled, std::span<const Vector> eta, std::span<const NoiseMatrix> noise) {
  if (eta.empty()) throw Error(ErrorCode::empty_input, "EM needs at least one task");
  if (eta.size() != noise.size() || eta.size() != pooled.index_maps.size()) {
    throw Error(ErrorCode::dimension_mismatch, "EM inputs disagree on the number of tasks");
  }
  for (std::size_t l = 0; l < eta.size(); ++l) {
    const auto n_l = static_cast<Index>(pooled.index_maps[l].size());
    if (eta[l].size() != n_l || noise[l].size() != n_l) {
      throw Error(ErrorCode::dimension_mismatch, "task " + std::to_string(l) + " residual/noise length mismatch");
    }
  }
}

Vector positive_noise(const NoiseMatrix& noise) {
  const double top = noise.size() ? noise.diag.maxCoeff() : 0.0;
  const double floor = 1e-12 * (top > 0.0 ? top : 1.0);
  return (noise.diag.array() > 0.0).select(noise.diag, floor);
}

struct FieldStep {
  TaskPosterior posterior;
  double log_det_cov = 0.0;  // ln|V_l| through the determinant lemma
};

FieldStep field_step(std::span<const Index> rows, const Vector& noise, const Vector& eta, const Vector& mean,
                     const Matrix& cov, double log_det_prior) {
  const auto n_l = static_cast<Index>(rows.size());
  const Index n = cov.rows();
  Matrix S(n_l, n_l);
  Matrix cross(n_l, n);  // cov(rows, :)
  Vector resid(n_l);
  for (Index a = 0; a < n_l; ++a) {
    cross.row(a) = cov.row(rows[static_cast<std::size_t>(a)]);
    resid(a) = eta(a) - mean(rows[static_cast<std::size_t>(a)]);
  }
  for (Index b = 0; b < n_l; ++b) S.col(b) = cross.col(rows[static_cast<std::size_t>(b)]);
  S = symmetrized(S);
  S.diagonal() += noise;
  const SpdFactor fs = factor(S);
  const Matrix gain = fs.solve(cross);  // S^{-1} cov(rows, :)
  FieldStep out;
  out.posterior.mean = mean + gain.transpose() * resid;
  out.posterior.cov = symmetrized(cov - cross.transpose() * gain);
  const Vector used_noise = fs.matrix.diagonal() - (S.diagonal() - noise);
  out.log_det_cov = log_det_prior + used_noise.array().log().sum() - fs.log_det();
  return out;
}

/// Field-view free energy; log-determinants of the posteriors may be supplied.
double field_objective_impl(const ModelState& st, const Matrix& kappa, const PooledDesign& pooled,
                            std::span<const NoiseMatrix> noise, std::span<const Vector> eta, double lambda, double nu,
                            std::span<const double> posterior_log_dets) {
  const auto m = static_cast<double>(eta.size());
  const SpdFactor fb = factor(st.field_cov);
  const double log_det_b = fb.log_det();
  double value = 0.0;
  for (std::size_t l = 0; l < eta.size(); ++l) {
    const auto& rows = pooled.index_maps[l];
    const Vector s = positive_noise(noise[l]);
    const Vector& f = st.field_hat[l];
    const Matrix& V = st.field_cov_l[l];
    double data = 0.0;
    for (std::size_t a = 0; a < rows.size(); ++a) {
      const auto i = static_cast<Index>(a);
      const double r = f(rows[a]) - eta[l](i);
      data += (V(rows[a], rows[a]) + r * r) / s(i);
    }
    const Vector d = f - st.field_mean;
    const double q = fb.solve(V).trace() + d.dot(fb.solve(d));
    const double ent = posterior_log_dets.empty() ? log_det_spd(V) : posterior_log_dets[l];
    value += -0.5 * data - 0.5 * q + 0.5 * ent;
  }
  value -= 0.5 * m * log_det_b;
  value -= 0.5 * nu * (log_det_b + fb.solve(kappa).trace());
  value -= 0.5 * lambda * st.field_mean.dot(fb.solve(st.field_mean));
  return value;
}

}  // namespace

void EMConfig::validate() const {
  if (!(t1 > 0.0) || !(t2 > 0.0)) throw Error(ErrorCode::invalid_argument, "EM thresholds must be positive");
  if (k1_max < 1) throw Error(ErrorCode::invalid_argument, "k1_max must be >= 1");
  if (noise_floor < 0.0) throw Error(ErrorCode::invalid_argument, "noise floor must be nonnegative");
}

EMConfig em_config(const HyperParams& hyper, EMCriterion criterion) {
  EMConfig cfg;
  cfg.t1 = hyper.t1;
  cfg.t2 = hyper.t2;
  cfg.k1_max = hyper.k1_max;
  cfg.criterion = criterion;
  return cfg;
}

TaskPosterior e_step(const Matrix& kappa_l, const NoiseMatrix& noise_l, const Vector& eta_l, const Vector& mu_alpha,
                     const Matrix& C_alpha) {
  const Index n = C_alpha.rows();
  if (C_alpha.cols() != n || kappa_l.cols() != n || mu_alpha.size() != n || kappa_l.rows() != eta_l.size() ||
      noise_l.size() != eta_l.size()) {
    throw Error(ErrorCode::dimension_mismatch, "e_step operand sizes");
  }
  const SpdFactor fc = factor(C_alpha);
  const Matrix C_inv = fc.solve(Matrix(Matrix::Identity(n, n)));
  const Vector w = positive_noise(noise_l).cwiseInverse();
  const Matrix precision = symmetrized(kappa_l.transpose() * w.asDiagonal() * kappa_l + C_inv);
  const SpdFactor fp = factor(precision);
  const Vector rhs = kappa_l.transpose() * (w.array() * eta_l.array()).matrix() + C_inv * mu_alpha;
  TaskPosterior out;
  out.mean = fp.solve(rhs);
  out.cov = symmetrized(fp.solve(Matrix(Matrix::Identity(n, n))));
  if (!out.mean.allFinite() || !out.cov.allFinite()) throw Error(ErrorCode::numerical, "e_step produced non-finite values");
  return out;
}

TaskPosterior field_e_step(std::span<const Index> rows, const NoiseMatrix& noise_l, const Vector& eta_l,
                           const Vector& mean, const Matrix& cov) {
  if (static_cast<Index>(rows.size()) != eta_l.size() || noise_l.size() != eta_l.size() || mean.size() != cov.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "field_e_step operand sizes");
  }
  return field_step(rows, noise_l.diag.cwiseMax(0.0), eta_l, mean, cov, 0.0).posterior;
}

SharedMoments m_step(std::span<const Vector> means, std::span<const Matrix> covs, const Matrix& scale, double lambda,
                     double nu) {
  if (means.empty() || means.size() != covs.size()) throw Error(ErrorCode::dimension_mismatch, "m_step task count");
  if (!(lambda >= 0.0) || !(nu > 0.0)) throw Error(ErrorCode::invalid_argument, "m_step needs lambda >= 0, nu > 0");
  const Index n = scale.rows();
  const auto m = static_cast<double>(means.size());
  SharedMoments out;
  out.mean = Vector::Zero(n);
  for (const auto& a : means) {
    if (a.size() != n) throw Error(ErrorCode::dimension_mismatch, "m_step mean length");
    out.mean += a;
  }
  out.mean /= (lambda + m);
  Matrix acc = lambda * out.mean * out.mean.transpose() + nu * scale;
  for (std::size_t l = 0; l < means.size(); ++l) {
    if (covs[l].rows() != n || covs[l].cols() != n) throw Error(ErrorCode::dimension_mismatch, "m_step covariance size");
    const Vector d = means[l] - out.mean;
    acc += covs[l];
    acc.noalias() += d * d.transpose();
  }
  out.cov = symmetrized(acc / (nu + m));
  return out;
}

double penalized_objective(const ModelState& state, const Matrix& kappa, std::span<const Matrix> kappa_l,
                           std::span<const NoiseMatrix> noise, std::span<const Vector> eta, double lambda, double nu) {
  const auto m = static_cast<double>(eta.size());
  if (kappa_l.size() != eta.size() || noise.size() != eta.size() || state.alpha_hat.size() != eta.size() ||
      state.C_alpha_l.size() != eta.size()) {
    throw Error(ErrorCode::dimension_mismatch, "penalized_objective task count");
  }
  const SpdFactor fc = factor(state.C_alpha);
  const SpdFactor fk = factor(kappa);
  const double log_det_c = fc.log_det();
  const Matrix C_inv = fc.solve(Matrix(Matrix::Identity(kappa.rows(), kappa.rows())));
  double value = 0.0;
  for (std::size_t l = 0; l < eta.size(); ++l) {
    const Vector w = positive_noise(noise[l]).cwiseInverse();
    const Matrix& K = kappa_l[l];
    const Vector& a = state.alpha_hat[l];
    const Matrix& Cl = state.C_alpha_l[l];
    const Vector r = K * a - eta[l];
    const double data = (K.transpose() * w.asDiagonal() * K * Cl).trace() + r.dot(w.asDiagonal() * r);
    const Vector d = a - state.mu_alpha;
    const double q = (C_inv * Cl).trace() + d.dot(C_inv * d);
    value += -0.5 * data - 0.5 * q + 0.5 * log_det_spd(Cl);
  }
  value -= 0.5 * m * log_det_c;
  value -= 0.5 * nu * (log_det_c + fk.solve(C_inv).trace());
  value -= 0.5 * lambda * state.mu_alpha.dot(C_inv * state.mu_alpha);
  return value;
}

double field_objective(const ModelState& state, const Matrix& kappa, const PooledDesign& pooled,
                       std::span<const NoiseMatrix> noise, std::span<const Vector> eta, double lambda, double nu) {
  check_task_inputs(pooled, eta, noise);
  return field_objective_impl(state, kappa, pooled, noise, eta, lambda, nu, {});
}

ModelState initial_state(const BaseKernel& base, Index tasks) {
  const Index n = base.points.rows();
  ModelState st;
  st.field_mean = Vector::Zero(n);
  st.field_cov = base.kappa();
  st.field_hat.assign(static_cast<std::size_t>(tasks), Vector::Zero(n));
  st.field_cov_l.assign(static_cast<std::size_t>(tasks), base.kappa());
  derive_coefficients(st, base);
  return st;
}

void derive_coefficients(ModelState& st, const BaseKernel& base) {
  const auto& f = base.factor;
  auto sandwich = [&f](const Matrix& M) {
    const Matrix left = f.solve(M);
    return symmetrized(f.solve(Matrix(left.transpose())));
  };
  st.mu_alpha = f.solve(st.field_mean);
  st.C_alpha = sandwich(st.field_cov);
  st.alpha_hat.clear();
  st.C_alpha_l.clear();
  for (std::size_t l = 0; l < st.field_hat.size(); ++l) {
    st.alpha_hat.push_back(f.solve(st.field_hat[l]));
    st.C_alpha_l.push_back(sandwich(st.field_cov_l[l]));
  }
}

void derive_field(ModelState& st, const Matrix& kappa) {
  st.field_mean = kappa * st.mu_alpha;
  st.field_cov = symmetrized(kappa * st.C_alpha * kappa);
  st.field_hat.clear();
  st.field_cov_l.clear();
  for (std::size_t l = 0; l < st.alpha_hat.size(); ++l) {
    st.field_hat.push_back(kappa * st.alpha_hat[l]);
    st.field_cov_l.push_back(symmetrized(kappa * st.C_alpha_l[l] * kappa));
  }
}

Matrix task_kernel_rows(const Matrix& kappa, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), kappa.cols());
  for (std::size_t a = 0; a < rows.size(); ++a) out.row(static_cast<Index>(a)) = kappa.row(rows[a]);
  return out;
}

EMResult run_em(const BaseKernel& base, const PooledDesign& pooled, std::span<const Vector> residuals,
                std::span<const NoiseMatrix> noise, const HyperParams& hyper, const EMConfig& config,
                const ModelState* warm_start, const EMObserver& observer) {
  hyper.validate();
  config.validate();
  check_task_inputs(pooled, residuals, noise);
  if (base.points.rows() != pooled.size()) throw Error(ErrorCode::dimension_mismatch, "base kernel / pooled design");
  const std::size_t m = residuals.size();
  const Index n = pooled.size();

  double floor = config.noise_floor;
  if (floor <= 0.0) {
    Index total = 0;
    for (const auto& r : residuals) total += r.size();
    Vector all(total);
    Index at = 0;
    for (const auto& r : residuals) {
      all.segment(at, r.size()) = r;
      at += r.size();
    }
    const double var = total > 1 ? (all.array() - all.mean()).square().sum() / static_cast<double>(total - 1) : 0.0;
    floor = 1e-12 * (var > 0.0 ? var : 1.0);
  }
  std::vector<NoiseMatrix> floored;
  for (const auto& s : noise) floored.push_back(floor_noise(s, floor));

  EMResult result;
  ModelState& st = result.state;
  if (warm_start != nullptr && warm_start->field_mean.size() == n && warm_start->field_hat.size() == m) {
    st = *warm_start;
  } else {
    st = initial_state(base, static_cast<Index>(m));
  }
  Vector prev_mu = st.mu_alpha.size() == n ? st.mu_alpha : Vector::Zero(n);
  std::vector<Vector> prev_alpha = st.alpha_hat;

  std::vector<Vector> means(m);
  std::vector<Matrix> covs(m);
  std::vector<double> log_dets(m);
  for (int k = 1; k <= config.k1_max; ++k) {
    const double log_det_prior = factor(st.field_cov).log_det();
    for (std::size_t l = 0; l < m; ++l) {
      FieldStep step = field_step(pooled.index_maps[l], floored[l].diag, residuals[l], st.field_mean, st.field_cov,
                                  log_det_prior);
      means[l] = std::move(step.posterior.mean);
      covs[l] = std::move(step.posterior.cov);
      log_dets[l] = step.log_det_cov;
    }
    SharedMoments shared = m_step(means, covs, base.kappa(), hyper.lambda, hyper.nu);
    st.field_mean = std::move(shared.mean);
    st.field_cov = std::move(shared.cov);
    st.field_hat = means;
    st.field_cov_l = covs;
    if (!st.field_mean.allFinite() || !st.field_cov.allFinite()) {
      throw Error(ErrorCode::numerical, "EM iterate became non-finite at iteration " + std::to_string(k));
    }

    EMIteration it;
    it.index = k;
    it.objective = field_objective_impl(st, base.kappa(), pooled, floored, residuals, hyper.lambda, hyper.nu, log_dets);
    const Vector mu = base.factor.solve(st.field_mean);
    it.delta_mu_alpha = (mu - prev_mu).norm();
    bool tasks_converged = true;
    std::vector<Vector> alpha(m);
    for (std::size_t l = 0; l < m; ++l) {
      alpha[l] = base.factor.solve(st.field_hat[l]);
      const double delta = prev_alpha.size() == m ? (alpha[l] - prev_alpha[l]).norm()
                                                  : std::numeric_limits<double>::infinity();
      it.max_delta_alpha = std::max(it.max_delta_alpha, delta);
      tasks_converged = tasks_converged && delta < config.t2 * (alpha[l].norm() + 1.0);
    }
    result.trace.iterations.push_back(it);
    if (observer) {
      derive_coefficients(st, base);
      observer(it, st);
    }
    const bool mu_converged = it.delta_mu_alpha < config.t1 * (mu.norm() + 1.0);
    prev_mu = mu;
    prev_alpha = std::move(alpha);
    if ((config.criterion == EMCriterion::mu_alpha_delta && mu_converged) ||
        (config.criterion == EMCriterion::per_task_alpha_delta && tasks_converged)) {
      result.trace.converged = true;
      break;
    }
  }
  derive_coefficients(st, base);
  st.sigma_eps.clear();
  for (const auto& s : floored) st.sigma_eps.push_back(s.diag);
  return result;
}

EMResult run_em(const PooledDesign& pooled, std::span<const Vector> residuals, std::span<const NoiseMatrix> noise,
                const KernelConfig& kernel, const HyperParams& hyper, const EMConfig& config,
                const ModelState* warm_start) {
  const BaseKernel base = make_base_kernel(pooled.points, kernel, hyper.jitter);
  return run_em(base, pooled, residuals, noise, hyper, config, warm_start);
}

}  // namespace hmtmf
