#include "hmtmf/trend.hpp"

#include "../support/gen.hpp"

#include <doctest.h>

#include <algorithm>

using namespace hmtmf;
using testing::Gen;
using testing::make_task;

namespace {

TrendConfig config(Regression r) {
  TrendConfig c;
  c.regression = r;
  return c;
}

/// Independent Huber IRLS: normal equations, sorted-median MAD scale.
Vector irls_oracle(const Matrix& U, const Vector& y, double c) {
  Vector beta = (U.transpose() * U).ldlt().solve(U.transpose() * y);
  for (int it = 0; it < 500; ++it) {
    const Vector r = y - U * beta;
    std::vector<double> a(r.data(), r.data() + r.size());
    for (double& v : a) v = std::abs(v);
    std::sort(a.begin(), a.end());
    const std::size_t n = a.size();
    const double med = n % 2 ? a[n / 2] : 0.5 * (a[n / 2 - 1] + a[n / 2]);
    const double s = std::max(med / 0.6745, 1e-12);
    Vector w(r.size());
    for (Index i = 0; i < r.size(); ++i) w(i) = std::min(1.0, c / (std::abs(r(i)) / s));
    const Matrix UtW = U.transpose() * w.asDiagonal();
    const Vector next = (UtW * U).ldlt().solve(UtW * y);
    if ((next - beta).norm() < 1e-14) return next;
    beta = next;
  }
  return beta;
}

std::vector<NoiseMatrix> constant_noise(std::span<const TaskDataset> tasks, double v) {
  std::vector<NoiseMatrix> out;
  for (const auto& t : tasks) out.push_back(NoiseMatrix{Vector::Constant(t.size(), v)});
  return out;
}

}  // namespace

TEST_CASE("trend fit examples") {
  const Matrix ones = Matrix::Ones(3, 1);
  CHECK(fit_trend(ones, Vector::Constant(3, 2.0), config(Regression::ols))(0) == doctest::Approx(2.0));

  Matrix U(3, 2);
  U << 1, 0, 1, 1, 1, 2;
  const Vector y = (Vector(3) << 0, 1, 2).finished();
  for (Regression r : {Regression::ols, Regression::huber_irls}) {
    const Vector b = fit_trend(U, y, config(r));
    CHECK(b(0) == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(b(1) == doctest::Approx(1.0).epsilon(1e-10));
  }

  const Vector y_out = (Vector(3) << 0, 1, 100).finished();
  const Vector ols = fit_trend(U, y_out, config(Regression::ols));
  const Vector hub = fit_trend(U, y_out, config(Regression::huber_irls));
  const Vector truth = (Vector(2) << 0, 1).finished();
  CHECK((hub - truth).norm() < (ols - truth).norm());

  Matrix U6(6, 2);
  U6.col(0).setOnes();
  U6.col(1) << 0, 1, 2, 3, 4, 5;
  const Vector y6 = (Vector(6) << 0.1, 0.9, 2.05, 3.0, 40.0, 4.95).finished();
  const Vector hub6 = fit_trend(U6, y6, config(Regression::huber_irls));
  CHECK((hub6 - irls_oracle(U6, y6, 1.345)).norm() < 1e-6);
  CHECK((hub6 - truth).norm() < 0.2);
}

TEST_CASE("Huber fit agrees with an independent IRLS on random data with outliers") {
  Gen g(41);
  for (int trial = 0; trial < 30; ++trial) {
    CAPTURE(trial);
    const Index n = g.integer(8, 30);
    Matrix U(n, 2);
    U.col(0).setOnes();
    U.col(1) = g.vector(n, -3, 3);
    Vector y = U * g.vector(2, -2, 2) + g.normal_vector(n, 0.3);
    for (int k = 0; k < 2; ++k) y(g.integer(0, static_cast<int>(n) - 1)) += g.uniform(10, 50);
    const Vector hub = fit_trend(U, y, config(Regression::huber_irls));
    CHECK((hub - irls_oracle(U, y, 1.345)).norm() < 1e-6);
  }
}

TEST_CASE("OLS residuals are orthogonal to the basis") {
  Gen g(42);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = g.integer(4, 20), p = g.integer(1, 3);
    Matrix U(n, p);
    U.col(0).setOnes();
    if (p > 1) U.rightCols(p - 1) = g.points(n, p - 1, -2, 2);
    const Vector y = g.normal_vector(n, 2.0);
    const Vector b = fit_trend(U, y, config(Regression::ols));
    const Vector proj = U.householderQr().solve(Vector(y - U * b));
    CHECK(proj.norm() < 1e-6 * std::max(1.0, b.norm()));
  }
}

TEST_CASE("rank-deficient basis names the dependent column") {
  Matrix U(4, 3);
  U << 1, 0, 0, 1, 1, 2, 1, 2, 4, 1, 3, 6;
  try {
    fit_trend(U, Vector::Zero(4), config(Regression::ols));
    FAIL("expected rank deficiency");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::rank_deficient);
    const std::string msg = e.what();
    CHECK((msg.find("{1}") != std::string::npos || msg.find("{2}") != std::string::npos));
  }
  CHECK_THROWS_AS(fit_trend(Matrix::Ones(1, 2), Vector::Zero(1), config(Regression::ols)), Error);
  CHECK_THROWS_AS(fit_trend(Matrix::Ones(3, 1), Vector::Zero(2), config(Regression::ols)), Error);
}

TEST_CASE("pure-trend data stops immediately with the exact coefficients") {
  Gen g(43);
  const Vector beta_star = (Vector(2) << 1.5, -0.7).finished();
  std::vector<TaskDataset> tasks;
  for (int l = 0; l < 2; ++l) {
    const Matrix X = g.spread_points(8, 1, 10.0);
    TaskDataset t = make_task(l + 1, X, Vector::Zero(8));
    t.basis = Matrix(8, 2);
    t.basis.col(0).setOnes();
    t.basis.col(1) = X.col(0);
    const Vector z = t.basis * beta_star;
    for (Index i = 0; i < 8; ++i) t.measurements[static_cast<std::size_t>(i)].replicates = {z(i)};
    tasks.push_back(t);
  }
  const PooledDesign pooled = pool_designs(tasks, default_dedup_tolerance(tasks));
  HyperParams h;
  h.delta_sq = 4.0;
  const auto noise = constant_noise(tasks, 0.0);
  const FitResult fit = iterate_model(tasks, pooled, noise, KernelConfig{KernelKind::squared_exponential, 4.0}, h,
                                      em_config(h), trend_config(h));
  CHECK(fit.trace.iterations.size() <= 2);
  CHECK(fit.trace.stop != StopReason::iteration_cap);
  for (const auto& b : fit.model.state.beta_hat) CHECK((b - beta_star).norm() < 1e-8);
  for (const auto& a : fit.model.state.alpha_hat) CHECK(a.norm() < 1e-6);
}

TEST_CASE("one outer iteration equals fit-then-EM") {
  Gen g(44);
  std::vector<TaskDataset> tasks;
  for (int l = 0; l < 3; ++l) {
    const Matrix X = g.spread_points(6, 1, 6.0);
    Vector z(6);
    for (Index i = 0; i < 6; ++i) z(i) = std::sin(X(i, 0)) + 0.3 * l + g.normal(0.0, 0.05);
    tasks.push_back(make_task(l + 1, X, z));
  }
  const PooledDesign pooled = pool_designs(tasks, default_dedup_tolerance(tasks));
  HyperParams h;
  h.delta_sq = 2.0;
  h.k2_max = 1;
  h.k1_max = 30;
  const KernelConfig k{KernelKind::squared_exponential, 2.0};
  const auto noise = constant_noise(tasks, 0.01);
  EMConfig em = em_config(h);
  em.noise_floor = response_noise_floor(tasks);
  const FitResult fit = iterate_model(tasks, pooled, noise, k, h, em, trend_config(h));
  CHECK(fit.trace.iterations.size() == 1);
  CHECK(fit.trace.stop == StopReason::iteration_cap);

  std::vector<Vector> resid;
  for (const auto& t : tasks) {
    const Vector b = fit_trend(t.basis, sample_means(t), trend_config(h));
    resid.push_back(sample_means(t) - t.basis * b);
  }
  const EMResult direct = run_em(pooled, resid, noise, k, h, em);
  CHECK((direct.state.mu_alpha - fit.model.state.mu_alpha).norm() == 0.0);
  for (std::size_t l = 0; l < tasks.size(); ++l) {
    CHECK((direct.state.field_hat[l] - fit.model.state.field_hat[l]).norm() == 0.0);
  }
}

TEST_CASE("constant basis on a zero-mean field leaves structure to the residual model") {
  Gen g(45);
  std::vector<TaskDataset> tasks;
  for (int l = 0; l < 2; ++l) {
    const Matrix X = g.spread_points(12, 1, 4.0 * std::numbers::pi);
    Vector z(12);
    for (Index i = 0; i < 12; ++i) z(i) = std::sin(X(i, 0));
    tasks.push_back(make_task(l + 1, X, z));
  }
  const PooledDesign pooled = pool_designs(tasks, default_dedup_tolerance(tasks));
  HyperParams h;
  h.delta_sq = 2.0;
  h.k1_max = 50;
  const KernelConfig k{KernelKind::squared_exponential, 2.0};
  const auto noise = constant_noise(tasks, 1e-4);
  const FitResult fit = iterate_model(tasks, pooled, noise, k, h, em_config(h), trend_config(h));
  for (std::size_t l = 0; l < tasks.size(); ++l) {
    const double mean = sample_means(tasks[l]).mean();
    CHECK(std::abs(fit.model.state.beta_hat[l](0) - mean) < 0.3);
    CHECK(std::abs(mean) < 0.3);
  }
  // The residual model carries the sinusoid: fitted field tracks the detrended data.
  const auto& rows = pooled.index_maps[0];
  Vector fitted(12), target(12);
  for (Index i = 0; i < 12; ++i) {
    fitted(i) = fit.model.state.field_hat[0](rows[static_cast<std::size_t>(i)]);
    target(i) = sample_means(tasks[0])(i) - fit.model.state.beta_hat[0](0);
  }
  CHECK((fitted - target).norm() < 0.05 * target.norm());

  // Single pass of EM on the raw data agrees closely with the outer loop.
  std::vector<Vector> raw;
  for (const auto& t : tasks) raw.push_back(sample_means(t));
  const EMResult once = run_em(pooled, raw, noise, k, h, em_config(h));
  Vector once_fit(12);
  for (Index i = 0; i < 12; ++i) once_fit(i) = once.state.field_hat[0](rows[static_cast<std::size_t>(i)]);
  CHECK((once_fit - sample_means(tasks[0])).norm() < 0.05 * target.norm());
}

TEST_CASE("identical inputs give bitwise identical coefficients") {
  Gen g(46);
  std::vector<TaskDataset> tasks;
  for (int l = 0; l < 2; ++l) {
    const Matrix X = g.spread_points(7, 2, 5.0);
    tasks.push_back(make_task(l + 1, X, g.normal_vector(7)));
  }
  const PooledDesign pooled = pool_designs(tasks, default_dedup_tolerance(tasks));
  HyperParams h;
  h.delta_sq = 3.0;
  h.k1_max = 20;
  const KernelConfig k{KernelKind::squared_exponential, 3.0};
  const auto noise = constant_noise(tasks, 0.05);
  const FitResult a = iterate_model(tasks, pooled, noise, k, h, em_config(h), trend_config(h, Regression::huber_irls));
  const FitResult b = iterate_model(tasks, pooled, noise, k, h, em_config(h), trend_config(h, Regression::huber_irls));
  for (std::size_t l = 0; l < 2; ++l) CHECK((a.model.state.beta_hat[l].array() == b.model.state.beta_hat[l].array()).all());
}

TEST_CASE("outer trace records every iteration and a stop reason") {
  Gen g(47);
  std::vector<TaskDataset> tasks;
  for (int l = 0; l < 3; ++l) {
    const Matrix X = g.spread_points(8, 1, 10.0);
    Vector z(8);
    for (Index i = 0; i < 8; ++i) z(i) = 0.5 * l + 0.1 * X(i, 0) + std::cos(X(i, 0)) + g.normal(0.0, 0.1);
    TaskDataset t = make_task(l + 1, X, z);
    t.basis = Matrix(8, 2);
    t.basis.col(0).setOnes();
    t.basis.col(1) = X.col(0);
    tasks.push_back(t);
  }
  const PooledDesign pooled = pool_designs(tasks, default_dedup_tolerance(tasks));
  HyperParams h;
  h.delta_sq = 2.0;
  h.k1_max = 20;
  h.k2_max = 4;
  const auto noise = constant_noise(tasks, 0.01);
  const FitResult fit = iterate_model(tasks, pooled, noise, KernelConfig{KernelKind::squared_exponential, 2.0}, h,
                                      em_config(h), trend_config(h));
  CHECK(fit.trace.iterations.size() >= 1);
  CHECK(fit.trace.iterations.size() <= 4);
  CHECK(fit.trace.em.size() == fit.trace.iterations.size());
  CHECK(std::isnan(fit.trace.iterations.front().mean_delta_beta));
  if (fit.trace.iterations.size() < 4) CHECK(fit.trace.stop != StopReason::iteration_cap);
  for (std::size_t j = 1; j < fit.trace.iterations.size(); ++j) {
    CHECK(std::isfinite(fit.trace.iterations[j].mean_delta_beta));
  }
  CHECK_THROWS_AS(fit.model.position(99), Error);
  CHECK(fit.model.position(2) == 1);
}

TEST_CASE("trend config validation") {
  TrendConfig c;
  c.huber_c = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrendConfig{};
  c.k2_max = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}
