#include "hmtmf/synth.hpp"

#include <cmath>
#include <numbers>

namespace hmtmf {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(splitmix64(splitmix64(base) ^ a) ^ (b * 0xd6e8feb86659fd93ULL));
}

// ---------------------------------------------------------------------------
// 1D benchmark

namespace {

constexpr std::array<std::array<double, 3>, 3> kTask1D = {{{0.1, 0.1, 0.2}, {5.0, -0.2, 0.4}, {0.3, 0.3, 0.3}}};

double uniform(Rng& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

// Task 2 lives on [max(lower, 5), upper], task 3 on [lower, upper - 3] with
// [7, upper - 3] shifted up by 3 so that (7, 10) stays empty.
double draw_location_1d(const Bench1DConfig& cfg, int task_index, int i, Rng& rng) {
  double a = cfg.lower, b = cfg.upper;
  if (cfg.gaps && task_index == 1) a = std::max(cfg.lower, 5.0);
  if (cfg.gaps && task_index == 2) b = cfg.upper - 3.0;
  const double u = cfg.stratified ? (i + uniform(rng, 0.0, 1.0)) / cfg.n_points_per_task : uniform(rng, 0.0, 1.0);
  const double x = a + u * (b - a);
  return cfg.gaps && task_index == 2 && x >= 7.0 ? x + 3.0 : x;
}

void add_measurement_1d(TaskDataset& task, const Bench1DConfig& cfg, int task_index, double x, bool high, Rng& rng) {
  std::normal_distribution<double> noise(0.0, high ? cfg.sigma_high : cfg.sigma_low);
  Measurement m;
  m.location = Vector::Constant(1, x);
  m.fidelity_id = high ? "high" : "low";
  const double y = truth_1d(task_index, x);
  for (int r = 0; r < cfg.replicates; ++r) m.replicates.push_back(y + noise(rng));
  task.measurements.push_back(std::move(m));
}

void refresh_basis_1d(TaskDataset& task) {
  Vector x(task.size());
  for (Index i = 0; i < task.size(); ++i) x(i) = task.measurements[static_cast<std::size_t>(i)].location(0);
  task.basis = basis_1d(x);
}

}  // namespace

void Bench1DConfig::validate() const {
  if (n_points_per_task < 3) throw Error(ErrorCode::invalid_argument, "need at least 3 points per task");
  if (replicates < 1) throw Error(ErrorCode::invalid_argument, "replicates must be >= 1");
  if (!(sigma_low >= 0.0) || !(sigma_high >= 0.0)) throw Error(ErrorCode::invalid_argument, "gauge sigma must be >= 0");
  if (!(upper > lower)) throw Error(ErrorCode::invalid_argument, "empty 1D domain");
  if (gaps && (lower > 0.0 || upper < 20.0)) throw Error(ErrorCode::invalid_argument, "gaps need the domain [0, 20]");
}

double truth_1d(int task_index, double x) {
  if (task_index < 0 || task_index > 2) throw Error(ErrorCode::unknown_task, "1D benchmark has tasks 0..2");
  const auto& [a, b, c] = kTask1D[static_cast<std::size_t>(task_index)];
  const double pi = std::numbers::pi;
  return a + b * x + std::sin(pi * x / 5.0) + c * std::sin(4.0 * pi * x / 5.0);
}

Matrix basis_1d(const Vector& x) {
  Matrix U(x.size(), 2);
  U.col(0).setOnes();
  U.col(1) = x;
  return U;
}

Bench1D gen_1d_tasks(const Bench1DConfig& cfg) {
  cfg.validate();
  Bench1D out;
  out.fidelities = {{"low", cfg.sigma_low, false}, {"high", cfg.sigma_high, false}};
  Rng rng(derive_seed(cfg.seed, 1));
  for (int l = 0; l < 3; ++l) {
    TaskDataset task;
    task.task_id = l + 1;
    task.domain = Box{Vector::Constant(1, cfg.lower), Vector::Constant(1, cfg.upper)};
    for (int i = 0; i < cfg.n_points_per_task; ++i) {
      const double x = draw_location_1d(cfg, l, i, rng);
      const bool high = cfg.assignment == GaugeAssignment::alternate ? (i % 2 == 1)
                                                                      : std::bernoulli_distribution(0.5)(rng);
      add_measurement_1d(task, cfg, l, x, high, rng);
    }
    refresh_basis_1d(task);
    out.tasks.push_back(std::move(task));
  }
  return out;
}

void append_1d_points(Bench1D& bench, const Bench1DConfig& cfg, int task_index, const std::vector<double>& xs,
                      Rng& rng) {
  if (task_index < 0 || static_cast<std::size_t>(task_index) >= bench.tasks.size()) {
    throw Error(ErrorCode::unknown_task, "no task at index " + std::to_string(task_index));
  }
  TaskDataset& task = bench.tasks[static_cast<std::size_t>(task_index)];
  for (double x : xs) add_measurement_1d(task, cfg, task_index, x, std::bernoulli_distribution(0.5)(rng), rng);
  refresh_basis_1d(task);
}

Vector dense_grid_1d(double lower, double upper, int points) {
  if (points < 2) throw Error(ErrorCode::invalid_argument, "grid needs at least 2 points");
  return Vector::LinSpaced(points, lower, upper);
}

// ---------------------------------------------------------------------------
// Engine-like benchmark

std::vector<std::pair<double, double>> gauge_pairs_table() {
  return {{0.1, 0.5}, {0.1, 2.5}, {0.1, 5.0}, {0.1, 12.5}, {0.5, 2.5},
          {0.5, 5.0}, {0.5, 12.5}, {2.5, 5.0}, {2.5, 12.5}};
}

double gauge_std(double percent, double mean_height) { return percent / 100.0 * mean_height; }

void EngineBenchConfig::validate() const {
  if (n_tasks < 1) throw Error(ErrorCode::invalid_argument, "n_tasks must be >= 1");
  if (n_low < 0 || n_high < 0 || n_low + n_high < 3) throw Error(ErrorCode::invalid_argument, "too few design points");
  if (n_test < 1) throw Error(ErrorCode::invalid_argument, "n_test must be >= 1");
  if (!(p_high >= 0.0) || !(p_low >= 0.0)) throw Error(ErrorCode::invalid_argument, "gauge percent must be >= 0");
  if (!(std::abs(mrr_correlation) < 1.0)) throw Error(ErrorCode::invalid_argument, "|mrr_correlation| must be < 1");
  if (!(field_delta_sq > 0.0) || features < 1) throw Error(ErrorCode::invalid_argument, "field settings");
  if (lower.size() != upper.size() || lower.size() == 0 || !((upper - lower).array() > 0.0).all()) {
    throw Error(ErrorCode::invalid_argument, "engine domain box");
  }
}

FourierField FourierField::sample(int features, Index dim, double delta_sq, Rng& rng) {
  FourierField f;
  std::normal_distribution<double> w(0.0, std::sqrt(2.0 / delta_sq));
  std::uniform_real_distribution<double> b(0.0, 2.0 * std::numbers::pi);
  f.omega.resize(features, dim);
  f.phase.resize(features);
  for (Index k = 0; k < features; ++k) {
    for (Index j = 0; j < dim; ++j) f.omega(k, j) = w(rng);
    f.phase(k) = b(rng);
  }
  return f;
}

Vector FourierField::operator()(const Matrix& X) const {
  const Matrix arg = (X * omega.transpose()).rowwise() + phase.transpose();
  return std::sqrt(2.0 / static_cast<double>(omega.rows())) * arg.array().cos().rowwise().sum().matrix();
}

Vector EngineSurface::height(const Matrix& X) const {
  const Vector field = shared(X) + similarity * own(X);
  return (mean_height + offset + (X * slope).array() + amplitude * field.array()).matrix();
}

Vector EngineSurface::independent_field(const Matrix& X) const {
  return independent(X) + similarity * independent_own(X);
}

Vector EngineSurface::mrr(const Matrix& X) const {
  const Vector zs = (height(X).array() - z_mean) / z_sd;
  const Vector raw = independent_field(X);
  const Vector v = (raw.array() - v_mean - v_coef * zs.array()) / v_sd;
  return rho * zs + std::sqrt(1.0 - rho * rho) * v;
}

Matrix engine_basis(const EngineSurface& surface, const Matrix& X) {
  Matrix U(X.rows(), 2);
  U.col(0).setOnes();
  U.col(1) = surface.mrr(X);
  return U;
}

namespace {

Matrix uniform_points(const Vector& lower, const Vector& upper, Index n, Rng& rng) {
  Matrix X(n, lower.size());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < lower.size(); ++j) X(i, j) = uniform(rng, lower(j), upper(j));
  return X;
}

Matrix reference_lattice(const Vector& lower, const Vector& upper) {
  if (lower.size() != 2) {
    Rng rng(7);
    return uniform_points(lower, upper, 4000, rng);
  }
  constexpr Index nx = 80, ny = 40;
  Matrix X(nx * ny, 2);
  for (Index i = 0; i < nx; ++i)
    for (Index j = 0; j < ny; ++j) {
      X(i * ny + j, 0) = lower(0) + (upper(0) - lower(0)) * (static_cast<double>(i) + 0.5) / nx;
      X(i * ny + j, 1) = lower(1) + (upper(1) - lower(1)) * (static_cast<double>(j) + 0.5) / ny;
    }
  return X;
}

double population_sd(const Vector& v) { return std::sqrt((v.array() - v.mean()).square().mean()); }

}  // namespace

EngineBench gen_engine_tasks(const EngineBenchConfig& cfg) {
  cfg.validate();
  const Index dim = cfg.lower.size();
  EngineBench out;
  out.fidelities = {{"high", gauge_std(cfg.p_high, cfg.mean_height), true},
                    {"low", gauge_std(cfg.p_low, cfg.mean_height), true}};

  Rng truth_rng(derive_seed(cfg.seed, 0xA1));
  const FourierField shared = FourierField::sample(cfg.features, dim, cfg.field_delta_sq, truth_rng);
  const FourierField shared_v = FourierField::sample(cfg.features, dim, cfg.field_delta_sq, truth_rng);
  const Matrix lattice = reference_lattice(cfg.lower, cfg.upper);
  for (int l = 0; l < cfg.n_tasks; ++l) {
    EngineSurface s;
    s.mean_height = cfg.mean_height;
    s.amplitude = cfg.field_amplitude;
    s.similarity = cfg.similarity;
    s.offset = uniform(truth_rng, -1.0, 1.0);
    s.slope.resize(dim);
    for (Index j = 0; j < dim; ++j) s.slope(j) = uniform(truth_rng, -cfg.trend_slope, cfg.trend_slope);
    s.shared = shared;
    s.own = FourierField::sample(cfg.features, dim, cfg.field_delta_sq, truth_rng);
    s.independent = shared_v;
    s.independent_own = FourierField::sample(cfg.features, dim, cfg.field_delta_sq, truth_rng);
    s.rho = cfg.mrr_correlation;
    // Standardize on the lattice so the lattice correlation is exactly rho.
    const Vector z = s.height(lattice);
    s.z_mean = z.mean();
    s.z_sd = population_sd(z);
    const Vector zs = (z.array() - s.z_mean) / s.z_sd;
    const Vector v = s.independent_field(lattice);
    s.v_mean = v.mean();
    s.v_coef = (v.array() - s.v_mean).matrix().dot(zs) / static_cast<double>(zs.size());
    s.v_sd = population_sd((v.array() - s.v_mean - s.v_coef * zs.array()).matrix());
    out.surfaces.push_back(std::move(s));
  }

  Rng test_rng(derive_seed(cfg.seed, 0xB2));
  out.test_points = uniform_points(cfg.lower, cfg.upper, cfg.n_test, test_rng);

  const auto rep = static_cast<std::uint64_t>(cfg.replication);
  for (int l = 0; l < cfg.n_tasks; ++l) {
    const EngineSurface& s = out.surfaces[static_cast<std::size_t>(l)];
    Rng loc_rng(derive_seed(cfg.seed, 0xC3 + (rep << 8), static_cast<std::uint64_t>(l)));
    Rng noise_rng(derive_seed(cfg.seed, 0xD4 + (rep << 8), static_cast<std::uint64_t>(l)));
    std::normal_distribution<double> normal(0.0, 1.0);
    const Matrix X = uniform_points(cfg.lower, cfg.upper, cfg.n_high + cfg.n_low, loc_rng);
    const Vector z = s.height(X);
    TaskDataset task;
    task.task_id = l + 1;
    task.domain = Box{cfg.lower, cfg.upper};
    for (Index i = 0; i < X.rows(); ++i) {
      const bool high = i < cfg.n_high;
      const double sd = gauge_std(high ? cfg.p_high : cfg.p_low, cfg.mean_height);
      Measurement m;
      m.location = X.row(i).transpose();
      m.fidelity_id = high ? "high" : "low";
      m.replicates.push_back(z(i) + sd * normal(noise_rng));
      task.measurements.push_back(std::move(m));
    }
    task.basis = engine_basis(s, X);
    out.tasks.push_back(std::move(task));
    out.test_basis.push_back(engine_basis(s, out.test_points));
    out.truth.push_back(s.height(out.test_points));
  }
  return out;
}

}  // namespace hmtmf
