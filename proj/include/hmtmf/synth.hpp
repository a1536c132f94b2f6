#pragma once

// Seeded benchmark generators: the three-task 1D example and engine-like
// 2D surfaces measured by two gauges of different repeatability.

#include "hmtmf/types.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <utility>

namespace hmtmf {

/// splitmix64 finalizer; derive_seed mixes a base seed with stream labels.
std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) noexcept;

using Rng = std::mt19937_64;

enum class GaugeAssignment { random, alternate };

struct Bench1DConfig {
  int n_points_per_task = 10;
  int replicates = 3;
  double sigma_low = 0.2;
  double sigma_high = 0.05;
  double lower = 0.0;
  double upper = 20.0;
  GaugeAssignment assignment = GaugeAssignment::random;
  // Task 2 unobserved on [0, 5] and task 3 unobserved on [7, 10].
  bool gaps = false;
  // One uniform draw per equal-width stratum of the task's sampling range.
  bool stratified = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Bench1D {
  std::vector<TaskDataset> tasks;
  FidelityTable fidelities;
};

/// y_i(x) = a_i + b_i x + sin(pi x / 5) + c_i sin(4 pi x / 5), task index 0..2.
double truth_1d(int task_index, double x);

/// Basis row [1, x].
Matrix basis_1d(const Vector& x);

Bench1D gen_1d_tasks(const Bench1DConfig& cfg);

/// Adds measurements of task `task_index` at `xs`, gauges and noise drawn from `rng`.
void append_1d_points(Bench1D& bench, const Bench1DConfig& cfg, int task_index, const std::vector<double>& xs,
                      Rng& rng);

/// Evenly spaced grid of `points` values over [lower, upper].
Vector dense_grid_1d(double lower, double upper, int points = 1001);

/// Gauge repeatability pairs (high-resolution percent, low-resolution percent).
std::vector<std::pair<double, double>> gauge_pairs_table();

/// Gauge standard deviation: percent of the mean surface height.
double gauge_std(double percent, double mean_height);

struct EngineBenchConfig {
  int n_tasks = 3;
  int n_low = 25;
  int n_high = 25;
  int n_test = 15000;
  double p_high = 0.1;
  double p_low = 0.5;
  double mrr_correlation = 0.7;
  double mean_height = 20.0;
  double similarity = 0.1;        // per-task residual perturbation, relative to the shared field
  double field_amplitude = 3.0;   // std of the shared residual field
  double field_delta_sq = 80.0;   // squared length scale of the residual field
  double trend_slope = 0.02;      // max |slope| of per-task linear trends per unit length
  Vector lower = Vector::Zero(2);
  Vector upper = (Vector(2) << 100.0, 50.0).finished();
  int features = 400;             // random Fourier features per field
  std::uint64_t seed = 0;         // fixes the true surfaces and the test points
  int replication = 0;            // varies design locations and noise draws

  void validate() const;
};

/// Smooth random field: sqrt(2/D) sum cos(w_k . x + b_k), w_k ~ N(0, 2/delta_sq I).
/// Approximates a unit-variance sample path with kernel exp(-|d|^2 / delta_sq).
struct FourierField {
  Matrix omega;  // D x d
  Vector phase;

  static FourierField sample(int features, Index dim, double delta_sq, Rng& rng);
  Vector operator()(const Matrix& X) const;
};

/// True surface and MRR covariate of one engine-like task.
struct EngineSurface {
  double mean_height = 20.0;
  double amplitude = 1.0;
  double similarity = 0.1;
  double offset = 0.0;
  Vector slope;
  FourierField shared;
  FourierField own;
  // MRR = rho * (Z - z_mean) / z_sd + sqrt(1 - rho^2) * (V - v_mean - v_coef * zs) / v_sd,
  // V = independent + similarity * independent_own, shared across tasks like the height field.
  FourierField independent;
  FourierField independent_own;
  double rho = 0.7;
  double z_mean = 0.0, z_sd = 1.0, v_mean = 0.0, v_coef = 0.0, v_sd = 1.0;

  Vector height(const Matrix& X) const;
  Vector independent_field(const Matrix& X) const;
  Vector mrr(const Matrix& X) const;
};

struct EngineBench {
  std::vector<EngineSurface> surfaces;
  std::vector<TaskDataset> tasks;
  FidelityTable fidelities;
  Matrix test_points;
  std::vector<Matrix> test_basis;  // [1, MRR_l] at the test points
  std::vector<Vector> truth;       // Z_l at the test points
};

/// Builds surfaces, measurements and the test set.
EngineBench gen_engine_tasks(const EngineBenchConfig& cfg);

/// Basis rows [1, MRR_l(x)].
Matrix engine_basis(const EngineSurface& surface, const Matrix& X);

}  // namespace hmtmf
