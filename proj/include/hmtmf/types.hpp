#pragma once

// Shared data model: tasks with replicated measurements, fidelity sources,
// the pooled design and the fitted model parameters.

#include <Eigen/Dense>

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmtmf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  empty_input,
  kernel_degeneracy,
  insufficient_replicates,
  rank_deficient,
  unknown_task,
  numerical,
  io,
};

const char* to_string(ErrorCode code) noexcept;

/// Structured failure raised by every module. The code identifies the
/// failure class, the message names the offending input.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// A measurement source (gauge) with known intrinsic standard deviation.
struct FidelitySpec {
  std::string id;
  double sigma = 0.0;
  bool declared_variance_known = false;
};

using FidelityTable = std::vector<FidelitySpec>;

const FidelitySpec& find_fidelity(const FidelityTable& table, const std::string& id);
void validate(const FidelityTable& table);

struct Measurement {
  Vector location;
  std::vector<double> replicates;
  std::string fidelity_id;
};

/// Axis-aligned domain box.
struct Box {
  Vector lower;
  Vector upper;

  bool contains(const Vector& x, double tol = 0.0) const;
  double diagonal() const { return (upper - lower).norm(); }
};

/// One task: design points with replicated responses and basis values.
/// Row i of `basis` holds U_l(x_i) for measurement i.
struct TaskDataset {
  int task_id = 0;
  std::vector<Measurement> measurements;
  Matrix basis;
  Box domain;

  Index size() const { return static_cast<Index>(measurements.size()); }
  Index dimension() const;
  Matrix locations() const;
};

void validate(const TaskDataset& task);

/// Union of all task designs with duplicates merged.
struct PooledDesign {
  Matrix points;  // n x d
  std::vector<std::vector<Index>> index_maps;  // task row -> pooled row

  Index size() const { return points.rows(); }
  Index dimension() const { return points.cols(); }
};

/// 1e-9 times the diagonal of the bounding box of all task locations.
double default_dedup_tolerance(std::span<const TaskDataset> tasks);

PooledDesign pool_designs(std::span<const TaskDataset> tasks, double tau_dup);

/// Deduplicates the rows of a point set; the single-task form of pool_designs.
PooledDesign pool_points(const Matrix& points, double tau_dup);

Vector sample_means(const TaskDataset& task);

struct HyperParams {
  double delta_sq = 80.0;
  double nu = 1.0;
  double lambda = 1e-3;
  double t1 = 1e-6;
  double t2 = 1e-6;
  double t3 = 1e-4;
  double t4 = 1e-4;
  int k1_max = 200;
  int k2_max = 5;
  double jitter = 1e-10;  // relative to the mean diagonal

  void validate() const;
};

/// Fitted multi-task parameters over the pooled design.
///
/// The coefficient view (mu_alpha, C_alpha, alpha_hat, C_alpha_l) and the
/// field view (field_mean = kappa mu_alpha, field_cov = kappa C_alpha kappa,
/// field_hat = kappa alpha_hat, field_cov_l = kappa C_alpha_l kappa) describe
/// the same parameters. Estimation runs on the field view; the coefficient
/// view is derived from it with kappa solves.
struct ModelState {
  Vector mu_alpha;
  Matrix C_alpha;
  std::vector<Vector> alpha_hat;
  std::vector<Matrix> C_alpha_l;
  std::vector<Vector> beta_hat;
  std::vector<Vector> sigma_eps;

  Vector field_mean;
  Matrix field_cov;
  std::vector<Vector> field_hat;
  std::vector<Matrix> field_cov_l;

  Index tasks() const { return static_cast<Index>(field_hat.size()); }
};

}  // namespace hmtmf
