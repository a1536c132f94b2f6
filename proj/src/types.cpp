#include "hmtmf/types.hpp"

#include <cmath>
#include <numeric>
#include <set>

namespace hmtmf {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::dimension_mismatch: return "dimension mismatch";
    case ErrorCode::empty_input: return "empty input";
    case ErrorCode::kernel_degeneracy: return "kernel degeneracy";
    case ErrorCode::insufficient_replicates: return "insufficient replicates";
    case ErrorCode::rank_deficient: return "rank deficient";
    case ErrorCode::unknown_task: return "unknown task";
    case ErrorCode::numerical: return "numerical failure";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

const FidelitySpec& find_fidelity(const FidelityTable& table, const std::string& id) {
  for (const auto& f : table) {
    if (f.id == id) return f;
  }
  throw Error(ErrorCode::invalid_argument, "unknown fidelity id '" + id + "'");
}

void validate(const FidelityTable& table) {
  std::set<std::string> seen;
  for (const auto& f : table) {
    if (!(f.sigma >= 0.0) || !std::isfinite(f.sigma)) {
      throw Error(ErrorCode::invalid_argument, "fidelity '" + f.id + "' has negative or non-finite sigma");
    }
    if (!seen.insert(f.id).second) {
      throw Error(ErrorCode::invalid_argument, "duplicate fidelity id '" + f.id + "'");
    }
  }
}

bool Box::contains(const Vector& x, double tol) const {
  if (lower.size() == 0) return true;
  if (x.size() != lower.size()) return false;
  return ((x - lower).array() >= -tol).all() && ((upper - x).array() >= -tol).all();
}

Index TaskDataset::dimension() const {
  if (!measurements.empty()) return measurements.front().location.size();
  return domain.lower.size();
}

Matrix TaskDataset::locations() const {
  const Index d = dimension();
  Matrix X(size(), d);
  for (Index i = 0; i < size(); ++i) X.row(i) = measurements[static_cast<std::size_t>(i)].location.transpose();
  return X;
}

void validate(const TaskDataset& task) {
  const std::string who = "task " + std::to_string(task.task_id);
  if (task.measurements.empty()) throw Error(ErrorCode::empty_input, who + " has no measurements");
  const Index d = task.dimension();
  if (task.basis.rows() != task.size()) {
    throw Error(ErrorCode::dimension_mismatch, who + ": basis has " + std::to_string(task.basis.rows()) +
                                                   " rows for " + std::to_string(task.size()) + " measurements");
  }
  if (task.basis.cols() < 1) throw Error(ErrorCode::invalid_argument, who + ": basis needs at least one column");
  const double tol = 1e-9 * std::max(1.0, task.domain.lower.size() ? task.domain.diagonal() : 1.0);
  for (std::size_t i = 0; i < task.measurements.size(); ++i) {
    const auto& m = task.measurements[i];
    if (m.location.size() != d) {
      throw Error(ErrorCode::dimension_mismatch, who + ": measurement " + std::to_string(i) + " has wrong dimension");
    }
    if (m.replicates.empty()) {
      throw Error(ErrorCode::insufficient_replicates, who + ": measurement " + std::to_string(i) + " has no replicates");
    }
    if (!task.domain.contains(m.location, tol)) {
      throw Error(ErrorCode::invalid_argument, who + ": measurement " + std::to_string(i) + " lies outside the domain");
    }
  }
}

double default_dedup_tolerance(std::span<const TaskDataset> tasks) {
  Vector lo, hi;
  for (const auto& t : tasks) {
    for (const auto& m : t.measurements) {
      if (lo.size() == 0) {
        lo = hi = m.location;
      } else if (m.location.size() == lo.size()) {
        lo = lo.cwiseMin(m.location);
        hi = hi.cwiseMax(m.location);
      }
    }
  }
  const double diag = lo.size() ? (hi - lo).norm() : 0.0;
  return 1e-9 * (diag > 0.0 ? diag : 1.0);
}

namespace {

Index find_or_append(std::vector<Vector>& points, const Vector& x, double tau) {
  for (std::size_t k = 0; k < points.size(); ++k) {
    if ((points[k] - x).norm() <= tau) return static_cast<Index>(k);
  }
  points.push_back(x);
  return static_cast<Index>(points.size() - 1);
}

Matrix stack_rows(const std::vector<Vector>& points, Index d) {
  Matrix out(static_cast<Index>(points.size()), d);
  for (std::size_t k = 0; k < points.size(); ++k) out.row(static_cast<Index>(k)) = points[k].transpose();
  return out;
}

}  // namespace

PooledDesign pool_designs(std::span<const TaskDataset> tasks, double tau_dup) {
  if (tasks.empty()) throw Error(ErrorCode::empty_input, "pool_designs needs at least one task");
  if (!(tau_dup > 0.0)) throw Error(ErrorCode::invalid_argument, "dedup tolerance must be positive");
  const Index d = tasks.front().dimension();
  std::vector<Vector> points;
  PooledDesign pooled;
  for (const auto& task : tasks) {
    if (task.dimension() != d) {
      throw Error(ErrorCode::dimension_mismatch, "task " + std::to_string(task.task_id) + " has dimension " +
                                                     std::to_string(task.dimension()) + ", expected " +
                                                     std::to_string(d));
    }
    std::vector<Index> map;
    map.reserve(task.measurements.size());
    for (const auto& m : task.measurements) {
      if (m.location.size() != d) throw Error(ErrorCode::dimension_mismatch, "measurement location dimension");
      map.push_back(find_or_append(points, m.location, tau_dup));
    }
    pooled.index_maps.push_back(std::move(map));
  }
  pooled.points = stack_rows(points, d);
  return pooled;
}

PooledDesign pool_points(const Matrix& points, double tau_dup) {
  if (!(tau_dup > 0.0)) throw Error(ErrorCode::invalid_argument, "dedup tolerance must be positive");
  std::vector<Vector> unique;
  std::vector<Index> map;
  for (Index i = 0; i < points.rows(); ++i) map.push_back(find_or_append(unique, points.row(i).transpose(), tau_dup));
  PooledDesign pooled;
  pooled.points = stack_rows(unique, points.cols());
  pooled.index_maps.push_back(std::move(map));
  return pooled;
}

Vector sample_means(const TaskDataset& task) {
  Vector z(task.size());
  for (Index i = 0; i < task.size(); ++i) {
    const auto& reps = task.measurements[static_cast<std::size_t>(i)].replicates;
    if (reps.empty()) {
      throw Error(ErrorCode::insufficient_replicates, "task " + std::to_string(task.task_id) + " measurement " +
                                                          std::to_string(i) + " has no replicates");
    }
    z(i) = std::accumulate(reps.begin(), reps.end(), 0.0) / static_cast<double>(reps.size());
  }
  return z;
}

void HyperParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::invalid_argument, std::string(name) + " must be positive");
  };
  positive(delta_sq, "delta_sq");
  positive(nu, "nu");
  positive(lambda, "lambda");
  positive(t1, "t1");
  positive(t2, "t2");
  positive(t3, "t3");
  positive(t4, "t4");
  positive(jitter, "jitter");
  if (k1_max < 1) throw Error(ErrorCode::invalid_argument, "k1_max must be >= 1");
  if (k2_max < 1) throw Error(ErrorCode::invalid_argument, "k2_max must be >= 1");
}

}  // namespace hmtmf
