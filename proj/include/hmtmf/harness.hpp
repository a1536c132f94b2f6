#pragma once

// Experiment runner: generates or loads benchmarks, fits the multi-task
// model and both baselines, scores predictions and writes reports.

#include "hmtmf/baselines.hpp"
#include "hmtmf/noise.hpp"
#include "hmtmf/synth.hpp"
#include "hmtmf/trend.hpp"

#include <filesystem>
#include <functional>
#include <optional>

namespace hmtmf {

/// Root-mean-square error; throws on length mismatch or empty input.
double rmse(const Vector& pred, const Vector& truth);

/// Percentage improvement of the multi-task model over a baseline.
double delta_rmse(double rmse_baseline, double rmse_hmtmf);

enum class Benchmark { one_d, engine, file };
enum class Method { hmtmf, egmtl, sk };

const char* to_string(Benchmark b) noexcept;
const char* to_string(Method m) noexcept;
Benchmark parse_benchmark(const std::string& s);
Method parse_method(const std::string& s);

/// Everything one fit needs besides the data.
struct FitSettings {
  KernelConfig kernel;
  HyperParams hyper;
  NoisePolicy noise_policy = NoisePolicy::declared_variance_fallback;
  Regression regression = Regression::ols;
};

/// Default settings of the 1D and engine benchmarks.
FitSettings default_settings(Benchmark b);

struct ExperimentConfig {
  Benchmark benchmark = Benchmark::one_d;
  std::vector<Method> methods{Method::hmtmf, Method::egmtl, Method::sk};
  std::vector<int> gauge_pairs;  // indices into gauge_pairs_table(); empty selects all
  std::optional<std::pair<double, double>> custom_pair;
  int n_replications = 10;
  std::uint64_t seed = 0;
  std::optional<FitSettings> settings;  // benchmark defaults when empty
  bool tune = false;
  Bench1DConfig one_d;
  EngineBenchConfig engine;
  std::filesystem::path dataset;  // Benchmark::file
  std::filesystem::path output_dir = "results";
  int jobs = 1;
  bool write_curves = true;

  void validate() const;
};

struct RunRecord {
  int pair_index = 0;
  double p_high = 0.0;
  double p_low = 0.0;
  int replication = 0;
  Method method = Method::hmtmf;
  int task_id = 0;
  double rmse = 0.0;
  bool ok = true;
  std::string error;
  double sigma_sq = 0.0;     // shared noise estimate (egmtl)
  int outer_iterations = 0;  // multi-task methods
};

/// Curve data for one task and method over the 1D dense grid.
struct CurveData {
  Method method = Method::hmtmf;
  int task_id = 0;
  Vector x, truth, mean, variance;
};

struct ExperimentReport {
  std::vector<std::pair<double, double>> pairs;  // evaluated gauge pairs in order
  std::vector<int> task_ids;
  std::vector<RunRecord> records;  // ordered by (pair, replication, method, task)
  std::vector<CurveData> curves;   // replication 0 of the 1D benchmark
  std::optional<FitSettings> tuned;
};

/// Mean over successful replications of the per-task percentage improvement
/// over `baseline`; NaN where no replication succeeded. Last entry is the task average.
std::vector<double> mean_delta(const ExperimentReport& report, std::size_t pair, Method baseline);

ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// results_raw.csv, rmse_summary.csv, delta_table.csv, summary.json and curves/.
void write_report(const ExperimentConfig& cfg, const ExperimentReport& report, const std::filesystem::path& dir);

/// Output directory after the HMTMF_OUTPUT_DIR override.
std::filesystem::path resolve_output_dir(const std::filesystem::path& requested);

/// Per-task predictions of one method on shared query points.
struct MethodPredictions {
  std::vector<Vector> mean;
  std::vector<Vector> variance;
  double sigma_sq = 0.0;
  int outer_iterations = 0;
};

/// Fits `method` on `tasks` and predicts task l at `queries` with basis `query_basis[l]`.
MethodPredictions fit_and_predict(Method method, std::span<const TaskDataset> tasks, const FidelityTable& fidelities,
                                  const FitSettings& settings, const Matrix& queries,
                                  std::span<const Matrix> query_basis);

/// Fits the multi-task model with the given settings.
FitResult fit_hmtmf(std::span<const TaskDataset> tasks, const FidelityTable& fidelities, const FitSettings& settings);

/// Grid search over (delta_sq, nu, lambda) scored by RMSE on a 20% holdout
/// of every task. delta_sq runs over a geometric grid scaled by the squared
/// bounding-box diagonal of the designs.
FitSettings tune_settings(std::span<const TaskDataset> tasks, const FidelityTable& fidelities, const FitSettings& base,
                          std::uint64_t seed);

/// Runs `n` independent jobs on `threads` workers; results land at their index.
void parallel_for(int n, int threads, const std::function<void(int)>& job);

}  // namespace hmtmf
