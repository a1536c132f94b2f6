#include "hmtmf/harness.hpp"

#include "hmtmf/io.hpp"
#include "hmtmf/predictor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

namespace hmtmf {

double rmse(const Vector& pred, const Vector& truth) {
  if (pred.size() != truth.size()) throw Error(ErrorCode::dimension_mismatch, "rmse inputs differ in length");
  if (pred.size() == 0) throw Error(ErrorCode::empty_input, "rmse of empty vectors");
  return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(pred.size()));
}

double delta_rmse(double rmse_baseline, double rmse_hmtmf) {
  if (!(rmse_baseline > 0.0)) throw Error(ErrorCode::invalid_argument, "baseline RMSE must be positive");
  return (rmse_baseline - rmse_hmtmf) / rmse_baseline * 100.0;
}

const char* to_string(Benchmark b) noexcept {
  switch (b) {
    case Benchmark::one_d: return "one_d";
    case Benchmark::engine: return "engine";
    case Benchmark::file: return "file";
  }
  return "unknown";
}

const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::hmtmf: return "hmtmf";
    case Method::egmtl: return "egmtl";
    case Method::sk: return "sk";
  }
  return "unknown";
}

Benchmark parse_benchmark(const std::string& s) {
  if (s == "one_d" || s == "1d") return Benchmark::one_d;
  if (s == "engine") return Benchmark::engine;
  if (s == "file") return Benchmark::file;
  throw Error(ErrorCode::invalid_argument, "unknown benchmark '" + s + "'");
}

Method parse_method(const std::string& s) {
  if (s == "hmtmf") return Method::hmtmf;
  if (s == "egmtl") return Method::egmtl;
  if (s == "sk") return Method::sk;
  throw Error(ErrorCode::invalid_argument, "unknown method '" + s + "'");
}

FitSettings default_settings(Benchmark b) {
  FitSettings s;
  if (b == Benchmark::one_d) {
    s.hyper.delta_sq = 3.0;
    s.noise_policy = NoisePolicy::sample_variance_only;
    s.regression = Regression::ols;
  } else {
    s.hyper.delta_sq = 80.0;
    s.noise_policy = NoisePolicy::declared_variance_fallback;
    s.regression = Regression::huber_irls;
  }
  s.hyper.nu = 1.0;
  s.hyper.lambda = 1e-3;
  s.kernel.delta_sq = s.hyper.delta_sq;
  return s;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw Error(ErrorCode::invalid_argument, "method set is empty");
  if (n_replications < 1) throw Error(ErrorCode::invalid_argument, "n_replications must be >= 1");
  if (jobs < 1) throw Error(ErrorCode::invalid_argument, "jobs must be >= 1");
  const int n_pairs = static_cast<int>(gauge_pairs_table().size());
  for (int p : gauge_pairs)
    if (p < 0 || p >= n_pairs) throw Error(ErrorCode::invalid_argument, "gauge pair index out of range");
  if (benchmark == Benchmark::file && dataset.empty()) throw Error(ErrorCode::invalid_argument, "file benchmark needs a dataset");
  if (settings) settings->hyper.validate();
  if (benchmark == Benchmark::one_d) one_d.validate();
  if (benchmark == Benchmark::engine) engine.validate();
}

std::filesystem::path resolve_output_dir(const std::filesystem::path& requested) {
  if (const char* env = std::getenv("HMTMF_OUTPUT_DIR"); env && *env) return env;
  return requested;
}

void parallel_for(int n, int threads, const std::function<void(int)>& job) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min(threads, n); ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

std::vector<NoiseMatrix> noise_matrices(std::span<const TaskDataset> tasks, const FidelityTable& fid,
                                        NoisePolicy policy) {
  std::vector<NoiseMatrix> out;
  for (const auto& t : tasks) out.push_back(build_noise_matrix(t, fid, policy));
  return out;
}

KernelConfig kernel_of(const FitSettings& s) {
  KernelConfig k = s.kernel;
  k.delta_sq = s.hyper.delta_sq;
  return k;
}

}  // namespace

FitResult fit_hmtmf(std::span<const TaskDataset> tasks, const FidelityTable& fidelities, const FitSettings& settings) {
  const PooledDesign pooled = pool_designs(tasks, default_dedup_tolerance(tasks));
  const auto noise = noise_matrices(tasks, fidelities, settings.noise_policy);
  return iterate_model(tasks, pooled, noise, kernel_of(settings), settings.hyper, em_config(settings.hyper),
                       trend_config(settings.hyper, settings.regression));
}

MethodPredictions fit_and_predict(Method method, std::span<const TaskDataset> tasks, const FidelityTable& fidelities,
                                  const FitSettings& settings, const Matrix& queries,
                                  std::span<const Matrix> query_basis) {
  if (query_basis.size() != tasks.size()) throw Error(ErrorCode::dimension_mismatch, "one query basis per task");
  MethodPredictions out;
  auto collect = [&](const FittedModel& model) {
    const Predictor pred(model);
    for (std::size_t l = 0; l < tasks.size(); ++l) {
      const Prediction p = pred.predict(tasks[l].task_id, queries, query_basis[l]);
      out.mean.push_back(p.mean);
      out.variance.push_back(p.variance);
    }
  };
  switch (method) {
    case Method::hmtmf: {
      const FitResult fit = fit_hmtmf(tasks, fidelities, settings);
      out.outer_iterations = static_cast<int>(fit.trace.iterations.size());
      collect(fit.model);
      break;
    }
    case Method::egmtl: {
      const PooledDesign pooled = pool_designs(tasks, default_dedup_tolerance(tasks));
      const HomoscedasticFit fit =
          homoscedastic_mtl_fit(tasks, pooled, kernel_of(settings), settings.hyper, em_config(settings.hyper),
                                trend_config(settings.hyper, settings.regression));
      out.sigma_sq = fit.sigma_sq;
      out.outer_iterations = static_cast<int>(fit.fit.trace.iterations.size());
      collect(fit.fit.model);
      break;
    }
    case Method::sk: {
      for (std::size_t l = 0; l < tasks.size(); ++l) {
        const NoiseMatrix noise = build_noise_matrix(tasks[l], fidelities, settings.noise_policy);
        const SKModel model = sk_fit(tasks[l], noise);
        const Prediction p = sk_predict(model, queries, query_basis[l]);
        out.mean.push_back(p.mean);
        out.variance.push_back(p.variance);
      }
      break;
    }
  }
  return out;
}

namespace {

/// Splits every task into (train, holdout) with about 20% held out.
std::pair<std::vector<TaskDataset>, std::vector<TaskDataset>> holdout_split(std::span<const TaskDataset> tasks,
                                                                             std::uint64_t seed) {
  std::vector<TaskDataset> train, test;
  for (std::size_t l = 0; l < tasks.size(); ++l) {
    const TaskDataset& t = tasks[l];
    std::vector<Index> order(static_cast<std::size_t>(t.size()));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 0x5E, l));
    std::shuffle(order.begin(), order.end(), rng);
    const Index n_test = std::max<Index>(1, t.size() / 5);
    TaskDataset a = t, b = t;
    a.measurements.clear();
    b.measurements.clear();
    std::vector<Index> ia, ib;
    for (std::size_t k = 0; k < order.size(); ++k) (static_cast<Index>(k) < n_test ? ib : ia).push_back(order[k]);
    std::sort(ia.begin(), ia.end());
    std::sort(ib.begin(), ib.end());
    a.basis.resize(static_cast<Index>(ia.size()), t.basis.cols());
    b.basis.resize(static_cast<Index>(ib.size()), t.basis.cols());
    for (std::size_t k = 0; k < ia.size(); ++k) {
      a.measurements.push_back(t.measurements[static_cast<std::size_t>(ia[k])]);
      a.basis.row(static_cast<Index>(k)) = t.basis.row(ia[k]);
    }
    for (std::size_t k = 0; k < ib.size(); ++k) {
      b.measurements.push_back(t.measurements[static_cast<std::size_t>(ib[k])]);
      b.basis.row(static_cast<Index>(k)) = t.basis.row(ib[k]);
    }
    train.push_back(std::move(a));
    test.push_back(std::move(b));
  }
  return {std::move(train), std::move(test)};
}

double bbox_diag_sq(std::span<const TaskDataset> tasks) {
  Vector lo, hi;
  for (const auto& t : tasks) {
    const Matrix X = t.locations();
    if (X.rows() == 0) continue;
    const Vector a = X.colwise().minCoeff().transpose(), b = X.colwise().maxCoeff().transpose();
    lo = lo.size() ? Vector(lo.cwiseMin(a)) : a;
    hi = hi.size() ? Vector(hi.cwiseMax(b)) : b;
  }
  const double d = lo.size() ? (hi - lo).squaredNorm() : 0.0;
  return d > 0.0 ? d : 1.0;
}

}  // namespace

FitSettings tune_settings(std::span<const TaskDataset> tasks, const FidelityTable& fidelities, const FitSettings& base,
                          std::uint64_t seed) {
  auto [train, test] = holdout_split(tasks, seed);
  const double diag2 = bbox_diag_sq(tasks);
  static constexpr double kDelta[] = {1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  static constexpr double kNu[] = {0.5, 1.0, 2.0, 5.0};
  static constexpr double kLambda[] = {1e-4, 1e-3, 1e-2};
  FitSettings best = base;
  double best_score = std::numeric_limits<double>::infinity();
  for (double dfac : kDelta) {
    for (double nu : kNu) {
      for (double lambda : kLambda) {
        FitSettings s = base;
        s.hyper.delta_sq = dfac * diag2;
        s.hyper.nu = nu;
        s.hyper.lambda = lambda;
        s.kernel.delta_sq = s.hyper.delta_sq;
        double sse = 0.0;
        Index count = 0;
        try {
          const FitResult fit = fit_hmtmf(train, fidelities, s);
          const Predictor pred(fit.model);
          for (std::size_t l = 0; l < test.size(); ++l) {
            const Vector mu = pred.mean(test[l].task_id, test[l].locations(), test[l].basis);
            sse += (mu - sample_means(test[l])).squaredNorm();
            count += mu.size();
          }
        } catch (const Error&) {
          continue;
        }
        const double score = sse / static_cast<double>(std::max<Index>(count, 1));
        if (score < best_score) {
          best_score = score;
          best = s;
        }
      }
    }
  }
  if (!std::isfinite(best_score)) throw Error(ErrorCode::numerical, "no tuning candidate could be fitted");
  return best;
}

// ---------------------------------------------------------------------------
// Experiment

namespace {

struct CellData {
  std::vector<TaskDataset> tasks;
  FidelityTable fidelities;
  Matrix queries;                 // shared query points (one_d, engine)
  std::vector<Matrix> query_basis;
  std::vector<Vector> truth;
  std::vector<Matrix> task_queries;  // file benchmark: per-task holdout points
};

struct CellResult {
  std::vector<RunRecord> records;
  std::vector<CurveData> curves;
};

CellData make_cell(const ExperimentConfig& cfg, const std::pair<double, double>& pair, int rep,
                   const DatasetFile* file) {
  CellData c;
  switch (cfg.benchmark) {
    case Benchmark::one_d: {
      Bench1DConfig b = cfg.one_d;
      b.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep));
      Bench1D bench = gen_1d_tasks(b);
      c.tasks = std::move(bench.tasks);
      c.fidelities = std::move(bench.fidelities);
      const Vector x = dense_grid_1d(b.lower, b.upper);
      c.queries = x;
      for (int l = 0; l < 3; ++l) {
        c.query_basis.push_back(basis_1d(x));
        c.truth.push_back(x.unaryExpr([l](double v) { return truth_1d(l, v); }));
      }
      break;
    }
    case Benchmark::engine: {
      EngineBenchConfig e = cfg.engine;
      e.seed = cfg.seed;
      e.replication = rep;
      e.p_high = pair.first;
      e.p_low = pair.second;
      EngineBench bench = gen_engine_tasks(e);
      c.tasks = std::move(bench.tasks);
      c.fidelities = std::move(bench.fidelities);
      c.queries = std::move(bench.test_points);
      c.query_basis = std::move(bench.test_basis);
      c.truth = std::move(bench.truth);
      break;
    }
    case Benchmark::file: {
      auto [train, test] = holdout_split(file->tasks, derive_seed(cfg.seed, static_cast<std::uint64_t>(rep)));
      c.tasks = std::move(train);
      c.fidelities = file->fidelities;
      for (const auto& t : test) {
        c.task_queries.push_back(t.locations());
        c.query_basis.push_back(t.basis);
        c.truth.push_back(sample_means(t));
      }
      break;
    }
  }
  return c;
}

CellResult run_cell(const ExperimentConfig& cfg, const FitSettings& settings, std::size_t pair_index,
                    const std::pair<double, double>& pair, int rep, const DatasetFile* file) {
  CellResult out;
  CellData c = make_cell(cfg, pair, rep, file);
  for (Method method : cfg.methods) {
    auto base_record = [&](int task_id) {
      RunRecord r;
      r.pair_index = static_cast<int>(pair_index);
      r.p_high = pair.first;
      r.p_low = pair.second;
      r.replication = rep;
      r.method = method;
      r.task_id = task_id;
      return r;
    };
    try {
      std::vector<Vector> means, vars;
      double sigma_sq = 0.0;
      int outer = 0;
      if (cfg.benchmark == Benchmark::file) {
        // Per-task query sets: predict each task on its own holdout.
        for (std::size_t l = 0; l < c.tasks.size(); ++l) {
          std::vector<Matrix> qb(c.tasks.size());
          for (std::size_t h = 0; h < c.tasks.size(); ++h) qb[h] = Matrix::Zero(c.task_queries[l].rows(), c.tasks[h].basis.cols());
          qb[l] = c.query_basis[l];
          MethodPredictions p = fit_and_predict(method, c.tasks, c.fidelities, settings, c.task_queries[l], qb);
          means.push_back(p.mean[l]);
          vars.push_back(p.variance[l]);
          sigma_sq = p.sigma_sq;
          outer = p.outer_iterations;
        }
      } else {
        MethodPredictions p = fit_and_predict(method, c.tasks, c.fidelities, settings, c.queries, c.query_basis);
        means = std::move(p.mean);
        vars = std::move(p.variance);
        sigma_sq = p.sigma_sq;
        outer = p.outer_iterations;
      }
      for (std::size_t l = 0; l < c.tasks.size(); ++l) {
        RunRecord r = base_record(c.tasks[l].task_id);
        r.rmse = rmse(means[l], c.truth[l]);
        r.sigma_sq = sigma_sq;
        r.outer_iterations = outer;
        out.records.push_back(std::move(r));
        if (cfg.benchmark == Benchmark::one_d && rep == 0 && cfg.write_curves) {
          out.curves.push_back(CurveData{method, c.tasks[l].task_id, c.queries.col(0), c.truth[l], means[l], vars[l]});
        }
      }
    } catch (const std::exception& e) {
      for (const auto& t : c.tasks) {
        RunRecord r = base_record(t.task_id);
        r.ok = false;
        r.rmse = std::numeric_limits<double>::quiet_NaN();
        r.error = e.what();
        out.records.push_back(std::move(r));
      }
    }
  }
  return out;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentReport report;
  std::optional<DatasetFile> file;
  if (cfg.benchmark == Benchmark::file) file = load_dataset(cfg.dataset);

  if (cfg.benchmark == Benchmark::engine) {
    if (cfg.custom_pair) {
      report.pairs.push_back(*cfg.custom_pair);
    } else {
      const auto table = gauge_pairs_table();
      if (cfg.gauge_pairs.empty()) {
        report.pairs = table;
      } else {
        for (int p : cfg.gauge_pairs) report.pairs.push_back(table[static_cast<std::size_t>(p)]);
      }
    }
  } else if (cfg.benchmark == Benchmark::one_d) {
    report.pairs.emplace_back(cfg.one_d.sigma_high, cfg.one_d.sigma_low);
  } else {
    report.pairs.emplace_back(0.0, 0.0);
  }

  FitSettings settings = cfg.settings.value_or(default_settings(cfg.benchmark));
  if (cfg.tune) {
    const CellData first = make_cell(cfg, report.pairs.front(), 0, file ? &*file : nullptr);
    settings = tune_settings(first.tasks, first.fidelities, settings, derive_seed(cfg.seed, 0x7E));
    report.tuned = settings;
  }

  const int n_cells = static_cast<int>(report.pairs.size()) * cfg.n_replications;
  std::vector<CellResult> cells(static_cast<std::size_t>(n_cells));
  parallel_for(n_cells, cfg.jobs, [&](int i) {
    const std::size_t pair = static_cast<std::size_t>(i / cfg.n_replications);
    const int rep = i % cfg.n_replications;
    cells[static_cast<std::size_t>(i)] =
        run_cell(cfg, settings, pair, report.pairs[pair], rep, file ? &*file : nullptr);
  });
  for (auto& c : cells) {
    for (auto& r : c.records) {
      if (std::find(report.task_ids.begin(), report.task_ids.end(), r.task_id) == report.task_ids.end()) {
        report.task_ids.push_back(r.task_id);
      }
      report.records.push_back(std::move(r));
    }
    for (auto& cv : c.curves) report.curves.push_back(std::move(cv));
  }
  std::sort(report.task_ids.begin(), report.task_ids.end());
  return report;
}

std::vector<double> mean_delta(const ExperimentReport& report, std::size_t pair, Method baseline) {
  const std::size_t m = report.task_ids.size();
  std::vector<double> sum(m + 1, 0.0);
  std::vector<int> count(m + 1, 0);
  // Index records by (replication, method, task) for this pair.
  auto find = [&](int rep, Method method, int task) -> const RunRecord* {
    for (const auto& r : report.records) {
      if (static_cast<std::size_t>(r.pair_index) == pair && r.replication == rep && r.method == method &&
          r.task_id == task)
        return &r;
    }
    return nullptr;
  };
  int max_rep = -1;
  for (const auto& r : report.records)
    if (static_cast<std::size_t>(r.pair_index) == pair) max_rep = std::max(max_rep, r.replication);
  for (int rep = 0; rep <= max_rep; ++rep) {
    double rep_sum = 0.0;
    std::size_t rep_count = 0;
    for (std::size_t l = 0; l < m; ++l) {
      const RunRecord* h = find(rep, Method::hmtmf, report.task_ids[l]);
      const RunRecord* b = find(rep, baseline, report.task_ids[l]);
      if (!h || !b || !h->ok || !b->ok || !(b->rmse > 0.0)) continue;
      const double d = delta_rmse(b->rmse, h->rmse);
      sum[l] += d;
      ++count[l];
      rep_sum += d;
      ++rep_count;
    }
    if (rep_count == m && m > 0) {
      sum[m] += rep_sum / static_cast<double>(m);
      ++count[m];
    }
  }
  std::vector<double> out(m + 1);
  for (std::size_t k = 0; k <= m; ++k)
    out[k] = count[k] ? sum[k] / count[k] : std::numeric_limits<double>::quiet_NaN();
  return out;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string cell(double v) { return std::isfinite(v) ? format_double(v) : std::string("FAILED"); }

std::string raw_csv(const ExperimentReport& report) {
  std::ostringstream os;
  os << "pair_index,p_high,p_low,replication,method,task_id,rmse,status,sigma_sq,outer_iterations,error\n";
  for (const auto& r : report.records) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    os << r.pair_index << ',' << format_double(r.p_high) << ',' << format_double(r.p_low) << ',' << r.replication
       << ',' << to_string(r.method) << ',' << r.task_id << ',' << (r.ok ? format_double(r.rmse) : "NA") << ','
       << (r.ok ? "ok" : "failed") << ',' << format_double(r.sigma_sq) << ',' << r.outer_iterations << ',' << err
       << '\n';
  }
  return os.str();
}

std::string summary_csv(const ExperimentConfig& cfg, const ExperimentReport& report) {
  std::ostringstream os;
  os << "pair_index,p_high,p_low,method,task_id,mean_rmse,std_rmse,n_ok,n_failed\n";
  for (std::size_t p = 0; p < report.pairs.size(); ++p) {
    for (Method method : cfg.methods) {
      for (int task : report.task_ids) {
        std::vector<double> v;
        int failed = 0;
        for (const auto& r : report.records) {
          if (static_cast<std::size_t>(r.pair_index) != p || r.method != method || r.task_id != task) continue;
          if (r.ok) v.push_back(r.rmse);
          else ++failed;
        }
        double mean = std::numeric_limits<double>::quiet_NaN(), sd = mean;
        if (!v.empty()) {
          mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
          double ss = 0.0;
          for (double x : v) ss += (x - mean) * (x - mean);
          sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        }
        os << p << ',' << format_double(report.pairs[p].first) << ',' << format_double(report.pairs[p].second) << ','
           << to_string(method) << ',' << task << ',' << cell(mean) << ',' << cell(sd) << ',' << v.size() << ','
           << failed << '\n';
      }
    }
  }
  return os.str();
}

std::vector<Method> baselines_in(const ExperimentConfig& cfg) {
  std::vector<Method> out;
  const bool has_h = std::find(cfg.methods.begin(), cfg.methods.end(), Method::hmtmf) != cfg.methods.end();
  if (!has_h) return out;
  for (Method m : {Method::egmtl, Method::sk})
    if (std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end()) out.push_back(m);
  return out;
}

std::string delta_csv(const ExperimentConfig& cfg, const ExperimentReport& report) {
  const auto bl = baselines_in(cfg);
  std::ostringstream os;
  os << "p_high,p_low";
  for (Method b : bl) {
    for (int t : report.task_ids) os << ",delta_" << to_string(b) << "_task" << t;
    os << ",delta_" << to_string(b) << "_average";
  }
  os << '\n';
  for (std::size_t p = 0; p < report.pairs.size(); ++p) {
    os << format_double(report.pairs[p].first) << ',' << format_double(report.pairs[p].second);
    for (Method b : bl)
      for (double d : mean_delta(report, p, b)) os << ',' << cell(d);
    os << '\n';
  }
  return os.str();
}

std::string curve_csv(const CurveData& c) {
  std::ostringstream os;
  os << "x,truth,mean,lower,upper,variance\n";
  for (Index i = 0; i < c.x.size(); ++i) {
    const double s = 2.0 * std::sqrt(std::max(0.0, c.variance(i)));
    os << format_double(c.x(i)) << ',' << format_double(c.truth(i)) << ',' << format_double(c.mean(i)) << ','
       << format_double(c.mean(i) - s) << ',' << format_double(c.mean(i) + s) << ',' << format_double(c.variance(i))
       << '\n';
  }
  return os.str();
}

nlohmann::json settings_json(const FitSettings& s) {
  return {{"delta_sq", s.hyper.delta_sq},
          {"nu", s.hyper.nu},
          {"lambda", s.hyper.lambda},
          {"t1", s.hyper.t1},
          {"t2", s.hyper.t2},
          {"t3", s.hyper.t3},
          {"t4", s.hyper.t4},
          {"k1_max", s.hyper.k1_max},
          {"k2_max", s.hyper.k2_max},
          {"jitter", s.hyper.jitter},
          {"noise_policy", s.noise_policy == NoisePolicy::sample_variance_only ? "sample_variance_only"
                                                                               : "declared_variance_fallback"},
          {"regression", s.regression == Regression::ols ? "ols" : "huber_irls"}};
}

}  // namespace

void write_report(const ExperimentConfig& cfg, const ExperimentReport& report, const std::filesystem::path& dir) {
  write_text(dir / "results_raw.csv", raw_csv(report));
  write_text(dir / "rmse_summary.csv", summary_csv(cfg, report));
  if (!baselines_in(cfg).empty()) write_text(dir / "delta_table.csv", delta_csv(cfg, report));
  for (const auto& c : report.curves) {
    write_text(dir / "curves" / (std::string(to_string(c.method)) + "_task" + std::to_string(c.task_id) + ".csv"),
               curve_csv(c));
  }

  nlohmann::json j;
  j["benchmark"] = to_string(cfg.benchmark);
  j["seed"] = cfg.seed;
  j["n_replications"] = cfg.n_replications;
  j["methods"] = nlohmann::json::array();
  for (Method m : cfg.methods) j["methods"].push_back(to_string(m));
  j["gauge_pairs"] = nlohmann::json::array();
  for (const auto& [h, l] : report.pairs) j["gauge_pairs"].push_back({h, l});
  j["settings"] = settings_json(report.tuned.value_or(cfg.settings.value_or(default_settings(cfg.benchmark))));
  j["tuned"] = report.tuned.has_value();
  if (cfg.benchmark == Benchmark::engine) {
    const auto& e = cfg.engine;
    j["engine"] = {{"n_tasks", e.n_tasks},         {"n_low", e.n_low},
                   {"n_high", e.n_high},           {"n_test", e.n_test},
                   {"mrr_correlation", e.mrr_correlation}, {"mean_height", e.mean_height},
                   {"similarity", e.similarity},   {"field_amplitude", e.field_amplitude},
                   {"field_delta_sq", e.field_delta_sq}};
  } else if (cfg.benchmark == Benchmark::one_d) {
    const auto& b = cfg.one_d;
    j["one_d"] = {{"n_points_per_task", b.n_points_per_task}, {"replicates", b.replicates},
                  {"sigma_low", b.sigma_low},                 {"sigma_high", b.sigma_high},
                  {"gaps", b.gaps}};
  } else {
    j["dataset"] = cfg.dataset.string();
  }
  std::size_t failed = 0;
  for (const auto& r : report.records) failed += r.ok ? 0 : 1;
  j["failed_records"] = failed;
  j["environment"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)},
                      {"compiler", __VERSION__},
                      {"output_precision", "%.17g"}};
  nlohmann::json deltas = nlohmann::json::array();
  for (std::size_t p = 0; p < report.pairs.size(); ++p) {
    nlohmann::json row = {{"p_high", report.pairs[p].first}, {"p_low", report.pairs[p].second}};
    for (Method b : baselines_in(cfg)) {
      nlohmann::json v = nlohmann::json::array();
      for (double d : mean_delta(report, p, b)) v.push_back(std::isfinite(d) ? nlohmann::json(d) : nlohmann::json());
      row[std::string("delta_") + to_string(b)] = v;
    }
    deltas.push_back(row);
  }
  j["mean_delta_rmse"] = deltas;
  write_text(dir / "summary.json", j.dump(2) + "\n");
}

}  // namespace hmtmf
