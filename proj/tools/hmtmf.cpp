// Command-line front end: dataset generation, fitting, prediction and benchmark sweeps.

#include "hmtmf/harness.hpp"
#include "hmtmf/io.hpp"
#include "hmtmf/predictor.hpp"
#include "hmtmf/synth.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace hmtmf;

namespace {

struct HyperFlags {
  std::optional<double> delta_sq, nu, lambda;
  std::optional<int> k1_max, k2_max;
  std::string noise_policy, regression;

  void add(CLI::App* app) {
    app->add_option("--delta-sq", delta_sq, "Squared kernel length scale");
    app->add_option("--nu", nu, "Hyperprior degrees of freedom");
    app->add_option("--lambda", lambda, "Hyperprior mean precision");
    app->add_option("--k1-max", k1_max, "EM iteration cap");
    app->add_option("--k2-max", k2_max, "Outer iteration cap");
    app->add_option("--noise-policy", noise_policy, "sample_variance_only | declared_variance_fallback");
    app->add_option("--regression", regression, "ols | huber_irls");
  }

  FitSettings apply(FitSettings s) const {
    if (delta_sq) s.hyper.delta_sq = *delta_sq;
    if (nu) s.hyper.nu = *nu;
    if (lambda) s.hyper.lambda = *lambda;
    if (k1_max) s.hyper.k1_max = *k1_max;
    if (k2_max) s.hyper.k2_max = *k2_max;
    if (noise_policy == "sample_variance_only") s.noise_policy = NoisePolicy::sample_variance_only;
    else if (noise_policy == "declared_variance_fallback") s.noise_policy = NoisePolicy::declared_variance_fallback;
    else if (!noise_policy.empty()) throw Error(ErrorCode::invalid_argument, "unknown noise policy " + noise_policy);
    if (regression == "ols") s.regression = Regression::ols;
    else if (regression == "huber_irls") s.regression = Regression::huber_irls;
    else if (!regression.empty()) throw Error(ErrorCode::invalid_argument, "unknown regression " + regression);
    s.kernel.delta_sq = s.hyper.delta_sq;
    s.hyper.validate();
    return s;
  }

  bool any() const {
    return delta_sq || nu || lambda || k1_max || k2_max || !noise_policy.empty() || !regression.empty();
  }
};

struct SweepFlags {
  std::string benchmark = "one_d";
  std::vector<std::string> methods{"hmtmf", "egmtl", "sk"};
  std::vector<int> pairs;
  std::vector<double> custom_pair;
  int replications = 10;
  std::uint64_t seed = 0;
  std::string out = "results";
  std::string data;
  int jobs = 1;
  bool tune = false;
  bool gaps = false;
  bool alternate = false;
  int n_test = 15000;
  HyperFlags hyper;

  void add(CLI::App* app, bool with_benchmark) {
    if (with_benchmark) app->add_option("--benchmark", benchmark, "one_d | engine | file");
    app->add_option("--seed", seed, "Base seed")->required();
    app->add_option("--methods", methods, "Subset of hmtmf egmtl sk")->delimiter(',');
    app->add_option("--replications", replications, "Replications per cell");
    app->add_option("--out", out, "Output directory (HMTMF_OUTPUT_DIR overrides)");
    app->add_option("--jobs", jobs, "Worker threads");
    app->add_flag("--tune", tune, "Grid-search (delta_sq, nu, lambda) on a 20% holdout");
    app->add_option("--pairs", pairs, "Gauge pair indices 0..8 (engine)")->delimiter(',');
    app->add_option("--gauge-pair", custom_pair, "Custom (p_high, p_low) percents (engine)")->expected(2)->delimiter(',');
    app->add_option("--n-test", n_test, "Test points (engine)");
    app->add_flag("--figure-gaps", gaps, "Leave task 2 unobserved on [0,5] and task 3 on [7,10] (1D)");
    app->add_flag("--alternate-gauges", alternate, "Alternate gauges instead of random assignment (1D)");
    app->add_option("--data", data, "Dataset JSON (file benchmark)");
    hyper.add(app);
  }

  ExperimentConfig config() const {
    ExperimentConfig cfg;
    cfg.benchmark = parse_benchmark(benchmark);
    cfg.methods.clear();
    for (const auto& m : methods) cfg.methods.push_back(parse_method(m));
    cfg.gauge_pairs = pairs;
    if (custom_pair.size() == 2) cfg.custom_pair = std::make_pair(custom_pair[0], custom_pair[1]);
    cfg.n_replications = replications;
    cfg.seed = seed;
    cfg.tune = tune;
    cfg.jobs = jobs;
    cfg.one_d.gaps = gaps;
    if (alternate) cfg.one_d.assignment = GaugeAssignment::alternate;
    cfg.engine.n_test = n_test;
    cfg.dataset = data;
    cfg.output_dir = resolve_output_dir(out);
    if (hyper.any()) cfg.settings = hyper.apply(default_settings(cfg.benchmark));
    return cfg;
  }
};

int run_sweep(const SweepFlags& flags) {
  const ExperimentConfig cfg = flags.config();
  const ExperimentReport report = run_experiment(cfg);
  write_report(cfg, report, cfg.output_dir);
  std::size_t failed = 0;
  for (const auto& r : report.records) failed += r.ok ? 0 : 1;
  std::cout << "wrote reports to " << cfg.output_dir.string() << " (" << report.records.size() << " records, "
            << failed << " failed)\n";
  return 0;
}

/// Reads a query CSV with columns x0.. and u0.. (header required).
std::pair<Matrix, Matrix> read_queries(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::io, path + " is empty");
  std::vector<char> kind;
  {
    std::stringstream hs(line);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col.empty() || (col[0] != 'x' && col[0] != 'u')) throw Error(ErrorCode::io, "query column '" + col + "'");
      kind.push_back(col[0]);
    }
  }
  const auto d = static_cast<Index>(std::count(kind.begin(), kind.end(), 'x'));
  const auto p = static_cast<Index>(kind.size()) - d;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::vector<double> r;
    while (std::getline(ls, cell, ',')) r.push_back(std::stod(cell));
    if (r.size() != kind.size()) throw Error(ErrorCode::io, "ragged row in " + path);
    rows.push_back(std::move(r));
  }
  Matrix X(static_cast<Index>(rows.size()), d), U(static_cast<Index>(rows.size()), p);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Index a = 0, b = 0;
    for (std::size_t k = 0; k < kind.size(); ++k) {
      if (kind[k] == 'x') X(static_cast<Index>(i), a++) = rows[i][k];
      else U(static_cast<Index>(i), b++) = rows[i][k];
    }
  }
  return {X, U};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heteroscedastic multi-task multi-fidelity surface modeling"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a benchmark dataset");
  std::string gen_bench = "one_d", gen_out = "dataset.json", gen_truth;
  std::uint64_t gen_seed = 0;
  int gen_rep = 0, gen_pair = 0;
  bool gen_gaps = false;
  gen->add_option("--benchmark", gen_bench, "one_d | engine");
  gen->add_option("--seed", gen_seed, "Seed")->required();
  gen->add_option("--replication", gen_rep, "Replication index (engine)");
  gen->add_option("--pair", gen_pair, "Gauge pair index 0..8 (engine)");
  gen->add_flag("--figure-gaps", gen_gaps, "Unobserved regions in tasks 2 and 3 (1D)");
  gen->add_option("--out", gen_out, "Dataset JSON path");
  gen->add_option("--truth", gen_truth, "Optional CSV of true values on the evaluation points");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit the multi-task model to a dataset");
  std::string fit_data, fit_out = "model.json", fit_trace;
  std::string fit_bench = "one_d";
  bool fit_tune = false;
  std::uint64_t fit_seed = 0;
  HyperFlags fit_hyper;
  fit->add_option("--data", fit_data, "Dataset JSON")->required();
  fit->add_option("--out", fit_out, "Model JSON path");
  fit->add_option("--defaults", fit_bench, "Default settings to start from: one_d | engine");
  fit->add_flag("--tune", fit_tune, "Grid-search (delta_sq, nu, lambda) on a 20% holdout");
  fit->add_option("--seed", fit_seed, "Seed of the tuning split");
  fit->add_option("--trace", fit_trace, "Prefix for EM and outer-loop trace CSVs");
  fit_hyper.add(fit);

  // predict
  auto* pred = app.add_subcommand("predict", "Predict one task of a fitted model");
  std::string pred_model, pred_points, pred_out;
  int pred_task = 1;
  bool pred_components = false;
  pred->add_option("--model", pred_model, "Model JSON")->required();
  pred->add_option("--task", pred_task, "Task id")->required();
  pred->add_option("--points", pred_points, "Query CSV with x* location and u* basis columns")->required();
  pred->add_option("--out", pred_out, "Output CSV (stdout when omitted)");
  pred->add_flag("--components", pred_components, "Include trend/residual/variance components");

  SweepFlags one_d_flags, engine_flags, sweep_flags;
  auto* b1 = app.add_subcommand("bench-1d", "Three-task 1D benchmark");
  one_d_flags.add(b1, false);
  auto* be = app.add_subcommand("bench-engine", "Engine-like 2D benchmark over gauge pairs");
  engine_flags.benchmark = "engine";
  engine_flags.add(be, false);
  auto* sw = app.add_subcommand("sweep", "Generic experiment sweep");
  sweep_flags.add(sw, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      DatasetFile data;
      std::ostringstream truth_csv;
      if (parse_benchmark(gen_bench) == Benchmark::one_d) {
        Bench1DConfig cfg;
        cfg.seed = gen_seed;
        cfg.gaps = gen_gaps;
        Bench1D b = gen_1d_tasks(cfg);
        data.fidelities = b.fidelities;
        data.tasks = b.tasks;
        const Vector x = dense_grid_1d(cfg.lower, cfg.upper);
        truth_csv << "x0,task1,task2,task3\n";
        for (Index i = 0; i < x.size(); ++i) {
          truth_csv << format_double(x(i));
          for (int l = 0; l < 3; ++l) truth_csv << ',' << format_double(truth_1d(l, x(i)));
          truth_csv << '\n';
        }
      } else {
        EngineBenchConfig cfg;
        cfg.seed = gen_seed;
        cfg.replication = gen_rep;
        const auto pairs = gauge_pairs_table();
        if (gen_pair < 0 || gen_pair >= static_cast<int>(pairs.size())) {
          throw Error(ErrorCode::invalid_argument, "pair index out of range");
        }
        std::tie(cfg.p_high, cfg.p_low) = pairs[static_cast<std::size_t>(gen_pair)];
        EngineBench b = gen_engine_tasks(cfg);
        data.fidelities = b.fidelities;
        data.tasks = b.tasks;
        truth_csv << "x0,x1";
        for (std::size_t l = 0; l < b.tasks.size(); ++l) truth_csv << ",task" << l + 1 << ",u1_task" << l + 1;
        truth_csv << '\n';
        for (Index i = 0; i < b.test_points.rows(); ++i) {
          truth_csv << format_double(b.test_points(i, 0)) << ',' << format_double(b.test_points(i, 1));
          for (std::size_t l = 0; l < b.tasks.size(); ++l) {
            truth_csv << ',' << format_double(b.truth[l](i)) << ',' << format_double(b.test_basis[l](i, 1));
          }
          truth_csv << '\n';
        }
      }
      save_dataset(gen_out, data);
      if (!gen_truth.empty()) write_text(gen_truth, truth_csv.str());
      std::cout << "wrote " << gen_out << '\n';
    } else if (*fit) {
      const DatasetFile data = load_dataset(fit_data);
      FitSettings s = fit_hyper.apply(default_settings(parse_benchmark(fit_bench)));
      if (fit_tune) s = tune_settings(data.tasks, data.fidelities, s, fit_seed);
      const FitResult r = fit_hmtmf(data.tasks, data.fidelities, s);
      save_model(fit_out, r.model);
      if (!fit_trace.empty()) {
        std::ostringstream em, outer;
        write_em_trace_csv(em, r.trace);
        write_outer_trace_csv(outer, r.trace);
        write_text(fit_trace + "_em.csv", em.str());
        write_text(fit_trace + "_outer.csv", outer.str());
      }
      std::cout << "fitted " << r.model.tasks() << " tasks on " << r.model.pooled.size() << " pooled points in "
                << r.trace.iterations.size() << " outer iterations (stop: " << to_string(r.trace.stop)
                << "); delta_sq=" << s.hyper.delta_sq << " nu=" << s.hyper.nu << " lambda=" << s.hyper.lambda
                << "\nwrote " << fit_out << '\n';
    } else if (*pred) {
      const FittedModel model = load_model(pred_model);
      const auto [X, U] = read_queries(pred_points);
      const Prediction p = Predictor(model).predict(pred_task, X, U, pred_components);
      if (p.extrapolated > 0) std::cerr << "warning: " << p.extrapolated << " queries lie outside the task domain\n";
      std::ostringstream os;
      write_prediction_csv(os, p);
      if (pred_out.empty()) std::cout << os.str();
      else write_text(pred_out, os.str());
    } else if (*b1) {
      one_d_flags.benchmark = "one_d";
      return run_sweep(one_d_flags);
    } else if (*be) {
      engine_flags.benchmark = "engine";
      return run_sweep(engine_flags);
    } else if (*sw) {
      return run_sweep(sweep_flags);
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
