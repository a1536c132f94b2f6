#include "hmtmf/io.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace hmtmf {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

json to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json to_json(const Matrix& M) {
  json rows = json::array();
  for (Index i = 0; i < M.rows(); ++i) rows.push_back(to_json(Vector(M.row(i).transpose())));
  return rows;
}

Vector vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

Matrix matrix_from(const json& j, Index cols_if_empty = 0) {
  if (!j.is_array()) throw Error(ErrorCode::io, "matrix must be an array of rows");
  if (j.empty()) return Matrix(0, cols_if_empty);
  Matrix M(static_cast<Index>(j.size()), static_cast<Index>(j[0].size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Vector r = vector_from(j[i]);
    if (r.size() != M.cols()) throw Error(ErrorCode::io, "ragged matrix rows");
    M.row(static_cast<Index>(i)) = r.transpose();
  }
  return M;
}

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io, std::string(what) + ": " + e.what());
  }
}

}  // namespace

json dataset_to_json(const DatasetFile& data) {
  json j;
  j["format"] = "hmtmf-dataset";
  j["version"] = 1;
  j["dimension"] = data.tasks.empty() ? 0 : data.tasks.front().dimension();
  j["fidelities"] = json::array();
  for (const auto& f : data.fidelities) {
    j["fidelities"].push_back({{"id", f.id}, {"sigma", f.sigma}, {"declared_variance_known", f.declared_variance_known}});
  }
  j["tasks"] = json::array();
  for (const auto& t : data.tasks) {
    json jt;
    jt["task_id"] = t.task_id;
    jt["domain"] = {{"lower", to_json(t.domain.lower)}, {"upper", to_json(t.domain.upper)}};
    jt["measurements"] = json::array();
    for (Index i = 0; i < t.size(); ++i) {
      const auto& m = t.measurements[static_cast<std::size_t>(i)];
      jt["measurements"].push_back({{"location", to_json(m.location)},
                                    {"replicates", m.replicates},
                                    {"fidelity_id", m.fidelity_id},
                                    {"basis", to_json(Vector(t.basis.row(i).transpose()))}});
    }
    j["tasks"].push_back(std::move(jt));
  }
  return j;
}

DatasetFile dataset_from_json(const json& j) {
  return guarded("dataset", [&] {
    if (j.value("format", "") != "hmtmf-dataset") throw Error(ErrorCode::io, "not an hmtmf-dataset document");
    if (j.at("version").get<int>() != 1) throw Error(ErrorCode::io, "unsupported dataset version");
    DatasetFile out;
    for (const auto& f : j.at("fidelities")) {
      out.fidelities.push_back({f.at("id").get<std::string>(), f.at("sigma").get<double>(),
                                f.value("declared_variance_known", false)});
    }
    validate(out.fidelities);
    const auto dim = j.at("dimension").get<Index>();
    for (const auto& jt : j.at("tasks")) {
      TaskDataset t;
      t.task_id = jt.at("task_id").get<int>();
      t.domain.lower = vector_from(jt.at("domain").at("lower"));
      t.domain.upper = vector_from(jt.at("domain").at("upper"));
      const auto& ms = jt.at("measurements");
      Index p = -1;
      for (std::size_t i = 0; i < ms.size(); ++i) {
        const auto& jm = ms[i];
        Measurement m{vector_from(jm.at("location")), jm.at("replicates").get<std::vector<double>>(),
                      jm.at("fidelity_id").get<std::string>()};
        if (m.location.size() != dim) throw Error(ErrorCode::dimension_mismatch, "location dimension in dataset");
        find_fidelity(out.fidelities, m.fidelity_id);
        const Vector b = vector_from(jm.at("basis"));
        if (p < 0) {
          p = b.size();
          t.basis.resize(static_cast<Index>(ms.size()), p);
        }
        if (b.size() != p) throw Error(ErrorCode::dimension_mismatch, "basis length differs within a task");
        t.basis.row(static_cast<Index>(i)) = b.transpose();
        t.measurements.push_back(std::move(m));
      }
      validate(t);
      out.tasks.push_back(std::move(t));
    }
    return out;
  });
}

json model_to_json(const FittedModel& model) {
  const ModelState& s = model.state;
  json j;
  j["format"] = "hmtmf-model";
  j["version"] = 1;
  j["kernel"] = {{"kind", "squared_exponential"}, {"delta_sq", model.kernel.delta_sq}};
  const HyperParams& h = model.hyper;
  j["hyper"] = {{"delta_sq", h.delta_sq}, {"nu", h.nu},   {"lambda", h.lambda}, {"t1", h.t1},
                {"t2", h.t2},             {"t3", h.t3},   {"t4", h.t4},         {"k1_max", h.k1_max},
                {"k2_max", h.k2_max},     {"jitter", h.jitter}};
  j["pooled_points"] = to_json(model.pooled.points);
  j["index_maps"] = model.pooled.index_maps;
  j["field_cov"] = to_json(s.field_cov);
  j["field_mean"] = to_json(s.field_mean);
  j["tasks"] = json::array();
  for (std::size_t l = 0; l < model.task_ids.size(); ++l) {
    json jt;
    jt["task_id"] = model.task_ids[l];
    jt["basis"] = to_json(model.task_basis[l]);
    jt["sample_means"] = to_json(model.sample_means[l]);
    if (l < model.domains.size()) {
      jt["domain"] = {{"lower", to_json(model.domains[l].lower)}, {"upper", to_json(model.domains[l].upper)}};
    }
    jt["beta"] = to_json(s.beta_hat[l]);
    jt["sigma_eps"] = to_json(s.sigma_eps[l]);
    jt["field_hat"] = to_json(s.field_hat[l]);
    j["tasks"].push_back(std::move(jt));
  }
  return j;
}

FittedModel model_from_json(const json& j) {
  return guarded("model", [&] {
    if (j.value("format", "") != "hmtmf-model") throw Error(ErrorCode::io, "not an hmtmf-model document");
    FittedModel m;
    m.kernel.delta_sq = j.at("kernel").at("delta_sq").get<double>();
    const auto& h = j.at("hyper");
    m.hyper.delta_sq = h.at("delta_sq");
    m.hyper.nu = h.at("nu");
    m.hyper.lambda = h.at("lambda");
    m.hyper.t1 = h.at("t1");
    m.hyper.t2 = h.at("t2");
    m.hyper.t3 = h.at("t3");
    m.hyper.t4 = h.at("t4");
    m.hyper.k1_max = h.at("k1_max");
    m.hyper.k2_max = h.at("k2_max");
    m.hyper.jitter = h.at("jitter");
    m.pooled.points = matrix_from(j.at("pooled_points"));
    m.pooled.index_maps = j.at("index_maps").get<std::vector<std::vector<Index>>>();
    m.state.field_cov = matrix_from(j.at("field_cov"));
    m.state.field_mean = vector_from(j.at("field_mean"));
    const Index n = m.pooled.size();
    if (m.state.field_cov.rows() != n || m.state.field_cov.cols() != n) {
      throw Error(ErrorCode::dimension_mismatch, "field covariance does not match pooled design");
    }
    for (const auto& jt : j.at("tasks")) {
      m.task_ids.push_back(jt.at("task_id"));
      m.task_basis.push_back(matrix_from(jt.at("basis")));
      m.sample_means.push_back(vector_from(jt.at("sample_means")));
      if (jt.contains("domain")) {
        m.domains.push_back(Box{vector_from(jt["domain"]["lower"]), vector_from(jt["domain"]["upper"])});
      }
      m.state.beta_hat.push_back(vector_from(jt.at("beta")));
      m.state.sigma_eps.push_back(vector_from(jt.at("sigma_eps")));
      m.state.field_hat.push_back(vector_from(jt.at("field_hat")));
    }
    if (m.pooled.index_maps.size() != m.task_ids.size()) throw Error(ErrorCode::io, "index map count differs from tasks");
    for (std::size_t l = 0; l < m.task_ids.size(); ++l) {
      for (Index r : m.pooled.index_maps[l])
        if (r < 0 || r >= n) throw Error(ErrorCode::io, "index map entry out of range");
    }
    return m;
  });
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  os << content;
  if (!os) throw Error(ErrorCode::io, "write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

namespace {

json parse_file(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io, path.string() + ": " + e.what());
  }
}

}  // namespace

void save_dataset(const std::filesystem::path& path, const DatasetFile& data) {
  write_text(path, dataset_to_json(data).dump(1) + "\n");
}

DatasetFile load_dataset(const std::filesystem::path& path) { return dataset_from_json(parse_file(path)); }

void save_model(const std::filesystem::path& path, const FittedModel& model) {
  write_text(path, model_to_json(model).dump(1) + "\n");
}

FittedModel load_model(const std::filesystem::path& path) { return model_from_json(parse_file(path)); }

void write_prediction_csv(std::ostream& os, const Prediction& p) {
  const Index d = p.locations.cols();
  for (Index k = 0; k < d; ++k) os << 'x' << k << ',';
  os << "mean,variance";
  if (p.components) os << ",trend,residual,var_residual,var_trend";
  os << '\n';
  for (Index i = 0; i < p.mean.size(); ++i) {
    for (Index k = 0; k < d; ++k) os << format_double(p.locations(i, k)) << ',';
    os << format_double(p.mean(i)) << ',' << format_double(p.variance(i));
    if (p.components) {
      const auto& c = *p.components;
      os << ',' << format_double(c.trend(i)) << ',' << format_double(c.residual(i)) << ','
         << format_double(c.var_residual(i)) << ',' << format_double(c.var_trend(i));
    }
    os << '\n';
  }
}

void write_em_trace_csv(std::ostream& os, const OuterTrace& trace) {
  os << "outer,em_iteration,objective,delta_mu_alpha,max_delta_alpha\n";
  for (std::size_t o = 0; o < trace.em.size(); ++o) {
    for (const auto& it : trace.em[o].iterations) {
      os << o + 1 << ',' << it.index << ',' << format_double(it.objective) << ',' << format_double(it.delta_mu_alpha)
         << ',' << format_double(it.max_delta_alpha) << '\n';
    }
  }
}

void write_outer_trace_csv(std::ostream& os, const OuterTrace& trace) {
  os << "outer,mean_delta_beta,max_delta_beta,em_iterations,em_converged\n";
  for (const auto& it : trace.iterations) {
    os << it.index << ',' << format_double(it.mean_delta_beta) << ',' << format_double(it.max_delta_beta) << ','
       << it.em_iterations << ',' << (it.em_converged ? 1 : 0) << '\n';
  }
  os << "# stop," << to_string(trace.stop) << '\n';
}

}  // namespace hmtmf
