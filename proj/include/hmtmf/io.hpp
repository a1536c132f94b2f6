#pragma once

// Dataset and model interchange (JSON) and tabular output (CSV, 17 significant digits).

#include "hmtmf/predictor.hpp"
#include "hmtmf/trend.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>

namespace hmtmf {

/// "%.17g"; round-trips every double.
std::string format_double(double v);

struct DatasetFile {
  FidelityTable fidelities;
  std::vector<TaskDataset> tasks;
};

nlohmann::json dataset_to_json(const DatasetFile& data);
DatasetFile dataset_from_json(const nlohmann::json& j);
void save_dataset(const std::filesystem::path& path, const DatasetFile& data);
DatasetFile load_dataset(const std::filesystem::path& path);

nlohmann::json model_to_json(const FittedModel& model);
FittedModel model_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const FittedModel& model);
FittedModel load_model(const std::filesystem::path& path);

/// Columns x0..x{d-1}, mean, variance and, when present, the four components.
void write_prediction_csv(std::ostream& os, const Prediction& p);
void write_em_trace_csv(std::ostream& os, const OuterTrace& trace);
void write_outer_trace_csv(std::ostream& os, const OuterTrace& trace);

/// Writes `content` to `path`, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

}  // namespace hmtmf
