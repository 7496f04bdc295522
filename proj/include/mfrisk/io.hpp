#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mfrisk/model.hpp"

namespace mfrisk {

using json = nlohmann::json;

/// Shortest decimal that reads back to the same double.
std::string format_number(double x);

/// Comma-separated table with a mandatory header; LF line endings.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  void add(std::vector<double> row);
  std::string str() const;
};

/// Writes through a temporary file in the same directory and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);
json read_json_file(const std::filesystem::path& path);

json to_json(const ModelParams& p);
json to_json(const GroupSpec& g);
/// Missing keys keep the values of `defaults`; unknown keys are rejected.
ModelParams model_params_from_json(const json& j, const ModelParams& defaults = {});
GroupSpec group_spec_from_json(const json& j);

struct SweepAxis {
  std::string parameter;  ///< one of h, theta, sigma, n_agents, horizon, dt
  std::vector<double> values;
};

/// Contents of a --config file.
struct ExperimentConfig {
  ModelParams params;
  std::optional<GroupSpec> groups;
  std::optional<std::uint64_t> seed;
  json options = json::object();  ///< subcommand-specific settings
  std::optional<SweepAxis> sweep;
};

json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const json& j);

/// Copy of p with one named parameter replaced.
ModelParams with_parameter(ModelParams p, const std::string& name, double value);

/// RNG identification recorded in every output.
json rng_metadata(std::uint64_t seed);

}  // namespace mfrisk
