#include "mfrisk/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "mfrisk/errors.hpp"
#include "mfrisk/rng.hpp"

namespace mfrisk {

namespace fs = std::filesystem;

namespace {

const char* const kModelKeys[] = {"h", "theta", "sigma", "n_agents", "horizon", "dt"};

double number_at(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw ParameterError(std::string("config key '") + key + "' must be a number");
  return v.get<double>();
}

}  // namespace

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

void CsvTable::add(std::vector<double> row) {
  if (row.size() != header.size()) throw ParameterError("CSV row width does not match header");
  rows.push_back(std::move(row));
}

std::string CsvTable::str() const {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out += ',';
    out += header[i];
  }
  out += '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_number(row[i]);
    }
    out += '\n';
  }
  return out;
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  std::error_code ec;
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  const fs::path tmp = dir / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), std::streamsize(content.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp, ec);
      throw IoError("failed writing " + tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignore;
    fs::remove(tmp, ignore);
    throw IoError("cannot rename into " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json_file(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParameterError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

json to_json(const ModelParams& p) {
  return json{{"h", p.h},           {"theta", p.theta},     {"sigma", p.sigma},
              {"n_agents", p.n_agents}, {"horizon", p.horizon}, {"dt", p.dt}};
}

json to_json(const GroupSpec& g) {
  json arr = json::array();
  for (std::size_t l = 0; l < g.size(); ++l)
    arr.push_back({{"theta", g.thetas[l]}, {"fraction", g.fractions[l]}});
  return arr;
}

ModelParams model_params_from_json(const json& j, const ModelParams& defaults) {
  if (!j.is_object()) throw ParameterError("model parameters must be a JSON object");
  ModelParams p = defaults;
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : kModelKeys) known = known || key == k;
    if (!known) throw ParameterError("unknown parameter key '" + key + "'");
  }
  if (j.contains("h")) p.h = number_at(j, "h");
  if (j.contains("theta")) p.theta = number_at(j, "theta");
  if (j.contains("sigma")) p.sigma = number_at(j, "sigma");
  if (j.contains("horizon")) p.horizon = number_at(j, "horizon");
  if (j.contains("dt")) p.dt = number_at(j, "dt");
  if (j.contains("n_agents")) {
    const auto& v = j.at("n_agents");
    if (!v.is_number_integer()) throw ParameterError("config key 'n_agents' must be an integer");
    p.n_agents = v.get<int>();
  }
  return p;
}

GroupSpec group_spec_from_json(const json& j) {
  if (!j.is_array()) throw ParameterError("groups must be a JSON array of {theta, fraction}");
  GroupSpec g;
  for (const auto& item : j) {
    if (!item.is_object() || item.size() != 2 || !item.contains("theta") ||
        !item.contains("fraction"))
      throw ParameterError("each group must be an object with exactly 'theta' and 'fraction'");
    g.thetas.push_back(number_at(item, "theta"));
    g.fractions.push_back(number_at(item, "fraction"));
  }
  return g;
}

json to_json(const ExperimentConfig& c) {
  json j = to_json(c.params);
  if (c.groups) j["groups"] = to_json(*c.groups);
  if (c.seed) j["seed"] = *c.seed;
  if (!c.options.empty()) j["options"] = c.options;
  if (c.sweep) j["sweep"] = {{"parameter", c.sweep->parameter}, {"values", c.sweep->values}};
  return j;
}

ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw ParameterError("config must be a JSON object");
  ExperimentConfig c;
  json model = json::object();
  for (const auto& [key, value] : j.items()) {
    if (key == "groups") {
      c.groups = group_spec_from_json(value);
    } else if (key == "seed") {
      if (!value.is_number_unsigned()) throw ParameterError("seed must be a nonnegative integer");
      c.seed = value.get<std::uint64_t>();
    } else if (key == "options") {
      if (!value.is_object()) throw ParameterError("options must be a JSON object");
      c.options = value;
    } else if (key == "sweep") {
      if (!value.is_object() || !value.contains("parameter") || !value.contains("values"))
        throw ParameterError("sweep must be {\"parameter\": name, \"values\": [...]}");
      SweepAxis axis;
      axis.parameter = value.at("parameter").get<std::string>();
      for (const auto& v : value.at("values")) {
        if (!v.is_number()) throw ParameterError("sweep values must be numbers");
        axis.values.push_back(v.get<double>());
      }
      with_parameter(c.params, axis.parameter, 1.0);  // rejects unknown names
      c.sweep = std::move(axis);
    } else {
      model[key] = value;
    }
  }
  c.params = model_params_from_json(model);
  return c;
}

ModelParams with_parameter(ModelParams p, const std::string& name, double value) {
  if (name == "h") p.h = value;
  else if (name == "theta") p.theta = value;
  else if (name == "sigma") p.sigma = value;
  else if (name == "horizon") p.horizon = value;
  else if (name == "dt") p.dt = value;
  else if (name == "n_agents") {
    if (value != std::floor(value) || value < 1 || value > 1e9)
      throw ParameterError("n_agents sweep values must be positive integers");
    p.n_agents = int(value);
  } else {
    throw ParameterError("unknown sweep parameter '" + name + "'");
  }
  return p;
}

json rng_metadata(std::uint64_t seed) {
  return {{"algorithm", std::string(kRngName)}, {"layout", std::string(kRngLayout)}, {"seed", seed}};
}

}  // namespace mfrisk
