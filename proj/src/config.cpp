#include "fusereg/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <json.hpp>

#include "fusereg/outcome_link.hpp"
#include "fusereg/sim_harness.hpp"

namespace fusereg {

namespace {

using nlohmann::json;

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

} // namespace

RunConfig::Mode parse_mode(const std::string& name) {
  if (name == "simulate") return RunConfig::Mode::Simulate;
  if (name == "estimate") return RunConfig::Mode::Estimate;
  if (name == "combine") return RunConfig::Mode::Combine;
  throw ConfigError("unknown mode '" + name + "' (expected simulate|estimate|combine)");
}

CsvSchema parse_schema_flag(const std::string& text) {
  CsvSchema schema;
  std::string::size_type pos = 0;
  while (pos < text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string item = text.substr(pos, comma - pos);
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw ConfigError("schema entry '" + item + "' is not of the form column=role");
    const std::string col = item.substr(0, eq);
    if (schema.count(col)) throw ConfigError("schema assigns column '" + col + "' twice");
    schema[col] = parse_column_role(item.substr(eq + 1));
    pos = comma + 1;
  }
  if (schema.empty()) throw ConfigError("empty schema");
  return schema;
}

RunConfig::Variance parse_variance_flag(const std::string& text) {
  RunConfig::Variance v;
  const auto colon = text.find(':');
  v.kind = text.substr(0, colon == std::string::npos ? text.size() : colon);
  if (v.kind != "plugin" && v.kind != "bootstrap" && v.kind != "none")
    throw ConfigError("unknown variance kind '" + v.kind + "' (plugin|bootstrap|none)");
  if (colon != std::string::npos) {
    const int value = std::atoi(text.c_str() + colon + 1);
    if (value <= 0) throw ConfigError("variance option '" + text + "' needs a positive number");
    if (v.kind == "plugin")
      v.reference = value;
    else
      v.draws = value;
  }
  return v;
}

RunConfig parse_config_text(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");

  static const std::vector<std::string> known{
      "mode",       "seed",     "D",      "ci_level",          "threads",
      "out",        "n",        "reps",   "estimators",        "y_noise",
      "data",       "schema",   "propensity_models", "imputation_models",
      "t",          "method",   "link",   "variance"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key '" + key + "'");

  RunConfig cfg;
  if (j.contains("mode")) cfg.mode = parse_mode(get_as<std::string>(j, "mode"));
  if (j.contains("seed")) cfg.seed = get_as<std::uint64_t>(j, "seed");
  if (j.contains("D")) cfg.D = get_as<long long>(j, "D");
  if (j.contains("ci_level")) cfg.ci_level = get_as<double>(j, "ci_level");
  if (j.contains("threads")) cfg.threads = get_as<int>(j, "threads");
  if (j.contains("out")) cfg.out_dir = get_as<std::string>(j, "out");
  if (j.contains("n")) cfg.n = get_as<long long>(j, "n");
  if (j.contains("reps")) cfg.reps = get_as<int>(j, "reps");
  if (j.contains("estimators")) cfg.estimators = get_as<std::vector<std::string>>(j, "estimators");
  if (j.contains("y_noise")) cfg.y_noise = get_as<std::string>(j, "y_noise");
  if (j.contains("data")) {
    if (j["data"].is_string())
      cfg.data_paths = {get_as<std::string>(j, "data")};
    else
      cfg.data_paths = get_as<std::vector<std::string>>(j, "data");
  }
  if (j.contains("schema")) {
    if (!j["schema"].is_object()) throw ConfigError("config key 'schema' must be an object");
    for (const auto& [col, role] : j["schema"].items()) {
      if (!role.is_string()) throw ConfigError("schema role for '" + col + "' must be a string");
      cfg.schema[col] = parse_column_role(role.get<std::string>());
    }
  }
  if (j.contains("propensity_models"))
    cfg.propensity_models = get_as<std::vector<std::string>>(j, "propensity_models");
  if (j.contains("imputation_models"))
    cfg.imputation_models = get_as<std::vector<std::string>>(j, "imputation_models");
  if (j.contains("t")) cfg.t_form = get_as<std::string>(j, "t");
  if (j.contains("method")) cfg.method = get_as<std::string>(j, "method");
  if (j.contains("link")) cfg.link_name = get_as<std::string>(j, "link");
  if (j.contains("variance")) {
    const json& v = j["variance"];
    if (v.is_string()) {
      cfg.variance = parse_variance_flag(v.get<std::string>());
    } else if (v.is_object()) {
      if (v.contains("kind")) cfg.variance.kind = get_as<std::string>(v, "kind");
      if (v.contains("reference")) cfg.variance.reference = get_as<int>(v, "reference");
      if (v.contains("draws")) cfg.variance.draws = get_as<int>(v, "draws");
      if (cfg.variance.kind != "plugin" && cfg.variance.kind != "bootstrap" &&
          cfg.variance.kind != "none")
        throw ConfigError("unknown variance kind '" + cfg.variance.kind + "'");
    } else {
      throw ConfigError("config key 'variance' must be a string or object");
    }
  }

  // eager validation of enumerated values
  OutcomeLink::from_name(cfg.link_name);
  if (cfg.method != "MR" && cfg.method != "DR")
    throw ConfigError("unknown method '" + cfg.method + "' (expected MR or DR)");
  if (cfg.y_noise != "variance" && cfg.y_noise != "sd")
    throw ConfigError("y_noise must be 'variance' or 'sd'");
  if (cfg.ci_level <= 0.0 || cfg.ci_level >= 1.0)
    throw ConfigError("ci_level must lie strictly between 0 and 1");
  if (cfg.D < 1) throw ConfigError("D must be >= 1");
  for (const auto& est : cfg.estimators) EstimatorSpec::parse(est);
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

} // namespace fusereg
