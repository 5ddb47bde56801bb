#ifndef FUSEREG_CONFIG_HPP
#define FUSEREG_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fusereg/data_model.hpp"

namespace fusereg {

/// Validated run configuration for the three CLI modes. Parsed from a JSON
/// config file (flat keys, lists and one nested map for the schema) and/or
/// command-line flags which override file values.
struct RunConfig {
  enum class Mode { Simulate, Estimate, Combine };
  Mode mode = Mode::Simulate;

  std::uint64_t seed = 1;
  long long D = 100;
  double ci_level = 0.95;
  int threads = 0;
  std::string out_dir = ".";

  // simulate
  long long n = 500;
  int reps = 1000;
  std::vector<std::string> estimators;
  std::string y_noise = "variance"; // or "sd"

  // estimate / combine
  std::vector<std::string> data_paths;
  CsvSchema schema;
  std::vector<std::string> propensity_models;
  std::vector<std::string> imputation_models;
  std::string t_form;
  std::string method = "MR"; // MR | DR
  std::string link_name = "identity";

  struct Variance {
    std::string kind = "plugin"; // plugin | bootstrap | none
    int reference = 1;           // 1-based propensity index for the plug-in
    int draws = 500;             // bootstrap draws
  } variance;
};

RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& json_text);

/// Parse "R=source,Y=outcome,V1=common,W=auxiliary" into a schema map.
CsvSchema parse_schema_flag(const std::string& text);

/// Parse "plugin", "plugin:2", "bootstrap:200" or "none".
RunConfig::Variance parse_variance_flag(const std::string& text);

RunConfig::Mode parse_mode(const std::string& name);

/// Execute one configured run, writing all artifacts under out_dir.
/// Returns the process exit status (0 on success).
int run(const RunConfig& config);

} // namespace fusereg

#endif
