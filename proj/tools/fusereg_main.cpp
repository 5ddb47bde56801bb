#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fusereg/config.hpp"
#include "fusereg/errors.hpp"

using fusereg::RunConfig;

int main(int argc, char** argv) {
  CLI::App app{"Calibrated regression estimation for fused two-sample data"};

  std::string config_path, mode_name, out_dir, schema_text, variance_text, t_form;
  std::string method, link_name, y_noise;
  std::optional<long long> n;
  std::optional<int> reps, threads;
  std::optional<std::uint64_t> seed;
  std::optional<long long> draw_count;
  std::optional<double> ci_level;
  std::vector<std::string> data_paths, estimators, prop_models, imp_models;

  app.add_option("--config", config_path, "JSON config file; flags override its values");
  app.add_option("--mode", mode_name, "simulate | estimate | combine");
  app.add_option("--n", n, "sample size per simulated dataset");
  app.add_option("--reps", reps, "Monte Carlo replications");
  app.add_option("--seed", seed, "base seed; all randomness derives from it");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--data", data_paths, "fused CSV path(s); repeat for combine replicates");
  app.add_option("--schema", schema_text, "column roles, e.g. R=source,Y=outcome,V1=common,W=auxiliary");
  app.add_option("--D", draw_count, "imputation draws per row");
  app.add_option("--variance", variance_text, "plugin[:ref] | bootstrap[:B] | none");
  app.add_option("--estimators", estimators, "simulate-mode estimators, e.g. MR-1111 DR-1010");
  app.add_option("--method", method, "estimate-mode estimator: MR | DR");
  app.add_option("--link", link_name, "outcome link: identity | logistic | exponential");
  app.add_option("--t", t_form, "t-function formula over the common covariates");
  app.add_option("--prop", prop_models, "propensity model formula(s)");
  app.add_option("--imp", imp_models, "imputation model formula(s)");
  app.add_option("--threads", threads, "worker threads (0 = all cores)");
  app.add_option("--ci-level", ci_level, "confidence level (default 0.95)");
  app.add_option("--y-noise", y_noise, "simulated Y-noise reading: variance | sd");

  // accept `fusereg simulate ...` as sugar for --mode simulate
  std::vector<char*> args(argv, argv + argc);
  if (args.size() > 1) {
    const std::string first = args[1];
    if (first == "simulate" || first == "estimate" || first == "combine") {
      mode_name = first;
      args.erase(args.begin() + 1);
    }
  }

  try {
    app.parse(static_cast<int>(args.size()), args.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = fusereg::parse_config(config_path);
    if (!mode_name.empty()) cfg.mode = fusereg::parse_mode(mode_name);
    if (n) cfg.n = *n;
    if (reps) cfg.reps = *reps;
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!data_paths.empty()) cfg.data_paths = data_paths;
    if (!schema_text.empty()) cfg.schema = fusereg::parse_schema_flag(schema_text);
    if (draw_count) cfg.D = *draw_count;
    if (!variance_text.empty()) cfg.variance = fusereg::parse_variance_flag(variance_text);
    if (!estimators.empty()) cfg.estimators = estimators;
    if (!method.empty()) cfg.method = method;
    if (!link_name.empty()) cfg.link_name = link_name;
    if (!t_form.empty()) cfg.t_form = t_form;
    if (!prop_models.empty()) cfg.propensity_models = prop_models;
    if (!imp_models.empty()) cfg.imputation_models = imp_models;
    if (threads) cfg.threads = *threads;
    if (ci_level) cfg.ci_level = *ci_level;
    if (!y_noise.empty()) cfg.y_noise = y_noise;
    return fusereg::run(cfg);
  } catch (const fusereg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
