#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "fusereg/config.hpp"
#include "fusereg/sim_harness.hpp"

namespace fusereg {

namespace {

using nlohmann::json;

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw IoError("write to '" + path + "' failed");
}

json report_to_json(const EstimateReport& report) {
  json j;
  j["method"] = report.method;
  json coef = json::array();
  for (Eigen::Index c = 0; c < report.theta.size(); ++c) {
    json row;
    row["index"] = "theta" + std::to_string(c + 1);
    row["label"] = report.labels.at(c);
    row["estimate"] = report.theta(c);
    if (report.se) row["se"] = (*report.se)(c);
    if (report.ci) {
      row["ci_low"] = (*report.ci)(c, 0);
      row["ci_high"] = (*report.ci)(c, 1);
    }
    coef.push_back(row);
  }
  j["coefficients"] = coef;
  j["ci_level"] = report.ci_level;
  if (report.variance) {
    json var = json::array();
    for (Eigen::Index a = 0; a < report.variance->rows(); ++a) {
      json row = json::array();
      for (Eigen::Index b = 0; b < report.variance->cols(); ++b)
        row.push_back((*report.variance)(a, b));
      var.push_back(row);
    }
    j["variance"] = var;
  }
  j["solver"] = {{"iterations", report.solver.iterations},
                 {"residual_norm", report.solver.residual_norm},
                 {"converged", report.solver.converged}};
  j["warnings"] = report.warnings;
  return j;
}

std::string report_to_text(const EstimateReport& report) {
  std::ostringstream out;
  out << "method: " << report.method << "\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%-8s %-12s %12s %12s %12s %12s\n", "param", "label",
                "estimate", "se", "ci_low", "ci_high");
  out << line;
  for (Eigen::Index c = 0; c < report.theta.size(); ++c) {
    const std::string idx = "theta" + std::to_string(c + 1);
    if (report.se)
      std::snprintf(line, sizeof(line), "%-8s %-12s %12.6f %12.6f %12.6f %12.6f\n", idx.c_str(),
                    report.labels[c].c_str(), report.theta(c), (*report.se)(c),
                    (*report.ci)(c, 0), (*report.ci)(c, 1));
    else
      std::snprintf(line, sizeof(line), "%-8s %-12s %12.6f\n", idx.c_str(),
                    report.labels[c].c_str(), report.theta(c));
    out << line;
  }
  for (const auto& warning : report.warnings) out << "warning: " << warning << "\n";
  return out.str();
}

json config_to_json(const RunConfig& cfg) {
  json j;
  j["mode"] = cfg.mode == RunConfig::Mode::Simulate   ? "simulate"
              : cfg.mode == RunConfig::Mode::Estimate ? "estimate"
                                                      : "combine";
  j["seed"] = cfg.seed;
  j["D"] = cfg.D;
  j["ci_level"] = cfg.ci_level;
  j["threads"] = cfg.threads;
  j["out"] = cfg.out_dir;
  if (cfg.mode == RunConfig::Mode::Simulate) {
    j["n"] = cfg.n;
    j["reps"] = cfg.reps;
    j["estimators"] = cfg.estimators;
    j["y_noise"] = cfg.y_noise;
  } else {
    j["data"] = cfg.data_paths;
    json schema;
    for (const auto& [col, role] : cfg.schema)
      schema[col] = role == ColumnRole::Source    ? "source"
                    : role == ColumnRole::Outcome ? "outcome"
                    : role == ColumnRole::Common  ? "common"
                                                  : "auxiliary";
    j["schema"] = schema;
    j["propensity_models"] = cfg.propensity_models;
    j["imputation_models"] = cfg.imputation_models;
    j["t"] = cfg.t_form;
    j["method"] = cfg.method;
    j["link"] = cfg.link_name;
    j["variance"] = {{"kind", cfg.variance.kind},
                     {"reference", cfg.variance.reference},
                     {"draws", cfg.variance.draws}};
  }
  return j;
}

struct EstimateArtifacts {
  EstimateReport report;
  json log;
};

EstimateArtifacts estimate_one(const RunConfig& cfg, const FusedDataset& data,
                               std::uint64_t seed) {
  const OutcomeLink link = OutcomeLink::from_name(cfg.link_name);
  if (cfg.t_form.empty())
    throw ConfigError("estimate mode needs a t-function formula under key 't'");
  const ModelSpec t_spec = ModelSpec::parse(cfg.t_form, data.v_names());
  const TFunction t_fn = default_t(data, t_spec);

  ModelBank bank;
  for (const auto& formula : cfg.propensity_models)
    bank.propensity.push_back(ModelSpec::parse(formula, data.v_names()));
  for (const auto& formula : cfg.imputation_models)
    bank.imputation.push_back(ModelSpec::parse(formula, data.v_names()));
  if (bank.propensity.empty() && bank.imputation.empty())
    throw ConfigError("the model bank is empty; list propensity_models and/or imputation_models");

  EstimateArtifacts out;
  out.log["seed"] = seed;
  if (cfg.method == "DR") {
    out.report = run_dr_analysis(bank, data, t_fn, link, cfg.D, seed,
                                 cfg.variance.kind != "none");
  } else {
    VarianceSpec variance;
    if (cfg.variance.kind == "plugin") {
      variance.kind = VarianceSpec::Kind::PlugIn;
      if (cfg.variance.reference < 1 ||
          cfg.variance.reference > static_cast<int>(bank.propensity.size()))
        throw ConfigError("variance reference index " + std::to_string(cfg.variance.reference) +
                          " is outside the propensity bank");
      variance.reference_ps_index = cfg.variance.reference - 1;
    } else {
      variance.kind = VarianceSpec::Kind::None;
    }
    MrAnalysis analysis = run_mr_analysis(bank, data, t_fn, link, cfg.D, seed, variance);
    if (cfg.variance.kind == "bootstrap") {
      const Eigen::MatrixXd var = bootstrap_variance_mr(bank, data, t_spec, link, cfg.D, seed,
                                                        cfg.variance.draws);
      attach_inference(analysis.report, var, cfg.ci_level);
      analysis.report.warnings.push_back("variance: nonparametric bootstrap with " +
                                         std::to_string(cfg.variance.draws) + " draws");
    } else if (cfg.variance.kind == "plugin") {
      attach_inference(analysis.report, analysis.plugin->theta_variance(data.n()), cfg.ci_level);
      analysis.report.warnings.push_back(
          "variance: Theorem-3 plug-in assuming propensity model " +
          std::to_string(cfg.variance.reference) + " is correctly specified");
      out.log["variance"] = {{"cond_H", analysis.plugin->cond_H},
                             {"cond_T", analysis.plugin->cond_T},
                             {"reference_ps_index", cfg.variance.reference}};
    }
    json dropped = json::array();
    for (Eigen::Index c : analysis.constraints.dropped_cols) dropped.push_back(c);
    out.log["calibration"] = {
        {"dropped_constraints", dropped},
        {"primary", {{"iterations", analysis.calibration.primary.iterations},
                     {"grad_norm", analysis.calibration.primary.grad_norm},
                     {"min_slack", analysis.calibration.primary.min_slack}}},
        {"auxiliary", {{"iterations", analysis.calibration.auxiliary.iterations},
                       {"grad_norm", analysis.calibration.auxiliary.grad_norm},
                       {"min_slack", analysis.calibration.auxiliary.min_slack}}}};
    out.report = analysis.report;
  }
  out.log["warnings"] = out.report.warnings;
  return out;
}

int run_simulate(const RunConfig& cfg, json& log) {
  SimConfig sim;
  sim.n = cfg.n;
  sim.reps = cfg.reps;
  sim.seed = cfg.seed;
  sim.D = cfg.D;
  sim.ci_level = cfg.ci_level;
  sim.threads = cfg.threads;
  sim.y_noise = cfg.y_noise == "sd" ? YNoise::SD : YNoise::Variance;
  if (cfg.estimators.empty()) throw ConfigError("simulate mode needs a nonempty estimator list");
  for (const auto& name : cfg.estimators) sim.estimators.push_back(EstimatorSpec::parse(name));

  const SimSummary summary = run_monte_carlo(sim);
  const std::filesystem::path dir(cfg.out_dir);
  write_file((dir / "summary.csv").string(), summary.summary_csv());
  write_file((dir / "summary.txt").string(), summary.summary_text());
  write_file((dir / "diagnostics.csv").string(), summary.diagnostics_csv());
  write_file((dir / "raw_estimates.csv").string(), summary.raw_csv());
  std::cout << summary.summary_text();

  json failures;
  for (std::size_t e = 0; e < summary.estimator_names.size(); ++e)
    failures[summary.estimator_names[e]] = summary.failures[e];
  log["failures"] = failures;
  log["artifacts"] = {"summary.csv", "summary.txt", "diagnostics.csv", "raw_estimates.csv"};
  return 0;
}

int run_estimate(const RunConfig& cfg, json& log) {
  if (cfg.data_paths.size() != 1)
    throw ConfigError("estimate mode needs exactly one data path");
  if (cfg.schema.empty()) throw ConfigError("estimate mode needs a schema");
  const FusedDataset data = read_fused_csv(cfg.data_paths[0], cfg.schema);
  EstimateArtifacts artifacts = estimate_one(cfg, data, cfg.seed);

  const std::filesystem::path dir(cfg.out_dir);
  write_file((dir / "report.json").string(), report_to_json(artifacts.report).dump(2) + "\n");
  write_file((dir / "report.txt").string(), report_to_text(artifacts.report));
  std::cout << report_to_text(artifacts.report);
  log["estimate"] = artifacts.log;
  log["artifacts"] = {"report.json", "report.txt"};
  return 0;
}

int run_combine(const RunConfig& cfg, json& log) {
  if (cfg.data_paths.size() < 2)
    throw ConfigError("Rubin's rule requires M >= 2 replicate data files");
  if (cfg.schema.empty()) throw ConfigError("combine mode needs a schema");
  if (cfg.variance.kind == "none")
    throw ConfigError("combine mode needs per-replicate variances (plugin or bootstrap)");

  std::vector<FusedDataset> replicates;
  for (const auto& path : cfg.data_paths) replicates.push_back(read_fused_csv(path, cfg.schema));
  const ReplicateSet reps(std::move(replicates));

  const std::filesystem::path dir(cfg.out_dir);
  std::vector<EstimateReport> reports;
  json rep_logs = json::array();
  for (Eigen::Index ridx = 0; ridx < reps.size(); ++ridx) {
    EstimateArtifacts artifacts =
        estimate_one(cfg, reps.replicates[ridx],
                     derive_seed(cfg.seed, {static_cast<std::uint64_t>(ridx)}));
    write_file((dir / ("replicate_" + std::to_string(ridx + 1) + "_report.json")).string(),
               report_to_json(artifacts.report).dump(2) + "\n");
    rep_logs.push_back(artifacts.log);
    reports.push_back(std::move(artifacts.report));
  }
  const EstimateReport combined = rubin_combine(reports);
  write_file((dir / "report.json").string(), report_to_json(combined).dump(2) + "\n");
  write_file((dir / "report.txt").string(), report_to_text(combined));
  std::cout << report_to_text(combined);
  log["replicates"] = rep_logs;
  log["artifacts"] = {"report.json", "report.txt"};
  return 0;
}

} // namespace

int run(const RunConfig& cfg) {
  try {
    std::filesystem::create_directories(cfg.out_dir);
    json log;
    log["config"] = config_to_json(cfg);
    int status = 0;
    switch (cfg.mode) {
      case RunConfig::Mode::Simulate: status = run_simulate(cfg, log); break;
      case RunConfig::Mode::Estimate: status = run_estimate(cfg, log); break;
      case RunConfig::Mode::Combine: status = run_combine(cfg, log); break;
    }
    write_file((std::filesystem::path(cfg.out_dir) / "run_log.json").string(),
               log.dump(2) + "\n");
    return status;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.category() == "ConfigError" ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 3;
  }
}

} // namespace fusereg
