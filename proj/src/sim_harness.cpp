#include "fusereg/sim_harness.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <thread>

namespace fusereg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::vector<std::string> kVNames{"V1", "V2"};

std::string fmt(double x, const char* spec = "%.6g") {
  char buf[48];
  std::snprintf(buf, sizeof(buf), spec, x);
  return buf;
}

} // namespace

FusedDataset generate_dataset(Eigen::Index n, std::uint64_t seed, YNoise y_noise) {
  if (n < 10) throw ConfigError("simulated sample size must be at least 10");
  Rng rng = make_rng(derive_seed(seed, Stream::Dataset));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double y_sd = y_noise == YNoise::Variance ? std::sqrt(0.4) : 0.4;

  Eigen::VectorXi r(n);
  Eigen::MatrixXd v(n, 2);
  Eigen::VectorXd y(n);
  Eigen::MatrixXd w(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v1 = gauss(rng);
    const double v2 = gauss(rng);
    const double wi = -0.5 + 1.5 * v1 + v2 + 3.0 * v1 * v2 + gauss(rng);
    const double pi = expit(0.3 - 0.75 * v1 + 0.75 * v2);
    const int ri = unif(rng) < pi ? 1 : 0;
    const double yi = 1.0 + 2.0 * wi + 2.0 * v1 - 1.5 * v2 + y_sd * gauss(rng);
    r(i) = ri;
    v(i, 0) = v1;
    v(i, 1) = v2;
    y(i) = ri == 1 ? yi : kNaN;
    w(i, 0) = ri == 0 ? wi : kNaN;
  }
  return FusedDataset(std::move(r), std::move(v), std::move(y), std::move(w), kVNames, {"W"});
}

Eigen::VectorXd sim_true_theta() {
  Eigen::VectorXd theta(4);
  theta << 1.0, 2.0, 2.0, -1.5;
  return theta;
}

ModelSpec sim_propensity_spec(int which) {
  if (which == 1) return ModelSpec::parse("1 + V1 + V2", kVNames);
  if (which == 2) return ModelSpec::parse("1 + V1", kVNames);
  throw ConfigError("propensity model index must be 1 or 2");
}

ModelSpec sim_imputation_spec(int which) {
  if (which == 1) return ModelSpec::parse("1 + V1 + V2 + V1:V2", kVNames);
  if (which == 2) return ModelSpec::parse("1 + V1 + V1:V2", kVNames);
  throw ConfigError("imputation model index must be 1 or 2");
}

ModelSpec sim_t_spec() { return ModelSpec::parse("1 + V1 + V2 + V1:V2", kVNames); }

EstimatorSpec EstimatorSpec::parse(const std::string& text) {
  EstimatorSpec spec;
  spec.name = text;
  const auto dash = text.find('-');
  if (dash == std::string::npos)
    throw ConfigError("estimator '" + text + "' is not of the form MR-xxxx / DR-xxxx");
  const std::string method = text.substr(0, dash);
  const std::string mask = text.substr(dash + 1);
  if (method == "MR")
    spec.method = Method::MR;
  else if (method == "DR")
    spec.method = Method::DR;
  else
    throw ConfigError("unknown estimator method '" + method + "' (expected MR or DR)");
  if (mask.size() != 4)
    throw ConfigError("model mask '" + mask + "' must have 4 digits over (pi1, pi2, a1, a2)");
  int ones = 0;
  for (int d = 0; d < 4; ++d) {
    if (mask[d] != '0' && mask[d] != '1')
      throw ConfigError("model mask '" + mask + "' must be a zero-one string");
    spec.mask[d] = mask[d] == '1';
    ones += spec.mask[d];
  }
  if (ones == 0) throw ConfigError("model mask must select at least one model");
  if (spec.method == Method::DR) {
    if (static_cast<int>(spec.mask[0]) + static_cast<int>(spec.mask[1]) != 1 ||
        static_cast<int>(spec.mask[2]) + static_cast<int>(spec.mask[3]) != 1)
      throw ConfigError("DR mask must select exactly one propensity and one imputation model");
  }
  return spec;
}

ModelBank EstimatorSpec::bank() const {
  ModelBank bank;
  if (mask[0]) bank.propensity.push_back(sim_propensity_spec(1));
  if (mask[1]) bank.propensity.push_back(sim_propensity_spec(2));
  if (mask[2]) bank.imputation.push_back(sim_imputation_spec(1));
  if (mask[3]) bank.imputation.push_back(sim_imputation_spec(2));
  return bank;
}

std::vector<std::uint64_t> EstimatorSpec::imputation_ids() const {
  std::vector<std::uint64_t> ids;
  if (mask[2]) ids.push_back(2);
  if (mask[3]) ids.push_back(3);
  return ids;
}

namespace {

struct RepOutcome {
  std::vector<RawRecord> records; // one per estimator
};

RepOutcome run_one_rep(const SimConfig& config, int rep) {
  const Eigen::VectorXd theta0 = sim_true_theta();
  const std::uint64_t rep_seed = derive_seed(config.seed, {static_cast<std::uint64_t>(rep)});

  RepOutcome out;
  out.records.resize(config.estimators.size());
  for (std::size_t e = 0; e < config.estimators.size(); ++e) {
    out.records[e].rep = rep;
    out.records[e].estimator = static_cast<int>(e);
    out.records[e].failed = true;
  }

  std::optional<FusedDataset> data;
  try {
    data.emplace(generate_dataset(config.n, rep_seed, config.y_noise));
  } catch (const Error&) {
    return out; // degenerate draw; every estimator counts as failed
  }
  const TFunction t_fn = default_t(*data, sim_t_spec());
  const OutcomeLink link = OutcomeLink::identity();

  for (std::size_t e = 0; e < config.estimators.size(); ++e) {
    const EstimatorSpec& est = config.estimators[e];
    RawRecord& rec = out.records[e];
    try {
      EstimateReport report;
      if (est.method == EstimatorSpec::Method::MR) {
        VarianceSpec variance; // plug-in, reference = first propensity in the bank
        const ModelBank bank = est.bank();
        if (bank.propensity.empty())
          throw ConfigError("Monte Carlo MR masks need at least one propensity model "
                            "for the plug-in variance");
        const MrAnalysis a = run_mr_analysis(bank, *data, t_fn, link, config.D, rep_seed,
                                             variance, est.imputation_ids());
        report = a.report;
      } else {
        report = run_dr_analysis(est.bank(), *data, t_fn, link, config.D, rep_seed, true,
                                 est.imputation_ids());
      }
      attach_inference(report, *report.variance, config.ci_level);
      rec.theta = report.theta;
      rec.se = *report.se;
      rec.hit.resize(theta0.size());
      for (Eigen::Index c = 0; c < theta0.size(); ++c)
        rec.hit[c] = ((*report.ci)(c, 0) <= theta0(c) && theta0(c) <= (*report.ci)(c, 1)) ? 1 : 0;
      rec.failed = false;
    } catch (const Error&) {
      rec.failed = true;
    }
  }
  return out;
}

} // namespace

SimSummary run_monte_carlo(const SimConfig& config) {
  if (config.reps < 1) throw ConfigError("reps must be >= 1");
  if (config.estimators.empty()) throw ConfigError("no estimators configured");

  SimSummary summary;
  summary.n = config.n;
  summary.reps = config.reps;
  summary.seed = config.seed;
  for (const auto& est : config.estimators) summary.estimator_names.push_back(est.name);
  summary.param_names = {"theta1", "theta2", "theta3", "theta4"};

  std::vector<RepOutcome> outcomes(config.reps);
  int threads = config.threads > 0 ? config.threads
                                   : static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  threads = std::min(threads, config.reps);

  std::vector<std::thread> pool;
  for (int worker = 0; worker < threads; ++worker)
    pool.emplace_back([&, worker] {
      for (int rep = worker; rep < config.reps; rep += threads)
        outcomes[rep] = run_one_rep(config, rep);
    });
  for (auto& th : pool) th.join();

  const Eigen::VectorXd theta0 = sim_true_theta();
  const Eigen::Index p = theta0.size();
  const std::size_t n_est = config.estimators.size();
  summary.cells.assign(n_est, std::vector<CellSummary>(p));
  summary.failures.assign(n_est, 0);

  for (std::size_t e = 0; e < n_est; ++e) {
    std::vector<const RawRecord*> ok;
    for (int rep = 0; rep < config.reps; ++rep) {
      const RawRecord& rec = outcomes[rep].records[e];
      summary.raw.push_back(rec);
      if (rec.failed)
        ++summary.failures[e];
      else
        ok.push_back(&outcomes[rep].records[e]);
    }
    if (ok.empty()) continue;
    const double cnt = static_cast<double>(ok.size());
    for (Eigen::Index c = 0; c < p; ++c) {
      double sum = 0, sum_sq_err = 0, hits = 0, se_sum = 0;
      for (const RawRecord* rec : ok) {
        sum += rec->theta(c);
        const double err = rec->theta(c) - theta0(c);
        sum_sq_err += err * err;
        hits += rec->hit[c];
        se_sum += rec->se(c);
      }
      CellSummary& cell = summary.cells[e][c];
      const double mean = sum / cnt;
      cell.bias = mean - theta0(c);
      cell.rmse = std::sqrt(sum_sq_err / cnt);
      cell.cp = hits / cnt;
      cell.mean_se = se_sum / cnt;
      double var = 0;
      for (const RawRecord* rec : ok) var += (rec->theta(c) - mean) * (rec->theta(c) - mean);
      cell.mc_sd = ok.size() > 1 ? std::sqrt(var / (cnt - 1.0)) : 0.0;
    }
  }
  return summary;
}

std::string SimSummary::summary_csv() const {
  std::ostringstream out;
  out << "estimator";
  for (const auto& par : param_names)
    out << ',' << par << "_bias," << par << "_rmse," << par << "_cp";
  out << '\n';
  for (std::size_t e = 0; e < estimator_names.size(); ++e) {
    out << estimator_names[e];
    for (const auto& cell : cells[e])
      out << ',' << fmt(100.0 * cell.bias) << ',' << fmt(100.0 * cell.rmse) << ','
          << fmt(100.0 * cell.cp);
    out << '\n';
  }
  return out.str();
}

std::string SimSummary::summary_text() const {
  std::ostringstream out;
  out << "n=" << n << " reps=" << reps << " seed=" << seed << " (values x100)\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s", "estimator");
  out << line;
  for (const auto& par : param_names) {
    std::snprintf(line, sizeof(line), " | %8s %8s %8s", (par + ".bias").c_str(),
                  (par + ".rmse").c_str(), (par + ".cp").c_str());
    out << line;
  }
  out << " | fail\n";
  for (std::size_t e = 0; e < estimator_names.size(); ++e) {
    std::snprintf(line, sizeof(line), "%-10s", estimator_names[e].c_str());
    out << line;
    for (const auto& cell : cells[e]) {
      std::snprintf(line, sizeof(line), " | %8.1f %8.1f %8.1f", 100.0 * cell.bias,
                    100.0 * cell.rmse, 100.0 * cell.cp);
      out << line;
    }
    std::snprintf(line, sizeof(line), " | %4d\n", failures[e]);
    out << line;
  }
  return out.str();
}

std::string SimSummary::diagnostics_csv() const {
  std::ostringstream out;
  out << "estimator,param,mc_sd,mean_se,failures\n";
  for (std::size_t e = 0; e < estimator_names.size(); ++e)
    for (std::size_t c = 0; c < param_names.size(); ++c)
      out << estimator_names[e] << ',' << param_names[c] << ',' << fmt(cells[e][c].mc_sd, "%.10g")
          << ',' << fmt(cells[e][c].mean_se, "%.10g") << ',' << failures[e] << '\n';
  return out.str();
}

std::string SimSummary::raw_csv() const {
  std::ostringstream out;
  out << "estimator,rep,failed";
  for (const auto& par : param_names) out << ',' << par;
  for (const auto& par : param_names) out << ",se_" << par;
  for (const auto& par : param_names) out << ",hit_" << par;
  out << '\n';
  for (const auto& rec : raw) {
    out << estimator_names[rec.estimator] << ',' << rec.rep << ',' << (rec.failed ? 1 : 0);
    const Eigen::Index p = static_cast<Eigen::Index>(param_names.size());
    for (Eigen::Index c = 0; c < p; ++c)
      out << ',' << (rec.failed ? "" : fmt(rec.theta(c), "%.17g"));
    for (Eigen::Index c = 0; c < p; ++c)
      out << ',' << (rec.failed ? "" : fmt(rec.se(c), "%.17g"));
    for (Eigen::Index c = 0; c < p; ++c)
      out << ',' << (rec.failed ? "" : std::to_string(rec.hit[c]));
    out << '\n';
  }
  return out.str();
}

Eigen::MatrixXd efficiency_bound_oracle(Eigen::Index mc_draws, std::uint64_t seed, double y_var) {
  Rng rng = make_rng(derive_seed(seed, Stream::Oracle));
  std::normal_distribution<double> gauss(0.0, 1.0);

  Eigen::Matrix4d omega = Eigen::Matrix4d::Zero();
  Eigen::Matrix4d gamma = Eigen::Matrix4d::Zero();
  const double var_w = 1.0;
  const double theta_w = 2.0;
  for (Eigen::Index s = 0; s < mc_draws; ++s) {
    const double v1 = gauss(rng);
    const double v2 = gauss(rng);
    Eigen::Vector4d t(1.0, v1, v2, v1 * v2);
    const double pi = expit(0.3 - 0.75 * v1 + 0.75 * v2);
    const double mw = -0.5 + 1.5 * v1 + v2 + 3.0 * v1 * v2;
    const double var_y = theta_w * theta_w * var_w + y_var; // law of total variance
    const double var_s = theta_w * theta_w * var_w;
    omega += t * t.transpose() * (var_y / pi + var_s / (1.0 - pi));
    Eigen::Vector4d x(1.0, mw, v1, v2); // E(x | V), identity link
    gamma -= t * x.transpose();
  }
  omega /= static_cast<double>(mc_draws);
  gamma /= static_cast<double>(mc_draws);
  const Eigen::Matrix4d ginv = gamma.inverse();
  return ginv * omega * ginv.transpose();
}

} // namespace fusereg
