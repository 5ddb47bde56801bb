#include "fusereg/pipeline.hpp"

#include <limits>

namespace fusereg {

FittedModelBank fit_model_bank(const ModelBank& bank, const FusedDataset& data,
                               const TFunction& t_fn, const OutcomeLink& link, Eigen::Index D,
                               std::uint64_t seed,
                               const std::vector<std::uint64_t>& imputation_ids) {
  FittedModelBank fitted;
  for (const ModelSpec& spec : bank.propensity)
    fitted.propensity.push_back(fit_propensity(spec, data));
  for (std::size_t k = 0; k < bank.imputation.size(); ++k) {
    fitted.imputation.push_back(fit_imputation(bank.imputation[k], data));
    const std::uint64_t id = k < imputation_ids.size() ? imputation_ids[k] : k;
    Rng rng = make_rng(derive_seed(seed, Stream::Draws, id));
    fitted.draws.push_back(draw_imputations(fitted.imputation.back(), data, D, rng));
    fitted.theta_k.push_back(
        solve_theta_k(fitted.imputation.back(), data, t_fn, link, fitted.draws.back()));
  }
  return fitted;
}

MrAnalysis run_mr_analysis(const ModelBank& bank, const FusedDataset& data, const TFunction& t_fn,
                           const OutcomeLink& link, Eigen::Index D, std::uint64_t seed,
                           const VarianceSpec& variance,
                           const std::vector<std::uint64_t>& imputation_ids) {
  MrAnalysis out;
  out.bank = fit_model_bank(bank, data, t_fn, link, D, seed, imputation_ids);
  out.constraints = build_constraints(out.bank.propensity, out.bank.imputation, out.bank.theta_k,
                                      t_fn, link, data, out.bank.draws);
  out.calibration = calibrate(out.constraints, data);
  out.report = solve_mr(out.calibration, data, t_fn, link);
  if (!out.calibration.dropped_cols.empty())
    out.report.warnings.push_back("dropped " + std::to_string(out.calibration.dropped_cols.size()) +
                                  " degenerate constraint column(s)");

  if (variance.kind == VarianceSpec::Kind::PlugIn) {
    if (bank.propensity.empty())
      throw ConfigError("plug-in variance needs a propensity model; use the bootstrap fallback");
    out.plugin = estimate_variance_mr(out.report.theta, out.constraints, out.calibration,
                                      out.bank.propensity, data, t_fn, link,
                                      variance.reference_ps_index);
    attach_inference(out.report, out.plugin->theta_variance(data.n()), out.report.ci_level);
  }
  return out;
}

EstimateReport run_dr_analysis(const ModelBank& bank, const FusedDataset& data,
                               const TFunction& t_fn, const OutcomeLink& link, Eigen::Index D,
                               std::uint64_t seed, bool with_variance,
                               const std::vector<std::uint64_t>& imputation_ids) {
  if (bank.propensity.size() != 1 || bank.imputation.size() != 1)
    throw ConfigError("DR uses exactly one propensity and one imputation model");
  FittedModelBank fitted = fit_model_bank(bank, data, t_fn, link, D, seed, imputation_ids);
  EstimateReport report =
      solve_dr(fitted.propensity[0], fitted.imputation[0], data, t_fn, link, fitted.draws[0]);
  if (with_variance) {
    const Eigen::MatrixXd var = estimate_variance_dr(
        report.theta, fitted.propensity[0], fitted.imputation[0], data, t_fn, link,
        fitted.draws[0]);
    attach_inference(report, var, report.ci_level);
  }
  return report;
}

namespace {

FusedDataset resample_within_samples(const FusedDataset& data, Rng& rng) {
  const auto& prim = data.primary_rows();
  const auto& aux = data.auxiliary_rows();
  std::uniform_int_distribution<std::size_t> pick_prim(0, prim.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_aux(0, aux.size() - 1);

  const Eigen::Index n = data.n();
  Eigen::VectorXi r(n);
  Eigen::MatrixXd v(n, data.dim_v());
  Eigen::VectorXd y(n);
  Eigen::MatrixXd w(n, data.dim_w());
  Eigen::Index at = 0;
  for (std::size_t k = 0; k < prim.size(); ++k, ++at) {
    const Eigen::Index i = prim[pick_prim(rng)];
    r(at) = 1;
    v.row(at) = data.v().row(i);
    y(at) = data.y_raw()(i);
    w.row(at).setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  for (std::size_t k = 0; k < aux.size(); ++k, ++at) {
    const Eigen::Index i = aux[pick_aux(rng)];
    r(at) = 0;
    v.row(at) = data.v().row(i);
    y(at) = std::numeric_limits<double>::quiet_NaN();
    w.row(at) = data.w_raw().row(i);
  }
  return FusedDataset(std::move(r), std::move(v), std::move(y), std::move(w), data.v_names(),
                      data.w_names(), data.source_name(), data.outcome_name());
}

} // namespace

Eigen::MatrixXd bootstrap_variance_mr(const ModelBank& bank, const FusedDataset& data,
                                      const ModelSpec& t_spec, const OutcomeLink& link,
                                      Eigen::Index D, std::uint64_t seed, int B) {
  if (B < 2) throw ConfigError("bootstrap needs at least 2 draws");
  const Eigen::Index p = theta_dim(data);
  Eigen::MatrixXd thetas(B, p);
  Eigen::Index kept = 0;
  for (int b = 0; b < B; ++b) {
    Rng rng = make_rng(derive_seed(seed, Stream::Bootstrap, static_cast<std::uint64_t>(b)));
    try {
      const FusedDataset resampled = resample_within_samples(data, rng);
      const TFunction t_fn = default_t(resampled, t_spec);
      VarianceSpec none;
      none.kind = VarianceSpec::Kind::None;
      const MrAnalysis a =
          run_mr_analysis(bank, resampled, t_fn, link, D,
                          derive_seed(seed, Stream::Bootstrap, static_cast<std::uint64_t>(b), 1),
                          none);
      thetas.row(kept++) = a.report.theta.transpose();
    } catch (const Error&) {
      // unstable resample; skip
    }
  }
  if (kept < B / 2)
    throw NonconvergenceError("more than half of the bootstrap resamples failed");
  const Eigen::MatrixXd used = thetas.topRows(kept);
  const Eigen::RowVectorXd mean = used.colwise().mean();
  return (used.transpose() * used / static_cast<double>(kept) - mean.transpose() * mean) *
         static_cast<double>(kept) / static_cast<double>(kept - 1);
}

} // namespace fusereg
