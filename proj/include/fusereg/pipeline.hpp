#ifndef FUSEREG_PIPELINE_HPP
#define FUSEREG_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "fusereg/el_calibration.hpp"
#include "fusereg/estimators.hpp"
#include "fusereg/inference.hpp"

namespace fusereg {

/// Declarative working-model bank: J propensity and K imputation specs.
struct ModelBank {
  std::vector<ModelSpec> propensity;
  std::vector<ModelSpec> imputation;
};

/// Fitted bank with the shared per-model draws and per-model theta^k. The
/// draws are generated once per (dataset, bank) and reused by the
/// constraints, both weight solves, the theta solvers and the variance
/// plug-in; the seed tags keep them identical across CLI and library runs.
struct FittedModelBank {
  std::vector<PropensityFit> propensity;
  std::vector<ImputationFit> imputation;
  std::vector<DrawArray> draws;          // per imputation model
  std::vector<Eigen::VectorXd> theta_k;  // per imputation model
};

/// Draw-model identifiers for seed derivation; defaults to position in the
/// bank. The simulation harness passes global model ids so results do not
/// depend on which other models share the bank.
FittedModelBank fit_model_bank(const ModelBank& bank, const FusedDataset& data,
                               const TFunction& t_fn, const OutcomeLink& link, Eigen::Index D,
                               std::uint64_t seed,
                               const std::vector<std::uint64_t>& imputation_ids = {});

struct VarianceSpec {
  enum class Kind { None, PlugIn, Bootstrap };
  Kind kind = Kind::PlugIn;
  int reference_ps_index = 0; // 0-based, plug-in only
  int bootstrap_draws = 500;
};

/// Full calibrated analysis of one dataset.
struct MrAnalysis {
  FittedModelBank bank;
  ConstraintSet constraints;
  CalibrationResult calibration;
  EstimateReport report;
  std::optional<VariancePlugIn> plugin;
};

MrAnalysis run_mr_analysis(const ModelBank& bank, const FusedDataset& data, const TFunction& t_fn,
                           const OutcomeLink& link, Eigen::Index D, std::uint64_t seed,
                           const VarianceSpec& variance = {},
                           const std::vector<std::uint64_t>& imputation_ids = {});

/// Doubly robust baseline (exactly one propensity and one imputation model).
EstimateReport run_dr_analysis(const ModelBank& bank, const FusedDataset& data,
                               const TFunction& t_fn, const OutcomeLink& link, Eigen::Index D,
                               std::uint64_t seed, bool with_variance = true,
                               const std::vector<std::uint64_t>& imputation_ids = {});

/// Nonparametric bootstrap fallback for the MR estimator: rows are resampled
/// within each sample, the whole pipeline is re-run per draw, and the
/// covariance of the bootstrap point estimates is returned.
Eigen::MatrixXd bootstrap_variance_mr(const ModelBank& bank, const FusedDataset& data,
                                      const ModelSpec& t_spec, const OutcomeLink& link,
                                      Eigen::Index D, std::uint64_t seed, int B);

} // namespace fusereg

#endif
