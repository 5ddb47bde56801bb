#ifndef FUSEREG_ESTIMATORS_HPP
#define FUSEREG_ESTIMATORS_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "fusereg/el_calibration.hpp"
#include "fusereg/model_zoo.hpp"
#include "fusereg/outcome_link.hpp"

namespace fusereg {

struct SolverDiagnostics {
  int iterations = 0;
  double residual_norm = 0.0;
  bool converged = false;
};

/// Point estimate with optional inference, labeled by variable names.
struct EstimateReport {
  std::string method; // "MR", "DR", "IMP1", ...
  Eigen::VectorXd theta;
  std::vector<std::string> labels;
  std::optional<Eigen::MatrixXd> variance; // Var(theta_hat)
  std::optional<Eigen::VectorXd> se;
  std::optional<Eigen::MatrixXd> ci; // p x 2
  double ci_level = 0.95;
  SolverDiagnostics solver;
  std::vector<std::string> warnings;
};

/// Attach se and level-0.95 intervals (theta +- 1.96 se) from a variance
/// matrix for theta_hat.
void attach_inference(EstimateReport& report, const Eigen::MatrixXd& variance, double level = 0.95);

struct SolveOptions {
  bool force_newton = false; // skip the identity-link direct solve (testing)
  int max_iter = 100;
  double tol = 1e-10;
};

/// Residual of the per-imputation-model estimating equation: mean over rows
/// of t(V_i;theta) [ R_i {Y_i - Ehat(Y|V_i;theta)} + (1-R_i) {Ehat(Y|V_i;theta)
/// - mu(theta'x_i)} ], with Ehat the average of mu over the shared draws.
Eigen::VectorXd theta_k_residual(const FusedDataset& data, const TFunction& t_fn,
                                 const OutcomeLink& link, const DrawArray& draws,
                                 const Eigen::VectorXd& theta);
Eigen::MatrixXd theta_k_jacobian(const FusedDataset& data, const TFunction& t_fn,
                                 const OutcomeLink& link, const DrawArray& draws,
                                 const Eigen::VectorXd& theta);

/// Solve the equation above by damped Newton with multistart (zero and a
/// linearized warm start); residual sup-norm below 1e-10 at the root.
Eigen::VectorXd solve_theta_k(const ImputationFit& imp_fit, const FusedDataset& data,
                              const TFunction& t_fn, const OutcomeLink& link,
                              const DrawArray& draws, const SolveOptions& opts = {});

/// Residual of the calibrated estimating equation
///   sum_primary omega1_i Y_i t(V_i;theta) - sum_auxiliary omega0_i s(W_i,V_i;theta).
Eigen::VectorXd mr_residual(const CalibrationResult& calib, const FusedDataset& data,
                            const TFunction& t_fn, const OutcomeLink& link,
                            const Eigen::VectorXd& theta);
Eigen::MatrixXd mr_jacobian(const CalibrationResult& calib, const FusedDataset& data,
                            const TFunction& t_fn, const OutcomeLink& link,
                            const Eigen::VectorXd& theta);

/// Calibrated multiply-robust estimator. Identity link with theta-free t is
/// a linear system and is solved directly unless force_newton is set.
EstimateReport solve_mr(const CalibrationResult& calib, const FusedDataset& data,
                        const TFunction& t_fn, const OutcomeLink& link,
                        const SolveOptions& opts = {});

/// Residual of the influence-function moment for the doubly robust baseline:
/// mean_i [ R_i/pi_i {Y_i t_i - g_i(theta)} - (1-R_i)/(1-pi_i) {s_i(theta) - g_i(theta)} ].
Eigen::VectorXd dr_residual(const Eigen::VectorXd& pi_hat, const FusedDataset& data,
                            const TFunction& t_fn, const OutcomeLink& link,
                            const DrawArray& draws, const Eigen::VectorXd& theta);
Eigen::MatrixXd dr_jacobian(const Eigen::VectorXd& pi_hat, const FusedDataset& data,
                            const TFunction& t_fn, const OutcomeLink& link,
                            const DrawArray& draws, const Eigen::VectorXd& theta);

/// Doubly robust baseline with one propensity and one imputation model.
/// Inverse-weight spikes beyond 1e3 are recorded as warnings, not failures.
EstimateReport solve_dr(const PropensityFit& prop_fit, const ImputationFit& imp_fit,
                        const FusedDataset& data, const TFunction& t_fn, const OutcomeLink& link,
                        const DrawArray& draws, const SolveOptions& opts = {});

} // namespace fusereg

#endif
