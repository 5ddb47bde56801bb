#ifndef FUSEREG_INFERENCE_HPP
#define FUSEREG_INFERENCE_HPP

#include <Eigen/Dense>

#include "fusereg/el_calibration.hpp"
#include "fusereg/estimators.hpp"

namespace fusereg {

/// Sample-average plug-in of the asymptotic-variance building blocks, with
/// the first (or configured) propensity model treated as the correctly
/// specified one. L_cov estimates the variance of sqrt(n) (theta_hat -
/// theta_0); Var(theta_hat) is L_cov / n.
struct VariancePlugIn {
  Eigen::MatrixXd Gamma_hat;  // p x p
  Eigen::MatrixXd F_hat;      // p x C
  Eigen::MatrixXd H_hat;      // C x C
  Eigen::MatrixXd G_hat;      // p x C
  Eigen::MatrixXd T_hat;      // C x C
  Eigen::MatrixXd score_cov;  // q x q, mean of Psi Psi'
  Eigen::MatrixXd cross_cov;  // p x q, mean of Q Psi'
  Eigen::MatrixXd L_cov;      // p x p
  int reference_ps_index = 0; // 0-based index into the propensity bank
  double cond_H = 0.0, cond_T = 0.0;

  Eigen::MatrixXd theta_variance(Eigen::Index n) const { return L_cov / static_cast<double>(n); }
};

/// Plug-in variance for the calibrated estimator. Expectations are replaced
/// by sample averages over all n rows, with inverse-probability factors
/// supplying the unobserved halves; the centering values E(Yt) and E(s) use
/// the calibration-weighted sums, which agree at theta_hat by construction.
VariancePlugIn estimate_variance_mr(const Eigen::VectorXd& theta_hat, const ConstraintSet& cs,
                                    const CalibrationResult& calib,
                                    const std::vector<PropensityFit>& prop_fits,
                                    const FusedDataset& data, const TFunction& t_fn,
                                    const OutcomeLink& link, int reference_ps_index = 0);

/// Sandwich variance of the doubly robust baseline:
/// Gamma^-1 Cov(influence contribution) Gamma^-T / n.
Eigen::MatrixXd estimate_variance_dr(const Eigen::VectorXd& theta_hat,
                                     const PropensityFit& prop_fit, const ImputationFit& imp_fit,
                                     const FusedDataset& data, const TFunction& t_fn,
                                     const OutcomeLink& link, const DrawArray& draws);

/// Rubin's rule across M >= 2 replicate reports: pooled mean, within +
/// (1 + 1/M) between variance, refreshed se and intervals.
EstimateReport rubin_combine(const std::vector<EstimateReport>& reports);

} // namespace fusereg

#endif
