#ifndef FUSEREG_MODEL_ZOO_HPP
#define FUSEREG_MODEL_ZOO_HPP

#include <Eigen/Dense>

#include "fusereg/data_model.hpp"
#include "fusereg/model_spec.hpp"
#include "fusereg/rng.hpp"

namespace fusereg {

/// Logistic working model for the data-source propensity pi(V), fitted on
/// all n rows by binomial maximum likelihood.
struct PropensityFit {
  ModelSpec spec;
  Eigen::VectorXd eta_hat; // logit-scale coefficients
  bool converged = false;
  int iterations = 0;
};

/// Linear-Gaussian working model for f(W | V), fitted on the auxiliary rows.
/// Multivariate W is fitted component-wise with independent errors;
/// sigma_hat holds the per-component maximum-likelihood residual SD.
struct ImputationFit {
  ModelSpec spec;
  Eigen::MatrixXd gamma_hat; // n_terms x dim_w, one coefficient column per W component
  Eigen::VectorXd sigma_hat; // dim_w, >= 0
};

/// D Monte Carlo draws of W for every row, stored draw-major:
/// columns [d*dim_w, (d+1)*dim_w) hold draw d.
struct DrawArray {
  Eigen::Index n = 0, D = 0, dim_w = 0;
  Eigen::MatrixXd values; // n x (D * dim_w)

  Eigen::Block<const Eigen::MatrixXd> draw(Eigen::Index d) const {
    return values.block(0, d * dim_w, n, dim_w);
  }
};

/// Mean log-likelihood of the logistic model together with its analytic
/// derivatives; exposed for the finite-difference checks.
double logistic_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXi& r,
                       const Eigen::VectorXd& eta);
Eigen::VectorXd logistic_grad(const Eigen::MatrixXd& x, const Eigen::VectorXi& r,
                              const Eigen::VectorXd& eta);
Eigen::MatrixXd logistic_hessian(const Eigen::MatrixXd& x, const Eigen::VectorXi& r,
                                 const Eigen::VectorXd& eta);

/// Newton-Raphson with step-halving on the binomial log-likelihood.
/// Converges when the mean-gradient sup-norm drops below 1e-10.
PropensityFit fit_propensity(const ModelSpec& spec, const FusedDataset& data);

/// Component-wise OLS (Gaussian MLE) on the auxiliary rows; residual SD uses
/// the MLE denominator n0.
ImputationFit fit_imputation(const ModelSpec& spec, const FusedDataset& data);

/// expit of the linear predictor for every row of the dataset.
Eigen::VectorXd predict_propensity(const PropensityFit& fit, const FusedDataset& data);

/// Conditional mean of W given V for every row (n x dim_w).
Eigen::MatrixXd imputation_mean(const ImputationFit& fit, const FusedDataset& data);

/// W_i^d = mean(V_i) + sigma_hat * eps, eps iid standard normal across rows,
/// draws and components. Deterministic given the seed.
DrawArray draw_imputations(const ImputationFit& fit, const FusedDataset& data, Eigen::Index D,
                           Rng& rng);

inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace fusereg

#endif
