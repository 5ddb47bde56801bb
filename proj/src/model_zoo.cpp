#include "fusereg/model_zoo.hpp"

#include <cmath>

namespace fusereg {

namespace {

// log(1 + exp(z)) without overflow
inline double log1pexp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

} // namespace

double logistic_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXi& r,
                       const Eigen::VectorXd& eta) {
  const Eigen::VectorXd lp = x * eta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < lp.size(); ++i) ll += r(i) * lp(i) - log1pexp(lp(i));
  return ll / static_cast<double>(lp.size());
}

Eigen::VectorXd logistic_grad(const Eigen::MatrixXd& x, const Eigen::VectorXi& r,
                              const Eigen::VectorXd& eta) {
  const Eigen::ArrayXd p = (x * eta).array().unaryExpr([](double z) { return expit(z); });
  const Eigen::ArrayXd resid = r.cast<double>().array() - p;
  return x.transpose() * resid.matrix() / static_cast<double>(x.rows());
}

Eigen::MatrixXd logistic_hessian(const Eigen::MatrixXd& x, const Eigen::VectorXi& r,
                                 const Eigen::VectorXd& eta) {
  (void)r;
  const Eigen::ArrayXd p = (x * eta).array().unaryExpr([](double z) { return expit(z); });
  const Eigen::ArrayXd w = p * (1.0 - p);
  return -(x.transpose() * w.matrix().asDiagonal() * x) / static_cast<double>(x.rows());
}

PropensityFit fit_propensity(const ModelSpec& spec, const FusedDataset& data) {
  const Eigen::MatrixXd x = build_design_matrix(spec, data, RowSelector::All);
  const Eigen::VectorXi& r = data.r();

  const int max_iter = 100;
  const double grad_tol = 1e-10;
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(spec.n_terms());
  double ll = logistic_loglik(x, r, eta);
  PropensityFit fit{spec, eta, false, 0};

  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd g = logistic_grad(x, r, eta);
    if (g.lpNorm<Eigen::Infinity>() < grad_tol) {
      fit.converged = true;
      break;
    }
    const Eigen::MatrixXd h = -logistic_hessian(x, r, eta); // positive semidefinite
    Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() < 1e-12 * ldlt.vectorD().maxCoeff())
      throw SingularError("logistic Hessian is not invertible");
    const Eigen::VectorXd step = ldlt.solve(g);

    double scale = 1.0;
    Eigen::VectorXd eta_new;
    double ll_new;
    const double ll_tol = 1e-12 * (1.0 + std::abs(ll)); // roundoff slack near the optimum
    for (int halv = 0;; ++halv) {
      eta_new = eta + scale * step;
      ll_new = logistic_loglik(x, r, eta_new);
      if (ll_new >= ll - ll_tol || halv >= 50) break;
      scale *= 0.5;
    }
    eta = eta_new;
    ll = ll_new;
    fit.iterations = it + 1;
    if (eta.norm() > 1e3)
      throw SeparationError("propensity coefficients diverged (perfect separation?)");
  }
  if (!fit.converged) {
    const Eigen::VectorXd g = logistic_grad(x, r, eta);
    fit.converged = g.lpNorm<Eigen::Infinity>() < grad_tol;
  }
  // fitted probabilities must stay strictly inside (0,1); exact saturation
  // means the likelihood has no interior maximum
  const Eigen::ArrayXd p = (x * eta).array().unaryExpr([](double z) { return expit(z); });
  if (p.minCoeff() <= 0.0 || p.maxCoeff() >= 1.0)
    throw SeparationError("fitted probabilities saturate at 0 or 1 (perfect separation?)");
  fit.eta_hat = eta;
  return fit;
}

ImputationFit fit_imputation(const ModelSpec& spec, const FusedDataset& data) {
  const auto& aux = data.auxiliary_rows();
  const Eigen::Index n0 = static_cast<Eigen::Index>(aux.size());
  const Eigen::Index p = spec.n_terms();
  if (n0 < p + 1)
    throw RankError("auxiliary sample size " + std::to_string(n0) +
                    " too small for " + std::to_string(p) + " terms");
  const Eigen::MatrixXd x = build_design_matrix(spec, data, RowSelector::Auxiliary);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < p) throw RankError("rank-deficient imputation design matrix");

  const Eigen::Index dw = data.dim_w();
  Eigen::MatrixXd wobs(n0, dw);
  for (Eigen::Index k = 0; k < n0; ++k) wobs.row(k) = data.w_raw().row(aux[k]);

  ImputationFit fit{spec, Eigen::MatrixXd(p, dw), Eigen::VectorXd(dw)};
  for (Eigen::Index c = 0; c < dw; ++c) {
    const Eigen::VectorXd beta = qr.solve(wobs.col(c));
    const Eigen::VectorXd resid = wobs.col(c) - x * beta;
    fit.gamma_hat.col(c) = beta;
    fit.sigma_hat(c) = std::sqrt(resid.squaredNorm() / static_cast<double>(n0));
  }
  return fit;
}

Eigen::VectorXd predict_propensity(const PropensityFit& fit, const FusedDataset& data) {
  const Eigen::MatrixXd x = build_design_matrix(fit.spec, data, RowSelector::All);
  return (x * fit.eta_hat).unaryExpr([](double z) { return expit(z); });
}

Eigen::MatrixXd imputation_mean(const ImputationFit& fit, const FusedDataset& data) {
  return build_design_matrix(fit.spec, data, RowSelector::All) * fit.gamma_hat;
}

DrawArray draw_imputations(const ImputationFit& fit, const FusedDataset& data, Eigen::Index D,
                           Rng& rng) {
  if (D < 1) throw IndexError("draw count must be >= 1");
  const Eigen::Index n = data.n();
  const Eigen::Index dw = data.dim_w();
  const Eigen::MatrixXd mean = imputation_mean(fit, data);

  DrawArray draws{n, D, dw, Eigen::MatrixXd(n, D * dw)};
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Eigen::Index d = 0; d < D; ++d)
    for (Eigen::Index c = 0; c < dw; ++c) {
      const double sd = fit.sigma_hat(c);
      for (Eigen::Index i = 0; i < n; ++i)
        draws.values(i, d * dw + c) = mean(i, c) + sd * gauss(rng);
    }
  return draws;
}

} // namespace fusereg
