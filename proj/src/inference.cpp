#include "fusereg/inference.hpp"

#include <cmath>
#include <limits>

namespace fusereg {

namespace {

Eigen::MatrixXd observed_regressors(const FusedDataset& data) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(data.n(), theta_dim(data));
  for (Eigen::Index i : data.auxiliary_rows()) {
    x(i, 0) = 1.0;
    x.block(i, 1, 1, data.dim_w()) = data.w_raw().row(i);
    x.block(i, 1 + data.dim_w(), 1, data.dim_v()) = data.v().row(i);
  }
  return x;
}

Eigen::MatrixXd t_jacobian_row(const TFunction& t_fn, const Eigen::VectorXd& v,
                               const Eigen::VectorXd& theta) {
  if (t_fn.theta_free) return Eigen::MatrixXd::Zero(t_fn.p, theta.size());
  if (t_fn.jacobian) return t_fn.jacobian(v, theta);
  Eigen::MatrixXd j(t_fn.p, theta.size());
  for (Eigen::Index c = 0; c < theta.size(); ++c) {
    const double step = 1e-6 * std::max(1.0, std::abs(theta(c)));
    Eigen::VectorXd hi = theta, lo = theta;
    hi(c) += step;
    lo(c) -= step;
    j.col(c) = (t_fn.eval(v, hi) - t_fn.eval(v, lo)) / (2.0 * step);
  }
  return j;
}

// Gamma_hat = mean_i [ R/pi * Y dt/dtheta - (1-R)/(1-pi) ds/dtheta ]
Eigen::MatrixXd gamma_plugin(const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& pi_hat,
                             const FusedDataset& data, const TFunction& t_fn,
                             const OutcomeLink& link, const Eigen::MatrixXd& t,
                             const Eigen::MatrixXd& x_obs) {
  const Eigen::Index p = t_fn.p;
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.r(i) == 1) {
      if (!t_fn.theta_free)
        gamma += data.y_raw()(i) / pi_hat(i) *
                 t_jacobian_row(t_fn, data.v().row(i).transpose(), theta_hat);
    } else {
      const double lp = x_obs.row(i).dot(theta_hat);
      Eigen::MatrixXd ds = link.mu_prime(lp) * t.row(i).transpose() * x_obs.row(i);
      if (!t_fn.theta_free)
        ds += link.mu(lp) * t_jacobian_row(t_fn, data.v().row(i).transpose(), theta_hat);
      gamma -= ds / (1.0 - pi_hat(i));
    }
  }
  return gamma / static_cast<double>(data.n());
}

Eigen::LDLT<Eigen::MatrixXd> checked_ldlt(const Eigen::MatrixXd& m, const char* name) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0)
    throw SingularMatrixError(std::string(name) + " is not invertible");
  return ldlt;
}

double condition_number(const Eigen::MatrixXd& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

} // namespace

VariancePlugIn estimate_variance_mr(const Eigen::VectorXd& theta_hat, const ConstraintSet& cs,
                                    const CalibrationResult& calib,
                                    const std::vector<PropensityFit>& prop_fits,
                                    const FusedDataset& data, const TFunction& t_fn,
                                    const OutcomeLink& link, int reference_ps_index) {
  if (reference_ps_index < 0 ||
      reference_ps_index >= static_cast<int>(prop_fits.size()))
    throw SingularMatrixError("reference propensity index out of range");
  const PropensityFit& ref = prop_fits[reference_ps_index];
  if (!ref.converged)
    throw NonconvergenceError("reference propensity fit did not converge");

  const Eigen::Index n = data.n();
  const Eigen::Index m = data.m();
  const Eigen::Index p = t_fn.p;
  const Eigen::Index c_dim = cs.h.cols();

  const Eigen::VectorXd pi = cs.pi_hat.col(reference_ps_index);
  const double tau = cs.tau_hat(reference_ps_index);
  const Eigen::MatrixXd t = t_matrix(t_fn, data, theta_hat);
  const Eigen::MatrixXd x_obs = observed_regressors(data);

  // calibration-weighted estimates of E(Yt) and E(s); equal at theta_hat
  Eigen::VectorXd eyt = Eigen::VectorXd::Zero(p);
  const auto& prim = data.primary_rows();
  for (std::size_t k = 0; k < prim.size(); ++k)
    eyt += calib.omega1(static_cast<Eigen::Index>(k)) * data.y_raw()(prim[k]) *
           t.row(prim[k]).transpose();
  Eigen::VectorXd es = Eigen::VectorXd::Zero(p);
  const auto& aux = data.auxiliary_rows();
  for (std::size_t k = 0; k < aux.size(); ++k)
    es += calib.omega0(static_cast<Eigen::Index>(k)) *
          link.mu(x_obs.row(aux[k]).dot(theta_hat)) * t.row(aux[k]).transpose();

  VariancePlugIn out;
  out.reference_ps_index = reference_ps_index;

  // F,H use the primary rows with 1/pi^2 weights and G,T the auxiliary rows
  // with 1/(1-pi)^2 weights, exactly as the estimating-equation expansion
  // produces them; F H^-1 and G T^-1 are then weighted regression
  // coefficients of the centered moments on h, so numerator and denominator
  // share their sampling fluctuations.
  out.F_hat.setZero(p, c_dim);
  out.H_hat.setZero(c_dim, c_dim);
  out.G_hat.setZero(p, c_dim);
  out.T_hat.setZero(c_dim, c_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd hi = cs.h.row(i);
    if (data.r(i) == 1) {
      const double inv2 = 1.0 / (pi(i) * pi(i));
      out.F_hat += (data.y_raw()(i) * t.row(i).transpose() - eyt) * hi * inv2;
      out.H_hat += hi.transpose() * hi * inv2;
    } else {
      const double q = 1.0 - pi(i);
      const double inv2 = 1.0 / (q * q);
      out.G_hat += (link.mu(x_obs.row(i).dot(theta_hat)) * t.row(i).transpose() - es) * hi * inv2;
      out.T_hat += hi.transpose() * hi * inv2;
    }
  }
  out.F_hat *= tau / static_cast<double>(m);
  out.H_hat /= static_cast<double>(n);
  out.G_hat *= (1.0 - tau) / static_cast<double>(n - m);
  out.T_hat /= static_cast<double>(n);
  out.cond_H = condition_number(out.H_hat);
  out.cond_T = condition_number(out.T_hat);

  Eigen::MatrixXd fh = Eigen::MatrixXd::Zero(p, c_dim);
  Eigen::MatrixXd gt = Eigen::MatrixXd::Zero(p, c_dim);
  if (c_dim > 0) {
    fh = checked_ldlt(out.H_hat, "H_hat").solve(out.F_hat.transpose()).transpose();
    gt = checked_ldlt(out.T_hat, "T_hat").solve(out.G_hat.transpose()).transpose();
  }

  // score of the reference propensity model: Psi_i = (R_i - pi_i) x_i
  const Eigen::MatrixXd x_ref = build_design_matrix(ref.spec, data, RowSelector::All);
  const Eigen::Index q_dim = x_ref.cols();
  Eigen::MatrixXd psi(n, q_dim);
  for (Eigen::Index i = 0; i < n; ++i)
    psi.row(i) = (data.r(i) - pi(i)) * x_ref.row(i);
  out.score_cov = psi.transpose() * psi / static_cast<double>(n);

  const auto q_row = [&](Eigen::Index i, const Eigen::MatrixXd& fh_c,
                         const Eigen::MatrixXd& gt_c) -> Eigen::VectorXd {
    const Eigen::VectorXd hcol = cs.h.row(i).transpose();
    Eigen::VectorXd qi;
    if (data.r(i) == 1) {
      qi = (data.y_raw()(i) * t.row(i).transpose() - eyt) / pi(i);
      qi -= (1.0 - pi(i)) / pi(i) * (fh_c * hcol);
      qi -= gt_c * hcol;
    } else {
      qi = fh_c * hcol;
      qi -= (link.mu(x_obs.row(i).dot(theta_hat)) * t.row(i).transpose() - es) / (1.0 - pi(i));
      qi += pi(i) / (1.0 - pi(i)) * (gt_c * hcol);
    }
    return qi;
  };


  out.Gamma_hat = gamma_plugin(theta_hat, pi, data, t_fn, link, t, x_obs);
  Eigen::FullPivLU<Eigen::MatrixXd> gamma_lu(out.Gamma_hat);
  if (!gamma_lu.isInvertible()) throw SingularMatrixError("Gamma_hat is not invertible");

  // The products F H^-1, G T^-1 and E(QPsi'){E(Psi Psi')}^-1 are regression
  // coefficients; evaluating them on the rows they were fitted on absorbs
  // real variance into the projection (the 1/pi^2 weights concentrate the
  // effective sample size onto few rows), which deflates Var(L) in moderate
  // samples. The per-row L therefore uses coefficients fitted on the
  // complement of the row's fold, averaged over several two-fold partitions
  // to damp partition noise. Reported F/H/G/T/cross_cov stay full-sample.
  Eigen::MatrixXd q_full(n, p);
  for (Eigen::Index i = 0; i < n; ++i) q_full.row(i) = q_row(i, fh, gt).transpose();
  out.cross_cov = q_full.transpose() * psi / static_cast<double>(n);

  Eigen::LDLT<Eigen::MatrixXd> score_ldlt = checked_ldlt(out.score_cov, "E(Psi Psi')");
  const Eigen::MatrixXd proj = score_ldlt.solve(out.cross_cov.transpose()).transpose(); // p x q

  const int n_folds = 2;
  const int n_splits = 5;
  out.L_cov.setZero(p, p);
  std::vector<int> fold(n);
  Eigen::MatrixXd l_rows(n, p);
  for (int split = 0; split < n_splits; ++split) {
    {
      int next_primary = 0, next_aux = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int counter = data.r(i) == 1 ? next_primary++ : next_aux++;
        fold[i] = (counter >> split) & 1; // a different block interleaving per split
      }
    }
    std::vector<Eigen::MatrixXd> fh_fold(n_folds, fh), gt_fold(n_folds, gt),
        proj_fold(n_folds, proj);
    if (c_dim > 0) {
      for (int k = 0; k < n_folds; ++k) {
        Eigen::MatrixXd f_k = Eigen::MatrixXd::Zero(p, c_dim);
        Eigen::MatrixXd h_k = Eigen::MatrixXd::Zero(c_dim, c_dim);
        Eigen::MatrixXd g_k = Eigen::MatrixXd::Zero(p, c_dim);
        Eigen::MatrixXd t_k = Eigen::MatrixXd::Zero(c_dim, c_dim);
        double m_k = 0, n_k = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (fold[i] == k) continue;
          n_k += 1.0;
          const Eigen::RowVectorXd hi = cs.h.row(i);
          if (data.r(i) == 1) {
            m_k += 1.0;
            const double inv2 = 1.0 / (pi(i) * pi(i));
            f_k += (data.y_raw()(i) * t.row(i).transpose() - eyt) * hi * inv2;
            h_k += hi.transpose() * hi * inv2;
          } else {
            const double inv2 = 1.0 / ((1.0 - pi(i)) * (1.0 - pi(i)));
            g_k += (link.mu(x_obs.row(i).dot(theta_hat)) * t.row(i).transpose() - es) * hi * inv2;
            t_k += hi.transpose() * hi * inv2;
          }
        }
        f_k *= tau * n_k / std::max(m_k, 1.0);
        g_k *= (1.0 - tau) * n_k / std::max(n_k - m_k, 1.0);
        Eigen::LDLT<Eigen::MatrixXd> h_ldlt(h_k), t_ldlt(t_k);
        if (h_ldlt.info() != Eigen::Success || !h_ldlt.isPositive() ||
            h_ldlt.vectorD().minCoeff() <= 0.0 || t_ldlt.info() != Eigen::Success ||
            !t_ldlt.isPositive() || t_ldlt.vectorD().minCoeff() <= 0.0)
          continue; // fold too small; keep the full-sample coefficients
        fh_fold[k] = h_ldlt.solve(f_k.transpose()).transpose();
        gt_fold[k] = t_ldlt.solve(g_k.transpose()).transpose();

        Eigen::MatrixXd cross_k = Eigen::MatrixXd::Zero(p, q_dim);
        Eigen::MatrixXd score_k = Eigen::MatrixXd::Zero(q_dim, q_dim);
        for (Eigen::Index i = 0; i < n; ++i) {
          if (fold[i] == k) continue;
          cross_k += q_row(i, fh_fold[k], gt_fold[k]) * psi.row(i);
          score_k += psi.row(i).transpose() * psi.row(i);
        }
        Eigen::LDLT<Eigen::MatrixXd> score_k_ldlt(score_k);
        if (score_k_ldlt.info() == Eigen::Success && score_k_ldlt.isPositive() &&
            score_k_ldlt.vectorD().minCoeff() > 0.0)
          proj_fold[k] = score_k_ldlt.solve(cross_k.transpose()).transpose();
      }
    }

    for (Eigen::Index i = 0; i < n; ++i) {
      const int k = fold[i];
      const Eigen::VectorXd li = gamma_lu.solve(q_row(i, fh_fold[k], gt_fold[k]) -
                                                proj_fold[k] * psi.row(i).transpose());
      l_rows.row(i) = li.transpose();
    }
    const Eigen::RowVectorXd lbar = l_rows.colwise().mean();
    out.L_cov +=
        l_rows.transpose() * l_rows / static_cast<double>(n) - lbar.transpose() * lbar;
  }
  out.L_cov /= static_cast<double>(n_splits);
  return out;
}

Eigen::MatrixXd estimate_variance_dr(const Eigen::VectorXd& theta_hat,
                                     const PropensityFit& prop_fit, const ImputationFit& imp_fit,
                                     const FusedDataset& data, const TFunction& t_fn,
                                     const OutcomeLink& link, const DrawArray& draws) {
  (void)imp_fit;
  const Eigen::Index n = data.n();
  const Eigen::Index p = t_fn.p;
  const Eigen::VectorXd pi = predict_propensity(prop_fit, data);
  const Eigen::MatrixXd t = t_matrix(t_fn, data, theta_hat);
  const Eigen::MatrixXd x_obs = observed_regressors(data);
  const Eigen::MatrixXd g = draw_moment_matrix(data, draws, t_fn, link, theta_hat);

  Eigen::MatrixXd phi(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data.r(i) == 1)
      phi.row(i) = (data.y_raw()(i) * t.row(i) - g.row(i)) / pi(i);
    else
      phi.row(i) = -(link.mu(x_obs.row(i).dot(theta_hat)) * t.row(i) - g.row(i)) / (1.0 - pi(i));
  }
  const Eigen::RowVectorXd mean = phi.colwise().mean();
  const Eigen::MatrixXd sigma =
      phi.transpose() * phi / static_cast<double>(n) - mean.transpose() * mean;

  const Eigen::MatrixXd gamma = gamma_plugin(theta_hat, pi, data, t_fn, link, t, x_obs);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gamma);
  if (!lu.isInvertible()) throw SingularMatrixError("Gamma_hat is not invertible");
  const Eigen::MatrixXd ginv = lu.inverse();
  return ginv * sigma * ginv.transpose() / static_cast<double>(n);
}

EstimateReport rubin_combine(const std::vector<EstimateReport>& reports) {
  const int m_reps = static_cast<int>(reports.size());
  if (m_reps < 2) throw DimensionError("Rubin's rule requires M >= 2 replicates");
  const Eigen::Index p = reports[0].theta.size();
  for (const auto& rep : reports) {
    if (rep.theta.size() != p) throw DimensionError("replicate reports disagree on dim theta");
    if (!rep.variance) throw DimensionError("every replicate report needs a variance matrix");
  }

  EstimateReport out;
  out.method = reports[0].method;
  out.labels = reports[0].labels;
  out.ci_level = reports[0].ci_level;

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
  for (const auto& rep : reports) mean += rep.theta;
  mean /= static_cast<double>(m_reps);

  Eigen::MatrixXd within = Eigen::MatrixXd::Zero(p, p);
  for (const auto& rep : reports) within += *rep.variance;
  within /= static_cast<double>(m_reps);

  Eigen::MatrixXd between = Eigen::MatrixXd::Zero(p, p);
  for (const auto& rep : reports) {
    const Eigen::VectorXd d = rep.theta - mean;
    between += d * d.transpose();
  }
  between /= static_cast<double>(m_reps - 1);

  const Eigen::MatrixXd total =
      within + (1.0 + 1.0 / static_cast<double>(m_reps)) * between;

  out.theta = mean;
  out.solver.converged = true;
  attach_inference(out, total, out.ci_level);
  out.warnings.push_back("rubin: combined " + std::to_string(m_reps) + " replicates");
  return out;
}

} // namespace fusereg
