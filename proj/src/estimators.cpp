#include "fusereg/estimators.hpp"

#include <cmath>
#include <functional>

namespace fusereg {

namespace {

// Ey(i) = D^-1 sum_d mu(theta' x_id) and, when requested, the derivative
// rows J(i,.) = D^-1 sum_d mu'(theta' x_id) x_id' with x_id = (1, W_i^d, V_i).
void draw_conditional_moments(const FusedDataset& data, const DrawArray& draws,
                              const OutcomeLink& link, const Eigen::VectorXd& theta,
                              Eigen::VectorXd& ey, Eigen::MatrixXd* jac) {
  const Eigen::Index n = data.n();
  const Eigen::Index dw = data.dim_w();
  const Eigen::Index dv = data.dim_v();
  const double theta0 = theta(0);
  const Eigen::VectorXd theta_w = theta.segment(1, dw);
  const Eigen::VectorXd theta_v = theta.tail(dv);
  const Eigen::VectorXd base = (data.v() * theta_v).array() + theta0;

  ey.setZero(n);
  Eigen::VectorXd mup_mean;
  Eigen::MatrixXd mup_w;
  if (jac) {
    mup_mean.setZero(n);
    mup_w.setZero(n, dw);
  }
  for (Eigen::Index d = 0; d < draws.D; ++d) {
    const auto wd = draws.draw(d);
    const Eigen::VectorXd lp = base + wd * theta_w;
    ey += lp.unaryExpr([&link](double z) { return link.mu(z); });
    if (jac) {
      const Eigen::ArrayXd mup = lp.unaryExpr([&link](double z) { return link.mu_prime(z); });
      mup_mean += mup.matrix();
      mup_w.array() += wd.array().colwise() * mup;
    }
  }
  const double inv_d = 1.0 / static_cast<double>(draws.D);
  ey *= inv_d;
  if (jac) {
    mup_mean *= inv_d;
    mup_w *= inv_d;
    jac->resize(n, theta.size());
    jac->col(0) = mup_mean;
    jac->middleCols(1, dw) = mup_w;
    jac->rightCols(dv) = data.v().array().colwise() * mup_mean.array();
  }
}

// Observed regressors x_i = (1, W_i, V_i) on auxiliary rows; primary rows are
// zero-filled and must not be read.
Eigen::MatrixXd aux_regressors(const FusedDataset& data) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(data.n(), theta_dim(data));
  for (Eigen::Index i : data.auxiliary_rows()) {
    x(i, 0) = 1.0;
    x.block(i, 1, 1, data.dim_w()) = data.w_raw().row(i);
    x.block(i, 1 + data.dim_w(), 1, data.dim_v()) = data.v().row(i);
  }
  return x;
}

struct RootProblem {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residual;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian; // empty -> finite differences
};

Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& theta) {
  const Eigen::Index p = theta.size();
  Eigen::MatrixXd j(f(theta).size(), p);
  for (Eigen::Index c = 0; c < p; ++c) {
    const double step = 1e-6 * std::max(1.0, std::abs(theta(c)));
    Eigen::VectorXd hi = theta, lo = theta;
    hi(c) += step;
    lo(c) -= step;
    j.col(c) = (f(hi) - f(lo)) / (2.0 * step);
  }
  return j;
}

struct RootAttempt {
  Eigen::VectorXd theta;
  SolverDiagnostics diag;
};

RootAttempt damped_newton(const RootProblem& prob, Eigen::VectorXd theta,
                          const SolveOptions& opts) {
  RootAttempt out;
  Eigen::VectorXd r = prob.residual(theta);
  double rnorm = r.lpNorm<Eigen::Infinity>();
  for (int it = 0; it < opts.max_iter; ++it) {
    if (rnorm < opts.tol) {
      out.diag.converged = true;
      break;
    }
    const Eigen::MatrixXd j = prob.jacobian ? prob.jacobian(theta) : fd_jacobian(prob.residual, theta);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(j);
    if (!lu.isInvertible())
      throw SingularJacobianError("estimating-equation Jacobian is singular");
    const Eigen::VectorXd step = lu.solve(-r);

    double scale = 1.0;
    bool improved = false;
    const double r2 = r.squaredNorm();
    for (int halv = 0; halv < 50; ++halv) {
      const Eigen::VectorXd cand = theta + scale * step;
      const Eigen::VectorXd r_new = prob.residual(cand);
      if (r_new.allFinite() && r_new.squaredNorm() < r2) {
        theta = cand;
        r = r_new;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    out.diag.iterations = it + 1;
    if (!improved) break; // stalled; caller decides via converged flag
    rnorm = r.lpNorm<Eigen::Infinity>();
  }
  out.diag.converged = rnorm < opts.tol;
  out.diag.residual_norm = rnorm;
  out.theta = theta;
  return out;
}

// Multistart wrapper: first converged root wins; converged roots that
// disagree beyond 1e-6 are an error.
RootAttempt multistart_root(const RootProblem& prob, const std::vector<Eigen::VectorXd>& starts,
                            const SolveOptions& opts) {
  std::vector<RootAttempt> converged;
  RootAttempt last;
  for (const auto& s : starts) {
    last = damped_newton(prob, s, opts);
    if (last.diag.converged) converged.push_back(last);
  }
  if (converged.empty())
    throw NonconvergenceError("no Newton start converged (last residual sup-norm " +
                              std::to_string(last.diag.residual_norm) + ")");
  for (std::size_t a = 1; a < converged.size(); ++a)
    if ((converged[a].theta - converged[0].theta).lpNorm<Eigen::Infinity>() > 1e-6)
      throw NonconvergenceError("Newton starts converged to distinct roots");
  return converged.front();
}

// Solve residual(theta) = b - A theta for the identity-link linearization;
// returns nothing when A is singular (the caller falls back to Newton).
std::optional<Eigen::VectorXd> linear_root(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) return std::nullopt;
  return lu.solve(b);
}

} // namespace

void attach_inference(EstimateReport& report, const Eigen::MatrixXd& variance, double level) {
  report.variance = variance;
  report.ci_level = level;
  Eigen::VectorXd se = variance.diagonal().cwiseMax(0.0).cwiseSqrt();
  report.se = se;
  // 1.96 is the contractually pinned 95% multiplier
  const double z = level == 0.95 ? 1.96 : [](double lv) {
    // Acklam's rational approximation of the standard normal quantile
    const double p = 0.5 + lv / 2.0;
    static const double A[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double B[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    const double q = p - 0.5, r = q * q;
    return (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q /
           (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0);
  }(level);
  Eigen::MatrixXd ci(se.size(), 2);
  ci.col(0) = report.theta - z * se;
  ci.col(1) = report.theta + z * se;
  report.ci = ci;
}

Eigen::VectorXd theta_k_residual(const FusedDataset& data, const TFunction& t_fn,
                                 const OutcomeLink& link, const DrawArray& draws,
                                 const Eigen::VectorXd& theta) {
  const Eigen::Index n = data.n();
  Eigen::VectorXd ey;
  draw_conditional_moments(data, draws, link, theta, ey, nullptr);
  const Eigen::MatrixXd t = t_matrix(t_fn, data, theta);
  const Eigen::MatrixXd x_aux = aux_regressors(data);

  Eigen::VectorXd c(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data.r(i) == 1)
      c(i) = data.y_raw()(i) - ey(i);
    else
      c(i) = ey(i) - link.mu(x_aux.row(i).dot(theta));
  }
  return t.transpose() * c / static_cast<double>(n);
}

Eigen::MatrixXd theta_k_jacobian(const FusedDataset& data, const TFunction& t_fn,
                                 const OutcomeLink& link, const DrawArray& draws,
                                 const Eigen::VectorXd& theta) {
  const Eigen::Index n = data.n();
  Eigen::VectorXd ey;
  Eigen::MatrixXd jey;
  draw_conditional_moments(data, draws, link, theta, ey, &jey);
  const Eigen::MatrixXd t = t_matrix(t_fn, data, theta);
  const Eigen::MatrixXd x_aux = aux_regressors(data);

  Eigen::MatrixXd dc(n, theta.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data.r(i) == 1)
      dc.row(i) = -jey.row(i);
    else
      dc.row(i) = jey.row(i) - link.mu_prime(x_aux.row(i).dot(theta)) * x_aux.row(i);
  }
  Eigen::MatrixXd j = t.transpose() * dc / static_cast<double>(n);
  if (!t_fn.theta_free && t_fn.jacobian) {
    Eigen::VectorXd c(n);
    for (Eigen::Index i = 0; i < n; ++i)
      c(i) = data.r(i) == 1 ? data.y_raw()(i) - ey(i)
                            : ey(i) - link.mu(x_aux.row(i).dot(theta));
    for (Eigen::Index i = 0; i < n; ++i)
      j += c(i) * t_fn.jacobian(data.v().row(i).transpose(), theta) / static_cast<double>(n);
  }
  return j;
}

Eigen::VectorXd solve_theta_k(const ImputationFit& imp_fit, const FusedDataset& data,
                              const TFunction& t_fn, const OutcomeLink& link,
                              const DrawArray& draws, const SolveOptions& opts) {
  (void)imp_fit; // draws already realize the fitted imputation law
  const Eigen::Index p = t_fn.p;
  if (p != theta_dim(data))
    throw DimensionError("t-function dimension does not match dim theta");

  RootProblem prob;
  prob.residual = [&](const Eigen::VectorXd& th) {
    return theta_k_residual(data, t_fn, link, draws, th);
  };
  if (t_fn.theta_free || t_fn.jacobian)
    prob.jacobian = [&](const Eigen::VectorXd& th) {
      return theta_k_jacobian(data, t_fn, link, draws, th);
    };

  // linearized warm start: identity-link version of the same moment system
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(p);
  std::vector<Eigen::VectorXd> starts{zero};
  {
    const Eigen::MatrixXd t = t_matrix(t_fn, data, zero);
    const Eigen::MatrixXd x_aux = aux_regressors(data);
    Eigen::VectorXd ey_lin;
    Eigen::MatrixXd xbar; // identity-link derivative = draw-mean regressors
    draw_conditional_moments(data, draws, OutcomeLink::identity(), zero, ey_lin, &xbar);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      if (data.r(i) == 1) {
        a += t.row(i).transpose() * xbar.row(i);
        b += data.y_raw()(i) * t.row(i).transpose();
      } else {
        a += t.row(i).transpose() * (x_aux.row(i) - xbar.row(i));
      }
    }
    a /= static_cast<double>(data.n());
    b /= static_cast<double>(data.n());
    if (auto ws = linear_root(a, b)) {
      if (link.is_identity() && t_fn.theta_free && !opts.force_newton) {
        // the system is exactly this linear one
        const double rn = prob.residual(*ws).lpNorm<Eigen::Infinity>();
        if (rn < 1e-8) return *ws;
      }
      starts.push_back(*ws);
    }
  }
  return multistart_root(prob, starts, opts).theta;
}

Eigen::VectorXd mr_residual(const CalibrationResult& calib, const FusedDataset& data,
                            const TFunction& t_fn, const OutcomeLink& link,
                            const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd t = t_matrix(t_fn, data, theta);
  const Eigen::MatrixXd x_aux = aux_regressors(data);
  Eigen::VectorXd res = Eigen::VectorXd::Zero(t_fn.p);
  const auto& prim = data.primary_rows();
  for (std::size_t k = 0; k < prim.size(); ++k)
    res += calib.omega1(static_cast<Eigen::Index>(k)) * data.y_raw()(prim[k]) *
           t.row(prim[k]).transpose();
  const auto& aux = data.auxiliary_rows();
  for (std::size_t k = 0; k < aux.size(); ++k)
    res -= calib.omega0(static_cast<Eigen::Index>(k)) *
           link.mu(x_aux.row(aux[k]).dot(theta)) * t.row(aux[k]).transpose();
  return res;
}

Eigen::MatrixXd mr_jacobian(const CalibrationResult& calib, const FusedDataset& data,
                            const TFunction& t_fn, const OutcomeLink& link,
                            const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd t = t_matrix(t_fn, data, theta);
  const Eigen::MatrixXd x_aux = aux_regressors(data);
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(t_fn.p, theta.size());
  const auto& aux = data.auxiliary_rows();
  for (std::size_t k = 0; k < aux.size(); ++k) {
    const Eigen::Index i = aux[k];
    j -= calib.omega0(static_cast<Eigen::Index>(k)) *
         link.mu_prime(x_aux.row(i).dot(theta)) * t.row(i).transpose() * x_aux.row(i);
  }
  if (!t_fn.theta_free && t_fn.jacobian) {
    const auto& prim = data.primary_rows();
    for (std::size_t k = 0; k < prim.size(); ++k)
      j += calib.omega1(static_cast<Eigen::Index>(k)) * data.y_raw()(prim[k]) *
           t_fn.jacobian(data.v().row(prim[k]).transpose(), theta);
    for (std::size_t k = 0; k < aux.size(); ++k)
      j -= calib.omega0(static_cast<Eigen::Index>(k)) *
           link.mu(x_aux.row(aux[k]).dot(theta)) *
           t_fn.jacobian(data.v().row(aux[k]).transpose(), theta);
  }
  return j;
}

EstimateReport solve_mr(const CalibrationResult& calib, const FusedDataset& data,
                        const TFunction& t_fn, const OutcomeLink& link,
                        const SolveOptions& opts) {
  const Eigen::Index p = t_fn.p;
  if (p != theta_dim(data))
    throw DimensionError("t-function dimension does not match dim theta");

  EstimateReport report;
  report.method = "MR";
  report.labels = theta_labels(data);

  RootProblem prob;
  prob.residual = [&](const Eigen::VectorXd& th) {
    return mr_residual(calib, data, t_fn, link, th);
  };
  if (t_fn.theta_free || t_fn.jacobian)
    prob.jacobian = [&](const Eigen::VectorXd& th) {
      return mr_jacobian(calib, data, t_fn, link, th);
    };

  // identity-link moment match: b = sum omega1 Y t, A = sum omega0 t x'
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(p);
  const Eigen::MatrixXd t0 = t_matrix(t_fn, data, zero);
  const Eigen::MatrixXd x_aux = aux_regressors(data);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  const auto& prim = data.primary_rows();
  for (std::size_t k = 0; k < prim.size(); ++k)
    b += calib.omega1(static_cast<Eigen::Index>(k)) * data.y_raw()(prim[k]) *
         t0.row(prim[k]).transpose();
  const auto& aux = data.auxiliary_rows();
  for (std::size_t k = 0; k < aux.size(); ++k)
    a += calib.omega0(static_cast<Eigen::Index>(k)) * t0.row(aux[k]).transpose() *
         x_aux.row(aux[k]);

  std::vector<Eigen::VectorXd> starts{zero};
  if (auto ws = linear_root(a, b)) {
    if (link.is_identity() && t_fn.theta_free && !opts.force_newton) {
      report.theta = *ws;
      report.solver.converged = true;
      report.solver.iterations = 0;
      report.solver.residual_norm = prob.residual(*ws).lpNorm<Eigen::Infinity>();
      return report;
    }
    starts.push_back(*ws);
  } else if (link.is_identity() && t_fn.theta_free && !opts.force_newton) {
    throw SingularJacobianError("identity-link MR system matrix is singular");
  }

  RootAttempt root = multistart_root(prob, starts, opts);
  report.theta = root.theta;
  report.solver = root.diag;
  return report;
}

Eigen::VectorXd dr_residual(const Eigen::VectorXd& pi_hat, const FusedDataset& data,
                            const TFunction& t_fn, const OutcomeLink& link,
                            const DrawArray& draws, const Eigen::VectorXd& theta) {
  const Eigen::Index n = data.n();
  Eigen::VectorXd ey;
  draw_conditional_moments(data, draws, link, theta, ey, nullptr);
  const Eigen::MatrixXd t = t_matrix(t_fn, data, theta);
  const Eigen::MatrixXd x_aux = aux_regressors(data);

  Eigen::VectorXd c(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data.r(i) == 1)
      c(i) = (data.y_raw()(i) - ey(i)) / pi_hat(i);
    else
      c(i) = -(link.mu(x_aux.row(i).dot(theta)) - ey(i)) / (1.0 - pi_hat(i));
  }
  return t.transpose() * c / static_cast<double>(n);
}

Eigen::MatrixXd dr_jacobian(const Eigen::VectorXd& pi_hat, const FusedDataset& data,
                            const TFunction& t_fn, const OutcomeLink& link,
                            const DrawArray& draws, const Eigen::VectorXd& theta) {
  const Eigen::Index n = data.n();
  Eigen::VectorXd ey;
  Eigen::MatrixXd jey;
  draw_conditional_moments(data, draws, link, theta, ey, &jey);
  const Eigen::MatrixXd t = t_matrix(t_fn, data, theta);
  const Eigen::MatrixXd x_aux = aux_regressors(data);

  Eigen::MatrixXd dc(n, theta.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data.r(i) == 1)
      dc.row(i) = -jey.row(i) / pi_hat(i);
    else
      dc.row(i) = -(link.mu_prime(x_aux.row(i).dot(theta)) * x_aux.row(i) - jey.row(i)) /
                  (1.0 - pi_hat(i));
  }
  Eigen::MatrixXd j = t.transpose() * dc / static_cast<double>(n);
  if (!t_fn.theta_free && t_fn.jacobian) {
    Eigen::VectorXd c(n);
    for (Eigen::Index i = 0; i < n; ++i)
      c(i) = data.r(i) == 1
                 ? (data.y_raw()(i) - ey(i)) / pi_hat(i)
                 : -(link.mu(x_aux.row(i).dot(theta)) - ey(i)) / (1.0 - pi_hat(i));
    for (Eigen::Index i = 0; i < n; ++i)
      j += c(i) * t_fn.jacobian(data.v().row(i).transpose(), theta) / static_cast<double>(n);
  }
  return j;
}

EstimateReport solve_dr(const PropensityFit& prop_fit, const ImputationFit& imp_fit,
                        const FusedDataset& data, const TFunction& t_fn, const OutcomeLink& link,
                        const DrawArray& draws, const SolveOptions& opts) {
  (void)imp_fit;
  if (!prop_fit.converged)
    throw NonconvergenceError("propensity fit did not converge; DR weights are unusable");
  const Eigen::Index p = t_fn.p;
  if (p != theta_dim(data))
    throw DimensionError("t-function dimension does not match dim theta");

  EstimateReport report;
  report.method = "DR";
  report.labels = theta_labels(data);

  const Eigen::VectorXd pi_hat = predict_propensity(prop_fit, data);
  double wmax = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i)
    wmax = std::max(wmax, data.r(i) == 1 ? 1.0 / pi_hat(i) : 1.0 / (1.0 - pi_hat(i)));
  if (wmax > 1e3)
    report.warnings.push_back("ExtremeWeightWarning: max inverse-probability weight " +
                              std::to_string(wmax));

  RootProblem prob;
  prob.residual = [&](const Eigen::VectorXd& th) {
    return dr_residual(pi_hat, data, t_fn, link, draws, th);
  };
  if (t_fn.theta_free || t_fn.jacobian)
    prob.jacobian = [&](const Eigen::VectorXd& th) {
      return dr_jacobian(pi_hat, data, t_fn, link, draws, th);
    };

  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(p);
  std::vector<Eigen::VectorXd> starts{zero};
  {
    const Eigen::MatrixXd t = t_matrix(t_fn, data, zero);
    const Eigen::MatrixXd x_aux = aux_regressors(data);
    Eigen::VectorXd ey_lin;
    Eigen::MatrixXd xbar;
    draw_conditional_moments(data, draws, OutcomeLink::identity(), zero, ey_lin, &xbar);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      if (data.r(i) == 1) {
        a += t.row(i).transpose() * xbar.row(i) / pi_hat(i);
        b += data.y_raw()(i) * t.row(i).transpose() / pi_hat(i);
      } else {
        a += t.row(i).transpose() * (x_aux.row(i) - xbar.row(i)) / (1.0 - pi_hat(i));
      }
    }
    a /= static_cast<double>(data.n());
    b /= static_cast<double>(data.n());
    if (auto ws = linear_root(a, b)) {
      if (link.is_identity() && t_fn.theta_free && !opts.force_newton) {
        report.theta = *ws;
        report.solver.converged = true;
        report.solver.residual_norm = prob.residual(*ws).lpNorm<Eigen::Infinity>();
        return report;
      }
      starts.push_back(*ws);
    } else if (link.is_identity() && t_fn.theta_free && !opts.force_newton) {
      throw SingularJacobianError("identity-link DR system matrix is singular");
    }
  }

  RootAttempt root = multistart_root(prob, starts, opts);
  report.theta = root.theta;
  report.solver = root.diag;
  return report;
}

} // namespace fusereg
