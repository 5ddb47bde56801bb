#include "fusereg/el_calibration.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace fusereg {

Eigen::MatrixXd draw_moment_matrix(const FusedDataset& data, const DrawArray& draws,
                                   const TFunction& t_fn, const OutcomeLink& link,
                                   const Eigen::VectorXd& theta) {
  if (theta.size() != theta_dim(data))
    throw DimensionError("theta has wrong length in draw_moment_matrix");
  const Eigen::Index n = data.n();
  const Eigen::Index dw = data.dim_w();
  const Eigen::MatrixXd t = t_matrix(t_fn, data, theta);

  const double theta0 = theta(0);
  const Eigen::VectorXd theta_w = theta.segment(1, dw);
  const Eigen::VectorXd theta_v = theta.tail(data.dim_v());

  const Eigen::VectorXd base = (data.v() * theta_v).array() + theta0;
  Eigen::VectorXd mu_mean = Eigen::VectorXd::Zero(n);
  for (Eigen::Index d = 0; d < draws.D; ++d) {
    const Eigen::VectorXd lp = base + draws.draw(d) * theta_w;
    mu_mean += lp.unaryExpr([&link](double z) { return link.mu(z); });
  }
  mu_mean /= static_cast<double>(draws.D);
  return t.array().colwise() * mu_mean.array();
}

ConstraintSet build_constraints(const std::vector<PropensityFit>& prop_fits,
                                const std::vector<ImputationFit>& imp_fits,
                                const std::vector<Eigen::VectorXd>& thetas,
                                const TFunction& t_fn, const OutcomeLink& link,
                                const FusedDataset& data, const std::vector<DrawArray>& draws) {
  const Eigen::Index J = static_cast<Eigen::Index>(prop_fits.size());
  const Eigen::Index K = static_cast<Eigen::Index>(imp_fits.size());
  if (thetas.size() != static_cast<std::size_t>(K))
    throw DimensionError("one theta^k is required per imputation model");
  if (draws.size() != static_cast<std::size_t>(K))
    throw DimensionError("one draw array is required per imputation model");
  const Eigen::Index n = data.n();
  const Eigen::Index p = t_fn.p;

  ConstraintSet cs;
  cs.J = J;
  cs.K = K;
  cs.p = p;
  cs.pi_hat.resize(n, J);
  cs.tau_hat.resize(J);
  for (Eigen::Index j = 0; j < J; ++j) {
    cs.pi_hat.col(j) = predict_propensity(prop_fits[j], data);
    cs.tau_hat(j) = cs.pi_hat.col(j).mean();
  }
  for (Eigen::Index k = 0; k < K; ++k) {
    cs.g.push_back(draw_moment_matrix(data, draws[k], t_fn, link, thetas[k]));
    cs.psi_hat.push_back(cs.g.back().colwise().mean().transpose());
  }

  Eigen::MatrixXd h_full(n, J + p * K);
  for (Eigen::Index j = 0; j < J; ++j)
    h_full.col(j) = cs.pi_hat.col(j).array() - cs.tau_hat(j);
  for (Eigen::Index k = 0; k < K; ++k)
    h_full.middleCols(J + k * p, p) = cs.g[k].rowwise() - cs.psi_hat[k].transpose();

  // drop columns that carry no information
  const double zero_tol = 1e-12;
  for (Eigen::Index c = 0; c < h_full.cols(); ++c) {
    if (h_full.col(c).lpNorm<Eigen::Infinity>() <= zero_tol)
      cs.dropped_cols.push_back(c);
    else
      cs.kept_cols.push_back(c);
  }
  if (cs.kept_cols.empty() && h_full.cols() > 0)
    throw DegenerateConstraintError("all " + std::to_string(h_full.cols()) +
                                    " constraint columns are identically zero");
  cs.h.resize(n, static_cast<Eigen::Index>(cs.kept_cols.size()));
  for (std::size_t c = 0; c < cs.kept_cols.size(); ++c)
    cs.h.col(static_cast<Eigen::Index>(c)) = h_full.col(cs.kept_cols[c]);
  return cs;
}

double calib_objective(const Eigen::MatrixXd& h_rows, const Eigen::VectorXd& rho) {
  const Eigen::ArrayXd slack = 1.0 + (h_rows * rho).array();
  if ((slack <= 0.0).any()) return std::numeric_limits<double>::infinity();
  return -slack.log().mean();
}

Eigen::VectorXd calib_gradient(const Eigen::MatrixXd& h_rows, const Eigen::VectorXd& rho) {
  const Eigen::ArrayXd slack = 1.0 + (h_rows * rho).array();
  return -(h_rows.transpose() * slack.inverse().matrix()) / static_cast<double>(h_rows.rows());
}

Eigen::MatrixXd calib_hessian(const Eigen::MatrixXd& h_rows, const Eigen::VectorXd& rho) {
  const Eigen::ArrayXd inv_slack = (1.0 + (h_rows * rho).array()).inverse();
  const Eigen::MatrixXd scaled = h_rows.array().colwise() * inv_slack;
  return scaled.transpose() * scaled / static_cast<double>(h_rows.rows());
}

MultiplierSolution solve_multiplier(const Eigen::MatrixXd& h_rows, const Eigen::VectorXd& init) {
  const Eigen::Index c = h_rows.cols();
  MultiplierSolution sol;
  sol.multiplier = init.size() == 0 ? Eigen::VectorXd::Zero(c) : init;
  if (sol.multiplier.size() != c)
    throw DimensionError("multiplier start has wrong length");
  if (c == 0) return sol; // no constraints: weights stay uniform

  const int max_iter = 200;
  const double grad_tol = 1e-10;
  const double slack_floor = 1e-12;

  Eigen::VectorXd rho = sol.multiplier;
  {
    const Eigen::ArrayXd slack0 = 1.0 + (h_rows * rho).array();
    if ((slack0 <= slack_floor).any())
      throw NonpositiveSlackError("multiplier start is infeasible");
  }
  double obj = calib_objective(h_rows, rho);

  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd grad = calib_gradient(h_rows, rho);
    sol.diagnostics.iterations = it;
    sol.diagnostics.grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (sol.diagnostics.grad_norm < grad_tol) {
      sol.multiplier = rho;
      sol.diagnostics.min_slack = (1.0 + (h_rows * rho).array()).minCoeff();
      return sol;
    }

    const Eigen::MatrixXd hess = calib_hessian(h_rows, rho);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 0.0)
      throw SingularHessianError("calibration Hessian is not positive definite");
    const Eigen::VectorXd step = ldlt.solve(-grad);

    double scale = 1.0;
    bool accepted = false;
    const double obj_tol = 1e-12 * (1.0 + std::abs(obj)); // roundoff slack near the optimum
    for (int halv = 0; halv < 60; ++halv) {
      const Eigen::VectorXd cand = rho + scale * step;
      const Eigen::ArrayXd slack = 1.0 + (h_rows * cand).array();
      if ((slack > slack_floor).all()) {
        const double obj_new = calib_objective(h_rows, cand);
        if (obj_new < obj + obj_tol) {
          rho = cand;
          obj = obj_new;
          accepted = true;
          break;
        }
      }
      scale *= 0.5;
    }
    if (!accepted)
      throw NoInteriorSolutionError("line search failed; zero may lie outside the convex hull");
    if (rho.norm() > 1e6)
      throw NoInteriorSolutionError("multiplier diverged; zero is not interior to the "
                                    "convex hull of the constraint rows");
  }
  throw NoInteriorSolutionError("multiplier iteration limit reached without convergence");
}

Eigen::VectorXd compute_weights(const Eigen::MatrixXd& h_rows, const Eigen::VectorXd& multiplier) {
  if (multiplier.size() != h_rows.cols())
    throw DimensionError("multiplier length does not match constraint columns");
  const Eigen::ArrayXd slack = 1.0 + (h_rows * multiplier).array();
  if ((slack <= 0.0).any())
    throw NonpositiveSlackError("weight slack 1 + rho'h is not strictly positive");
  Eigen::ArrayXd w = slack.inverse();
  w /= w.sum();
  return w.matrix();
}

namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& h, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), h.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = h.row(rows[k]);
  return out;
}

} // namespace

namespace {

MultiplierSolution solve_side(const Eigen::MatrixXd& h, const char* side) {
  try {
    return solve_multiplier(h);
  } catch (const NoInteriorSolutionError& e) {
    throw NoInteriorSolutionError(std::string(side) + " sample: " + e.what());
  } catch (const SingularHessianError& e) {
    throw SingularHessianError(std::string(side) + " sample: " + e.what());
  }
}

} // namespace

CalibrationResult calibrate(const ConstraintSet& cs, const FusedDataset& data) {
  const Eigen::MatrixXd h1 = gather_rows(cs.h, data.primary_rows());
  const Eigen::MatrixXd h0 = gather_rows(cs.h, data.auxiliary_rows());

  CalibrationResult out;
  out.dropped_cols = cs.dropped_cols;

  MultiplierSolution s1 = solve_side(h1, "primary");
  out.rho_hat = s1.multiplier;
  out.primary = s1.diagnostics;
  out.omega1 = compute_weights(h1, out.rho_hat);

  MultiplierSolution s0 = solve_side(h0, "auxiliary");
  out.alpha_hat = s0.multiplier;
  out.auxiliary = s0.diagnostics;
  out.omega0 = compute_weights(h0, out.alpha_hat);
  return out;
}

} // namespace fusereg
