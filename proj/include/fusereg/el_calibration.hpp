#ifndef FUSEREG_EL_CALIBRATION_HPP
#define FUSEREG_EL_CALIBRATION_HPP

#include <Eigen/Dense>
#include <vector>

#include "fusereg/model_zoo.hpp"
#include "fusereg/outcome_link.hpp"

namespace fusereg {

/// Constraint matrix h and its targets. Row i of h is
///   (pi_i^1 - tau^1, ..., pi_i^J - tau^J, (g_i^1 - psi^1)', ..., (g_i^K - psi^K)')
/// with tau^j, psi^k the full-sample means, so every column of h averages to
/// zero over all n rows by construction. Degenerate (identically zero)
/// columns are removed; kept_cols maps surviving columns back to the
/// original J + p*K layout.
struct ConstraintSet {
  Eigen::MatrixXd h;                    // n x C (C = columns kept)
  Eigen::VectorXd tau_hat;              // J
  std::vector<Eigen::VectorXd> psi_hat; // K entries, each length p
  std::vector<Eigen::MatrixXd> g;       // K entries, each n x p
  Eigen::MatrixXd pi_hat;               // n x J propensity predictions
  std::vector<Eigen::Index> kept_cols;
  std::vector<Eigen::Index> dropped_cols;
  Eigen::Index J = 0, K = 0, p = 0;
};

struct MultiplierDiagnostics {
  int iterations = 0;
  double grad_norm = 0.0;
  double min_slack = 1.0;
};

/// Calibration weights for both samples with their Lagrange multipliers.
/// omega1 is aligned with data.primary_rows(), omega0 with auxiliary_rows().
struct CalibrationResult {
  Eigen::VectorXd rho_hat;  // primary multipliers
  Eigen::VectorXd alpha_hat; // auxiliary multipliers
  Eigen::VectorXd omega1;   // m, nonnegative, sums to 1
  Eigen::VectorXd omega0;   // n - m, nonnegative, sums to 1
  MultiplierDiagnostics primary, auxiliary;
  std::vector<Eigen::Index> dropped_cols;
};

/// g_i(theta) = D^-1 sum_d s(W_i^d, V_i; theta), s = mu(theta' x) t(V;theta).
Eigen::MatrixXd draw_moment_matrix(const FusedDataset& data, const DrawArray& draws,
                                   const TFunction& t_fn, const OutcomeLink& link,
                                   const Eigen::VectorXd& theta);

/// Assemble the constraint set from fitted model banks. The draws must be
/// the shared per-model draws generated once for this dataset; they are
/// reused by the weight solves and the variance plug-in.
/// Throws DegenerateConstraintError when models were supplied but every
/// constraint column is identically zero.
ConstraintSet build_constraints(const std::vector<PropensityFit>& prop_fits,
                                const std::vector<ImputationFit>& imp_fits,
                                const std::vector<Eigen::VectorXd>& thetas,
                                const TFunction& t_fn, const OutcomeLink& link,
                                const FusedDataset& data, const std::vector<DrawArray>& draws);

/// Convex objective G(rho) = -mean_i log(1 + rho' h_i) whose stationary point
/// solves the multiplier equation sum_i h_i / (1 + rho' h_i) = 0.
double calib_objective(const Eigen::MatrixXd& h_rows, const Eigen::VectorXd& rho);
Eigen::VectorXd calib_gradient(const Eigen::MatrixXd& h_rows, const Eigen::VectorXd& rho);
Eigen::MatrixXd calib_hessian(const Eigen::MatrixXd& h_rows, const Eigen::VectorXd& rho);

struct MultiplierSolution {
  Eigen::VectorXd multiplier;
  MultiplierDiagnostics diagnostics;
};

/// Damped Newton on G, feasible at every iterate (backtracking halves the
/// step until all slacks stay strictly positive, then until the objective
/// decreases). Converged when the gradient sup-norm drops below 1e-10.
MultiplierSolution solve_multiplier(const Eigen::MatrixXd& h_rows,
                                    const Eigen::VectorXd& init = Eigen::VectorXd());

/// w_i proportional to 1 / (1 + multiplier' h_i), normalized to sum one.
Eigen::VectorXd compute_weights(const Eigen::MatrixXd& h_rows, const Eigen::VectorXd& multiplier);

/// Solve the primary problem (rho, omega1) and the auxiliary problem
/// (alpha, omega0) over the same centered constraint matrix.
CalibrationResult calibrate(const ConstraintSet& cs, const FusedDataset& data);

} // namespace fusereg

#endif
