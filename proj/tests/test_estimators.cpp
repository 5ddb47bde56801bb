#include <doctest.h>

#include <random>

#include "fusereg/estimators.hpp"
#include "fusereg/pipeline.hpp"
#include "fusereg/sim_harness.hpp"
#include "oracles.hpp"

using namespace fusereg;

namespace {

Eigen::MatrixXd observed_x(const FusedDataset& data) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(data.n(), theta_dim(data));
  for (Eigen::Index i : data.auxiliary_rows()) {
    x(i, 0) = 1.0;
    x.block(i, 1, 1, data.dim_w()) = data.w_raw().row(i);
    x.block(i, 1 + data.dim_w(), 1, data.dim_v()) = data.v().row(i);
  }
  return x;
}

} // namespace

TEST_CASE("default t-function evaluates the design expansion and checks dimensions") {
  FusedDataset data = generate_dataset(50, 1);
  const TFunction t_fn = default_t(data, sim_t_spec());
  CHECK(t_fn.p == 4);
  CHECK(t_fn.theta_free);
  const Eigen::VectorXd t = t_fn.eval(Eigen::Vector2d(2.0, 3.0), Eigen::VectorXd::Zero(4));
  CHECK(t(0) == 1.0);
  CHECK(t(1) == 2.0);
  CHECK(t(2) == 3.0);
  CHECK(t(3) == 6.0);

  CHECK_THROWS_AS(default_t(data, ModelSpec::parse("1 + V1 + V2", data.v_names())),
                  DimensionError);
}

TEST_CASE("the default t keeps the moment system full rank at scale") {
  const FusedDataset data = generate_dataset(100000, 2);
  const TFunction t_fn = default_t(data, sim_t_spec());
  const auto est = EstimatorSpec::parse("MR-1010");
  VarianceSpec none;
  none.kind = VarianceSpec::Kind::None;
  const MrAnalysis a = run_mr_analysis(est.bank(), data, t_fn, OutcomeLink::identity(), 50, 2,
                                       none, est.imputation_ids());
  const Eigen::MatrixXd j = mr_jacobian(a.calibration, data, t_fn, OutcomeLink::identity(),
                                        a.report.theta);
  CHECK(Eigen::FullPivLU<Eigen::MatrixXd>(j).isInvertible());
}

TEST_CASE("per-model theta solve is exact on noiseless linear data") {
  // W deterministic in V, Y deterministic in (1, W, V): the moment system is
  // linear and the solution reproduces the generating coefficients
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss;
  const Eigen::Index n = 80;
  Eigen::VectorXi r(n);
  Eigen::MatrixXd v(n, 2);
  Eigen::VectorXd y(n);
  Eigen::MatrixXd w(n, 1);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd theta0(4);
  theta0 << 1.0, 2.0, -0.5, 0.75;
  auto w_of_v = [](double v1, double v2) { return 0.3 + 1.1 * v1 - 0.7 * v2 + 0.9 * v1 * v2; };
  for (Eigen::Index i = 0; i < n; ++i) {
    v(i, 0) = gauss(rng);
    v(i, 1) = gauss(rng);
    r(i) = i % 2;
    const double wi = w_of_v(v(i, 0), v(i, 1));
    y(i) = r(i) == 1 ? theta0(0) + theta0(1) * wi + theta0(2) * v(i, 0) + theta0(3) * v(i, 1)
                     : nan;
    w(i, 0) = r(i) == 0 ? wi : nan;
  }
  const FusedDataset data(r, v, y, w, {"V1", "V2"}, {"W"});
  ImputationFit fit{ModelSpec::parse("1 + V1 + V2 + V1:V2", data.v_names()),
                    Eigen::MatrixXd(4, 1), Eigen::VectorXd::Zero(1)};
  fit.gamma_hat << 0.3, 1.1, -0.7, 0.9;
  const TFunction t_fn = default_t(data, sim_t_spec());
  Rng draw_rng = make_rng(4);
  const DrawArray draws = draw_imputations(fit, data, 5, draw_rng);
  const Eigen::VectorXd theta =
      solve_theta_k(fit, data, t_fn, OutcomeLink::identity(), draws);
  CHECK((theta - theta0).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("per-model theta estimate approaches the generating value at scale") {
  const FusedDataset data = generate_dataset(100000, 5);
  const TFunction t_fn = default_t(data, sim_t_spec());
  const ImputationFit fit = fit_imputation(sim_imputation_spec(1), data);
  Rng draw_rng = make_rng(derive_seed(5, Stream::Draws, 2));
  const DrawArray draws = draw_imputations(fit, data, 100, draw_rng);
  const Eigen::VectorXd theta =
      solve_theta_k(fit, data, t_fn, OutcomeLink::identity(), draws);
  CHECK((theta - sim_true_theta()).lpNorm<Eigen::Infinity>() < 0.03);
}

TEST_CASE("per-model theta solve matches a derivative-free root finder") {
  SUBCASE("identity link, Newton route forced") {
    const FusedDataset data = generate_dataset(200, 6);
    const TFunction t_fn = default_t(data, sim_t_spec());
    const ImputationFit fit = fit_imputation(sim_imputation_spec(1), data);
    Rng draw_rng = make_rng(7);
    const DrawArray draws = draw_imputations(fit, data, 60, draw_rng);
    SolveOptions opts;
    opts.force_newton = true;
    const OutcomeLink link = OutcomeLink::identity();
    const Eigen::VectorXd theta = solve_theta_k(fit, data, t_fn, link, draws, opts);
    const Eigen::VectorXd oracle = oracles::broyden_root(
        [&](const Eigen::VectorXd& th) { return theta_k_residual(data, t_fn, link, draws, th); },
        Eigen::VectorXd::Zero(4));
    CHECK((theta - oracle).lpNorm<Eigen::Infinity>() < 1e-6);
  }

  SUBCASE("curved link on a bounded outcome") {
    std::mt19937_64 rng(27);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif;
    const Eigen::Index n = 200;
    Eigen::VectorXi r(n);
    Eigen::MatrixXd v(n, 2);
    Eigen::VectorXd y(n);
    Eigen::MatrixXd w(n, 1);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    Eigen::VectorXd theta0(4);
    theta0 << 0.2, 0.6, -0.4, 0.3;
    for (Eigen::Index i = 0; i < n; ++i) {
      v(i, 0) = gauss(rng);
      v(i, 1) = gauss(rng);
      r(i) = i % 2;
      const double wi = 0.5 * v(i, 0) - 0.3 * v(i, 1) + 0.7 * v(i, 0) * v(i, 1) + 0.4 * gauss(rng);
      const double mu = expit(theta0.dot(Eigen::Vector4d(1.0, wi, v(i, 0), v(i, 1))));
      y(i) = r(i) == 1 ? (unif(rng) < mu ? 1.0 : 0.0) : nan;
      w(i, 0) = r(i) == 0 ? wi : nan;
    }
    const FusedDataset data(r, v, y, w, {"V1", "V2"}, {"W"});
    const TFunction t_fn = default_t(data, sim_t_spec());
    const ImputationFit fit =
        fit_imputation(ModelSpec::parse("1 + V1 + V2 + V1:V2", data.v_names()), data);
    Rng draw_rng = make_rng(29);
    const DrawArray draws = draw_imputations(fit, data, 60, draw_rng);
    const OutcomeLink link = OutcomeLink::logistic();
    const Eigen::VectorXd theta = solve_theta_k(fit, data, t_fn, link, draws);
    const Eigen::VectorXd oracle = oracles::broyden_root(
        [&](const Eigen::VectorXd& th) { return theta_k_residual(data, t_fn, link, draws, th); },
        theta + Eigen::VectorXd::Constant(4, 0.05));
    CHECK((theta - oracle).lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("calibrated solve: direct identity route equals the Newton route") {
  const auto est = EstimatorSpec::parse("MR-1111");
  const FusedDataset data = generate_dataset(600, 8);
  const TFunction t_fn = default_t(data, sim_t_spec());
  VarianceSpec none;
  none.kind = VarianceSpec::Kind::None;
  const MrAnalysis a = run_mr_analysis(est.bank(), data, t_fn, OutcomeLink::identity(), 100, 8,
                                       none, est.imputation_ids());
  SolveOptions newton;
  newton.force_newton = true;
  const EstimateReport viaNewton =
      solve_mr(a.calibration, data, t_fn, OutcomeLink::identity(), newton);
  CHECK((viaNewton.theta - a.report.theta).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("uniform weights reduce the calibrated solve to the naive moment match") {
  const FusedDataset data = generate_dataset(400, 9);
  const TFunction t_fn = default_t(data, sim_t_spec());
  const ConstraintSet cs =
      build_constraints({}, {}, {}, t_fn, OutcomeLink::identity(), data, {});
  const CalibrationResult calib = calibrate(cs, data);
  const EstimateReport report = solve_mr(calib, data, t_fn, OutcomeLink::identity());

  // direct two-sample moment match computed from scratch
  const Eigen::MatrixXd t = t_matrix(t_fn, data, report.theta);
  const Eigen::MatrixXd x = observed_x(data);
  Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
  Eigen::Vector4d b = Eigen::Vector4d::Zero();
  for (Eigen::Index i : data.primary_rows()) b += data.y_raw()(i) * t.row(i).transpose();
  b /= static_cast<double>(data.m());
  for (Eigen::Index i : data.auxiliary_rows())
    a += t.row(i).transpose() * x.row(i);
  a /= static_cast<double>(data.n() - data.m());
  const Eigen::Vector4d direct = a.fullPivLu().solve(b);
  CHECK((report.theta - direct).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("doubly robust solve matches hand algebra under known propensity") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> gauss;
  const Eigen::Index n = 300;
  Eigen::VectorXi r(n);
  Eigen::MatrixXd v(n, 2);
  Eigen::VectorXd y(n);
  Eigen::MatrixXd w(n, 1);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd theta0(4);
  theta0 << 0.5, -1.0, 2.0, 1.5;
  auto w_of_v = [](double v1, double v2) { return -0.2 + 0.8 * v1 + 0.4 * v2 - 1.2 * v1 * v2; };
  std::uniform_real_distribution<double> unif;
  const double pi_const = 0.45;
  for (Eigen::Index i = 0; i < n; ++i) {
    v(i, 0) = gauss(rng);
    v(i, 1) = gauss(rng);
    r(i) = unif(rng) < pi_const ? 1 : 0;
    if (i == 0) r(i) = 1;
    if (i == 1) r(i) = 0;
    const double wi = w_of_v(v(i, 0), v(i, 1));
    y(i) = r(i) == 1 ? theta0.dot(Eigen::Vector4d(1.0, wi, v(i, 0), v(i, 1))) : nan;
    w(i, 0) = r(i) == 0 ? wi : nan;
  }
  const FusedDataset data(r, v, y, w, {"V1", "V2"}, {"W"});
  PropensityFit prop{ModelSpec::parse("1", data.v_names()),
                     Eigen::VectorXd::Constant(1, std::log(pi_const / (1 - pi_const))), true, 0};
  ImputationFit imp{ModelSpec::parse("1 + V1 + V2 + V1:V2", data.v_names()),
                    Eigen::MatrixXd(4, 1), Eigen::VectorXd::Zero(1)};
  imp.gamma_hat << -0.2, 0.8, 0.4, -1.2;
  const TFunction t_fn = default_t(data, sim_t_spec());
  Rng draw_rng = make_rng(11);
  const DrawArray draws = draw_imputations(imp, data, 3, draw_rng);
  const EstimateReport report =
      solve_dr(prop, imp, data, t_fn, OutcomeLink::identity(), draws);

  // same system assembled by hand: A theta = b
  const Eigen::MatrixXd t = t_matrix(t_fn, data, theta0);
  Eigen::Matrix4d a_sys = Eigen::Matrix4d::Zero();
  Eigen::Vector4d b_sys = Eigen::Vector4d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double wi = w_of_v(v(i, 0), v(i, 1)); // sigma = 0: draws equal the mean
    const Eigen::Vector4d xbar(1.0, wi, v(i, 0), v(i, 1));
    if (r(i) == 1) {
      a_sys += t.row(i).transpose() * xbar.transpose() / pi_const;
      b_sys += y(i) * t.row(i).transpose() / pi_const;
    } else {
      const Eigen::Vector4d x_obs(1.0, w(i, 0), v(i, 0), v(i, 1));
      a_sys += t.row(i).transpose() * (x_obs - xbar).transpose() / (1 - pi_const);
    }
  }
  const Eigen::Vector4d direct = a_sys.fullPivLu().solve(b_sys);
  CHECK((report.theta - direct).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK((report.theta - theta0).lpNorm<Eigen::Infinity>() < 1e-8); // exact noiseless recovery
}

TEST_CASE("extreme inverse weights raise a warning, not a failure") {
  const FusedDataset data = generate_dataset(500, 12);
  PropensityFit prop{ModelSpec::parse("1 + V1", data.v_names()), Eigen::Vector2d(0.0, 8.0), true,
                     0};
  const ImputationFit imp = fit_imputation(sim_imputation_spec(1), data);
  const TFunction t_fn = default_t(data, sim_t_spec());
  Rng draw_rng = make_rng(13);
  const DrawArray draws = draw_imputations(imp, data, 20, draw_rng);
  const EstimateReport report =
      solve_dr(prop, imp, data, t_fn, OutcomeLink::identity(), draws);
  REQUIRE(report.warnings.size() >= 1);
  CHECK(report.warnings[0].find("ExtremeWeightWarning") != std::string::npos);
}

TEST_CASE("analytic Jacobians of all three systems match finite differences") {
  const auto est = EstimatorSpec::parse("MR-1010");
  const FusedDataset data = generate_dataset(250, 14);
  const TFunction t_fn = default_t(data, sim_t_spec());
  const OutcomeLink link = OutcomeLink::identity();
  const FittedModelBank bank =
      fit_model_bank(est.bank(), data, t_fn, link, 40, 14, est.imputation_ids());
  const ConstraintSet cs = build_constraints(bank.propensity, bank.imputation, bank.theta_k,
                                             t_fn, link, data, bank.draws);
  const CalibrationResult calib = calibrate(cs, data);
  const Eigen::VectorXd pi_hat = predict_propensity(bank.propensity[0], data);

  std::mt19937_64 rng(15);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd theta =
        Eigen::VectorXd::NullaryExpr(4, [&](Eigen::Index) { return gauss(rng); });
    CHECK(oracles::rel_err(
              theta_k_jacobian(data, t_fn, link, bank.draws[0], theta),
              oracles::fd_jacobian(
                  [&](const Eigen::VectorXd& th) {
                    return theta_k_residual(data, t_fn, link, bank.draws[0], th);
                  },
                  theta)) < 1e-5);
    CHECK(oracles::rel_err(mr_jacobian(calib, data, t_fn, link, theta),
                           oracles::fd_jacobian(
                               [&](const Eigen::VectorXd& th) {
                                 return mr_residual(calib, data, t_fn, link, th);
                               },
                               theta)) < 1e-5);
    CHECK(oracles::rel_err(
              dr_jacobian(pi_hat, data, t_fn, link, bank.draws[0], theta),
              oracles::fd_jacobian(
                  [&](const Eigen::VectorXd& th) {
                    return dr_residual(pi_hat, data, t_fn, link, bank.draws[0], th);
                  },
                  theta)) < 1e-5);
  }
}

TEST_CASE("Jacobians also match finite differences under a curved link") {
  const FusedDataset data = generate_dataset(150, 16);
  const TFunction t_fn = default_t(data, sim_t_spec());
  const OutcomeLink link = OutcomeLink::logistic();
  const ImputationFit imp = fit_imputation(sim_imputation_spec(1), data);
  Rng draw_rng = make_rng(17);
  const DrawArray draws = draw_imputations(imp, data, 30, draw_rng);
  std::mt19937_64 rng(18);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd theta =
        Eigen::VectorXd::NullaryExpr(4, [&](Eigen::Index) { return 0.4 * gauss(rng); });
    CHECK(oracles::rel_err(
              theta_k_jacobian(data, t_fn, link, draws, theta),
              oracles::fd_jacobian(
                  [&](const Eigen::VectorXd& th) {
                    return theta_k_residual(data, t_fn, link, draws, th);
                  },
                  theta)) < 1e-5);
  }
}

TEST_CASE("the estimate is invariant to the ordering of the model bank") {
  const FusedDataset data = generate_dataset(700, 19);
  const TFunction t_fn = default_t(data, sim_t_spec());
  const OutcomeLink link = OutcomeLink::identity();

  ModelBank forward;
  forward.propensity = {sim_propensity_spec(1), sim_propensity_spec(2)};
  forward.imputation = {sim_imputation_spec(1), sim_imputation_spec(2)};
  ModelBank reversed;
  reversed.propensity = {sim_propensity_spec(2), sim_propensity_spec(1)};
  reversed.imputation = {sim_imputation_spec(2), sim_imputation_spec(1)};

  VarianceSpec none;
  none.kind = VarianceSpec::Kind::None;
  const MrAnalysis a = run_mr_analysis(forward, data, t_fn, link, 80, 19, none, {2, 3});
  const MrAnalysis b = run_mr_analysis(reversed, data, t_fn, link, 80, 19, none, {3, 2});
  CHECK((a.report.theta - b.report.theta).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK((a.calibration.omega1 - b.calibration.omega1).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK((a.calibration.omega0 - b.calibration.omega0).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("confidence intervals follow the theta +- 1.96 se convention") {
  EstimateReport report;
  report.theta = Eigen::Vector2d(1.0, -2.0);
  report.labels = {"a", "b"};
  Eigen::Matrix2d var;
  var << 0.04, 0.0, 0.0, 0.09;
  attach_inference(report, var);
  CHECK((*report.se)(0) == doctest::Approx(0.2));
  CHECK((*report.ci)(0, 0) == doctest::Approx(1.0 - 1.96 * 0.2));
  CHECK((*report.ci)(1, 1) == doctest::Approx(-2.0 + 1.96 * 0.3));
}
