#ifndef FUSEREG_TESTS_ORACLES_HPP
#define FUSEREG_TESTS_ORACLES_HPP

// Test-only reference implementations, kept independent of the library's
// solver paths so they can serve as oracles.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace oracles {

// Logistic MLE by iteratively reweighted least squares: each step solves the
// weighted least-squares problem with working response via QR.
inline Eigen::VectorXd irls_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                                     int max_iter = 200, double tol = 1e-12) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::ArrayXd p =
        (x * beta).array().unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
    const Eigen::ArrayXd w = (p * (1.0 - p)).max(1e-12);
    // working response z = eta + (y - p)/w
    const Eigen::ArrayXd z = (x * beta).array() + (y.cast<double>().array() - p) / w;
    const Eigen::ArrayXd sw = w.sqrt();
    const Eigen::MatrixXd xw = x.array().colwise() * sw;
    const Eigen::VectorXd zw = (z * sw).matrix();
    const Eigen::VectorXd beta_new = xw.colPivHouseholderQr().solve(zw);
    if ((beta_new - beta).lpNorm<Eigen::Infinity>() < tol) return beta_new;
    beta = beta_new;
  }
  return beta;
}

// Ordinary least squares through the normal equations.
inline Eigen::VectorXd ols_normal_equations(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return (x.transpose() * x).ldlt().solve(x.transpose() * y);
}

// Scalar multiplier equation sum_i h_i / (1 + rho h_i) = 0 solved by
// bisection over the feasible interval.
inline double bisect_multiplier(const Eigen::VectorXd& h, double tol = 1e-14) {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    if (h(i) > 0) lo = std::max(lo, -1.0 / h(i));
    if (h(i) < 0) hi = std::min(hi, -1.0 / h(i));
  }
  if (!std::isfinite(lo)) lo = -1e6;
  if (!std::isfinite(hi)) hi = 1e6;
  auto eq = [&](double rho) {
    double s = 0;
    for (Eigen::Index i = 0; i < h.size(); ++i) s += h(i) / (1.0 + rho * h(i));
    return s;
  };
  double a = lo + 1e-10 * (hi - lo), b = hi - 1e-10 * (hi - lo);
  // the equation is strictly decreasing in rho on the feasible interval
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a + b);
    if (eq(mid) > 0)
      a = mid;
    else
      b = mid;
    if (b - a < tol) break;
  }
  return 0.5 * (a + b);
}

// Multiplier solve in one or two dimensions: dense feasible-region grid
// search refined by Newton steps built from finite differences only.
inline Eigen::VectorXd grid_multiplier(const Eigen::MatrixXd& h, double tol = 1e-10) {
  const Eigen::Index c = h.cols();
  auto objective = [&](const Eigen::VectorXd& rho) {
    const Eigen::ArrayXd slack = 1.0 + (h * rho).array();
    if ((slack <= 0.0).any()) return std::numeric_limits<double>::infinity();
    return -slack.log().mean();
  };
  if (c == 1) {
    Eigen::VectorXd out(1);
    out(0) = bisect_multiplier(h.col(0));
    return out;
  }
  if (c != 2) throw std::runtime_error("grid oracle handles at most 2 columns");

  // coarse feasible box
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd arg = Eigen::VectorXd::Zero(2);
  const double span = 40.0;
  const int steps = 161;
  for (int a = 0; a < steps; ++a)
    for (int b = 0; b < steps; ++b) {
      Eigen::VectorXd rho(2);
      rho << -span + 2 * span * a / (steps - 1), -span + 2 * span * b / (steps - 1);
      const double val = objective(rho);
      if (val < best) {
        best = val;
        arg = rho;
      }
    }
  // refine around the best grid point, twice, then finite-difference Newton
  for (int level = 0; level < 3; ++level) {
    const double local = span * std::pow(0.05, level + 1);
    Eigen::VectorXd center = arg;
    for (int a = 0; a < 41; ++a)
      for (int b = 0; b < 41; ++b) {
        Eigen::VectorXd rho(2);
        rho << center(0) - local + 2 * local * a / 40.0, center(1) - local + 2 * local * b / 40.0;
        const double val = objective(rho);
        if (val < best) {
          best = val;
          arg = rho;
        }
      }
  }
  for (int it = 0; it < 200; ++it) {
    const double step = 1e-6;
    Eigen::VectorXd grad(2);
    Eigen::MatrixXd hess(2, 2);
    for (int a = 0; a < 2; ++a) {
      Eigen::VectorXd hi_p = arg, lo_p = arg;
      hi_p(a) += step;
      lo_p(a) -= step;
      grad(a) = (objective(hi_p) - objective(lo_p)) / (2 * step);
      for (int b = 0; b < 2; ++b) {
        Eigen::VectorXd pp = arg, pm = arg, mp = arg, mm = arg;
        pp(a) += step; pp(b) += step;
        pm(a) += step; pm(b) -= step;
        mp(a) -= step; mp(b) += step;
        mm(a) -= step; mm(b) -= step;
        hess(a, b) = (objective(pp) - objective(pm) - objective(mp) + objective(mm)) /
                     (4 * step * step);
      }
    }
    if (grad.lpNorm<Eigen::Infinity>() < tol) break;
    Eigen::VectorXd delta = hess.ldlt().solve(-grad);
    double scale = 1.0;
    while (scale > 1e-12 && objective(arg + scale * delta) >= objective(arg)) scale *= 0.5;
    if (scale <= 1e-12) break;
    arg += scale * delta;
  }
  return arg;
}

// Derivative-free root finder: Broyden's good method with an identity start.
inline Eigen::VectorXd broyden_root(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
    int max_iter = 500, double tol = 1e-12) {
  Eigen::VectorXd fx = f(x);
  Eigen::MatrixXd jac_inv = Eigen::MatrixXd::Identity(x.size(), x.size());
  // seed the inverse Jacobian from forward differences
  {
    Eigen::MatrixXd jac(x.size(), x.size());
    for (Eigen::Index c = 0; c < x.size(); ++c) {
      Eigen::VectorXd xh = x;
      const double step = 1e-7 * std::max(1.0, std::abs(x(c)));
      xh(c) += step;
      jac.col(c) = (f(xh) - fx) / step;
    }
    jac_inv = jac.fullPivLu().inverse();
  }
  for (int it = 0; it < max_iter; ++it) {
    if (fx.lpNorm<Eigen::Infinity>() < tol) return x;
    const Eigen::VectorXd dx = -jac_inv * fx;
    double scale = 1.0;
    Eigen::VectorXd x_new, fx_new;
    for (int halv = 0; halv < 40; ++halv) {
      x_new = x + scale * dx;
      fx_new = f(x_new);
      if (fx_new.allFinite() && fx_new.norm() < fx.norm()) break;
      scale *= 0.5;
    }
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = fx_new - fx;
    const Eigen::VectorXd ji_y = jac_inv * y;
    const double denom = s.dot(ji_y);
    if (std::abs(denom) > 1e-14)
      jac_inv += (s - ji_y) * (s.transpose() * jac_inv) / denom;
    x = x_new;
    fx = fx_new;
  }
  return x;
}

// Central finite differences for gradients and Jacobians.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double step = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    Eigen::VectorXd hi = x, lo = x;
    const double s = step * std::max(1.0, std::abs(x(c)));
    hi(c) += s;
    lo(c) -= s;
    g(c) = (f(hi) - f(lo)) / (2 * s);
  }
  return g;
}

inline Eigen::MatrixXd fd_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
    double step = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd j(f0.size(), x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    Eigen::VectorXd hi = x, lo = x;
    const double s = step * std::max(1.0, std::abs(x(c)));
    hi(c) += s;
    lo(c) -= s;
    j.col(c) = (f(hi) - f(lo)) / (2 * s);
  }
  return j;
}

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(1.0, std::max(a.lpNorm<Eigen::Infinity>(), b.lpNorm<Eigen::Infinity>()));
  return (a - b).lpNorm<Eigen::Infinity>() / scale;
}

} // namespace oracles

#endif
