#ifndef FUSEREG_OUTCOME_LINK_HPP
#define FUSEREG_OUTCOME_LINK_HPP

#include <Eigen/Dense>
#include <functional>
#include <string>

#include "fusereg/data_model.hpp"
#include "fusereg/model_spec.hpp"
#include "fusereg/model_zoo.hpp"

namespace fusereg {

/// Known monotone mean function mu for E(Y | W, V) = mu(theta' x) with
/// x = (1, W, V).
class OutcomeLink {
public:
  enum class Kind { Identity, Logistic, Exponential };

  static OutcomeLink identity() { return OutcomeLink(Kind::Identity); }
  static OutcomeLink logistic() { return OutcomeLink(Kind::Logistic); }
  static OutcomeLink exponential() { return OutcomeLink(Kind::Exponential); }
  static OutcomeLink from_name(const std::string& name);

  Kind kind() const { return kind_; }
  bool is_identity() const { return kind_ == Kind::Identity; }
  std::string name() const;

  double mu(double z) const {
    switch (kind_) {
      case Kind::Identity: return z;
      case Kind::Logistic: return expit(z);
      case Kind::Exponential: return std::exp(z);
    }
    return z;
  }
  double mu_prime(double z) const {
    switch (kind_) {
      case Kind::Identity: return 1.0;
      case Kind::Logistic: {
        const double p = expit(z);
        return p * (1.0 - p);
      }
      case Kind::Exponential: return std::exp(z);
    }
    return 1.0;
  }

private:
  explicit OutcomeLink(Kind k) : kind_(k) {}
  Kind kind_;
};

/// Dimension of theta: intercept + W block + V block.
inline Eigen::Index theta_dim(const FusedDataset& data) {
  return 1 + data.dim_w() + data.dim_v();
}

/// Coefficient labels in theta order.
std::vector<std::string> theta_labels(const FusedDataset& data);

/// Regressor rows x_i = (1, w_i, v_i) for a given n x dim_w matrix of W
/// values (observed or drawn).
Eigen::MatrixXd regressor_matrix(const FusedDataset& data, const Eigen::MatrixXd& w);

/// User-specified p-vector function t(V; theta) entering the moment
/// condition. The default is theta-free (a plain design expansion of V), in
/// which case jacobian is unused and d t / d theta = 0.
struct TFunction {
  Eigen::Index p = 0;
  bool theta_free = true;
  std::function<Eigen::VectorXd(const Eigen::Ref<const Eigen::VectorXd>& v,
                                const Eigen::Ref<const Eigen::VectorXd>& theta)>
      eval;
  /// Optional analytic d t / d theta (p x p); solvers fall back to finite
  /// differences of the residual when absent and theta_free is false.
  std::function<Eigen::MatrixXd(const Eigen::Ref<const Eigen::VectorXd>& v,
                                const Eigen::Ref<const Eigen::VectorXd>& theta)>
      jacobian;
};

/// theta-free t built from a design expansion of V; v_spec must have exactly
/// theta_dim(data) terms so the moment system stays square.
TFunction default_t(const FusedDataset& data, const ModelSpec& v_spec);

/// Evaluate t at every row (n x p).
Eigen::MatrixXd t_matrix(const TFunction& t_fn, const FusedDataset& data,
                         const Eigen::VectorXd& theta);

} // namespace fusereg

#endif
