#include "fusereg/outcome_link.hpp"

namespace fusereg {

OutcomeLink OutcomeLink::from_name(const std::string& name) {
  if (name == "identity") return identity();
  if (name == "logistic") return logistic();
  if (name == "exponential") return exponential();
  throw ConfigError("unknown link '" + name + "' (supported: identity, logistic, exponential)");
}

std::string OutcomeLink::name() const {
  switch (kind_) {
    case Kind::Identity: return "identity";
    case Kind::Logistic: return "logistic";
    case Kind::Exponential: return "exponential";
  }
  return "identity";
}

std::vector<std::string> theta_labels(const FusedDataset& data) {
  std::vector<std::string> labels{"intercept"};
  for (const auto& name : data.w_names()) labels.push_back("W:" + name);
  for (const auto& name : data.v_names()) labels.push_back("V:" + name);
  return labels;
}

Eigen::MatrixXd regressor_matrix(const FusedDataset& data, const Eigen::MatrixXd& w) {
  const Eigen::Index n = data.n();
  if (w.rows() != n || w.cols() != data.dim_w())
    throw DimensionError("W matrix has wrong shape for regressor construction");
  Eigen::MatrixXd x(n, theta_dim(data));
  x.col(0).setOnes();
  x.middleCols(1, data.dim_w()) = w;
  x.rightCols(data.dim_v()) = data.v();
  return x;
}

TFunction default_t(const FusedDataset& data, const ModelSpec& v_spec) {
  const Eigen::Index p = theta_dim(data);
  if (v_spec.n_terms() != p)
    throw DimensionError("t-function spec has " + std::to_string(v_spec.n_terms()) +
                         " terms but dim theta = " + std::to_string(p));
  if (v_spec.max_v_index() >= data.dim_v())
    throw IndexError("t-function spec indexes a covariate outside V");
  TFunction t;
  t.p = p;
  t.theta_free = true;
  t.eval = [v_spec](const Eigen::Ref<const Eigen::VectorXd>& v,
                    const Eigen::Ref<const Eigen::VectorXd>&) { return v_spec.eval_row(v); };
  return t;
}

Eigen::MatrixXd t_matrix(const TFunction& t_fn, const FusedDataset& data,
                         const Eigen::VectorXd& theta) {
  Eigen::MatrixXd t(data.n(), t_fn.p);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const Eigen::VectorXd ti = t_fn.eval(data.v().row(i).transpose(), theta);
    if (ti.size() != t_fn.p) throw DimensionError("t-function returned a vector of wrong length");
    t.row(i) = ti.transpose();
  }
  return t;
}

} // namespace fusereg
