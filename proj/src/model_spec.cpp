#include "fusereg/model_spec.hpp"

#include <algorithm>
#include <sstream>

namespace fusereg {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

int resolve_name(const std::string& name, const std::vector<std::string>& v_names) {
  auto it = std::find(v_names.begin(), v_names.end(), name);
  if (it == v_names.end())
    throw SchemaError("unknown covariate '" + name + "' in model formula");
  return static_cast<int>(it - v_names.begin());
}

} // namespace

Term Term::interaction(int i, int j) {
  if (i == j) throw SchemaError("interaction of a variable with itself; use ^2");
  // canonical order so V1:V2 and V2:V1 are the same term
  return {Kind::Interaction, std::min(i, j), std::max(i, j)};
}

ModelSpec::ModelSpec(std::vector<Term> terms) : terms_(std::move(terms)) {
  if (terms_.empty()) throw SchemaError("model spec must contain at least one term");
  for (std::size_t a = 0; a < terms_.size(); ++a)
    for (std::size_t b = a + 1; b < terms_.size(); ++b)
      if (terms_[a] == terms_[b]) throw SchemaError("duplicate term in model spec");
}

ModelSpec ModelSpec::parse(const std::string& text, const std::vector<std::string>& v_names) {
  std::vector<Term> terms;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, '+')) {
    tok = trim(tok);
    if (tok.empty()) throw SchemaError("empty term in model formula '" + text + "'");
    if (tok == "1") {
      terms.push_back(Term::intercept());
    } else if (auto pos = tok.find(':'); pos != std::string::npos) {
      const std::string a = trim(tok.substr(0, pos));
      const std::string b = trim(tok.substr(pos + 1));
      if (a.empty() || b.empty() || b.find(':') != std::string::npos)
        throw SchemaError("malformed interaction '" + tok + "'");
      terms.push_back(Term::interaction(resolve_name(a, v_names), resolve_name(b, v_names)));
    } else if (tok.size() > 2 && tok.substr(tok.size() - 2) == "^2") {
      terms.push_back(Term::quadratic(resolve_name(trim(tok.substr(0, tok.size() - 2)), v_names)));
    } else {
      terms.push_back(Term::main(resolve_name(tok, v_names)));
    }
  }
  return ModelSpec(std::move(terms));
}

int ModelSpec::max_v_index() const {
  int mx = -1;
  for (const Term& t : terms_) mx = std::max({mx, t.i, t.j});
  return mx;
}

std::string ModelSpec::to_string(const std::vector<std::string>& v_names) const {
  std::string out;
  for (const Term& t : terms_) {
    if (!out.empty()) out += " + ";
    switch (t.kind) {
      case Term::Kind::Intercept: out += "1"; break;
      case Term::Kind::Main: out += v_names.at(t.i); break;
      case Term::Kind::Interaction: out += v_names.at(t.i) + ":" + v_names.at(t.j); break;
      case Term::Kind::Quadratic: out += v_names.at(t.i) + "^2"; break;
    }
  }
  return out;
}

Eigen::VectorXd ModelSpec::eval_row(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  Eigen::VectorXd out(n_terms());
  for (Eigen::Index c = 0; c < n_terms(); ++c) {
    const Term& t = terms_[c];
    switch (t.kind) {
      case Term::Kind::Intercept: out(c) = 1.0; break;
      case Term::Kind::Main: out(c) = v(t.i); break;
      case Term::Kind::Interaction: out(c) = v(t.i) * v(t.j); break;
      case Term::Kind::Quadratic: out(c) = v(t.i) * v(t.i); break;
    }
  }
  return out;
}

Eigen::MatrixXd build_design_matrix(const ModelSpec& spec, const FusedDataset& data,
                                    const std::vector<Eigen::Index>& rows) {
  if (spec.max_v_index() >= data.dim_v())
    throw IndexError("model term indexes covariate " + std::to_string(spec.max_v_index()) +
                     " but dataset has " + std::to_string(data.dim_v()) + " common covariates");
  const Eigen::MatrixXd& v = data.v();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), spec.n_terms());
  for (Eigen::Index c = 0; c < spec.n_terms(); ++c) {
    const Term& t = spec.terms()[c];
    for (Eigen::Index k = 0; k < x.rows(); ++k) {
      const Eigen::Index i = rows[k];
      switch (t.kind) {
        case Term::Kind::Intercept: x(k, c) = 1.0; break;
        case Term::Kind::Main: x(k, c) = v(i, t.i); break;
        case Term::Kind::Interaction: x(k, c) = v(i, t.i) * v(i, t.j); break;
        case Term::Kind::Quadratic: x(k, c) = v(i, t.i) * v(i, t.i); break;
      }
    }
  }
  return x;
}

Eigen::MatrixXd build_design_matrix(const ModelSpec& spec, const FusedDataset& data,
                                    RowSelector rows) {
  switch (rows) {
    case RowSelector::Primary: return build_design_matrix(spec, data, data.primary_rows());
    case RowSelector::Auxiliary: return build_design_matrix(spec, data, data.auxiliary_rows());
    case RowSelector::All: break;
  }
  std::vector<Eigen::Index> all(static_cast<std::size_t>(data.n()));
  for (Eigen::Index i = 0; i < data.n(); ++i) all[static_cast<std::size_t>(i)] = i;
  return build_design_matrix(spec, data, all);
}

} // namespace fusereg
