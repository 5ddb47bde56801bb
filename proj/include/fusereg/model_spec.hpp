#ifndef FUSEREG_MODEL_SPEC_HPP
#define FUSEREG_MODEL_SPEC_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "fusereg/data_model.hpp"

namespace fusereg {

/// One regressor built from the common covariates V.
struct Term {
  enum class Kind { Intercept, Main, Interaction, Quadratic };
  Kind kind = Kind::Intercept;
  int i = -1; // first v index (Main/Interaction/Quadratic)
  int j = -1; // second v index (Interaction)

  static Term intercept() { return {Kind::Intercept, -1, -1}; }
  static Term main(int i) { return {Kind::Main, i, -1}; }
  static Term interaction(int i, int j);
  static Term quadratic(int i) { return {Kind::Quadratic, i, -1}; }

  bool operator==(const Term&) const = default;
};

/// Declarative feature recipe for one working model: an ordered, duplicate-
/// free list of terms over V. Text form: "1 + V1 + V2 + V1:V2 + V1^2".
class ModelSpec {
public:
  explicit ModelSpec(std::vector<Term> terms);

  /// Parse the text form, resolving covariate names against v_names.
  static ModelSpec parse(const std::string& text, const std::vector<std::string>& v_names);

  const std::vector<Term>& terms() const { return terms_; }
  Eigen::Index n_terms() const { return static_cast<Eigen::Index>(terms_.size()); }
  int max_v_index() const;

  std::string to_string(const std::vector<std::string>& v_names) const;

  /// Evaluate the terms at one covariate vector.
  Eigen::VectorXd eval_row(const Eigen::Ref<const Eigen::VectorXd>& v) const;

  bool operator==(const ModelSpec&) const = default;

private:
  std::vector<Term> terms_;
};

enum class RowSelector { All, Primary, Auxiliary };

/// One column per term, in spec order, over the selected rows.
Eigen::MatrixXd build_design_matrix(const ModelSpec& spec, const FusedDataset& data,
                                    RowSelector rows);
Eigen::MatrixXd build_design_matrix(const ModelSpec& spec, const FusedDataset& data,
                                    const std::vector<Eigen::Index>& rows);

} // namespace fusereg

#endif
