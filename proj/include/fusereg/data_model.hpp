#ifndef FUSEREG_DATA_MODEL_HPP
#define FUSEREG_DATA_MODEL_HPP

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fusereg/errors.hpp"

namespace fusereg {

/// One observation of the fused two-sample layout. y is present iff r = 1,
/// w is present iff r = 0; v is always observed.
struct Row {
  int r = 0;
  Eigen::VectorXd v;
  std::optional<double> y;
  std::optional<Eigen::VectorXd> w;
};

/// Fused dataset: a primary sample observing (Y, V) merged with an auxiliary
/// sample observing (W, V). Immutable after construction; the constructor
/// rejects any row violating the missingness pattern and requires both
/// samples to be nonempty. Rows keep their input order; nothing assumes the
/// primary rows come first.
class FusedDataset {
public:
  FusedDataset(std::vector<Row> rows, std::vector<std::string> v_names,
               std::vector<std::string> w_names, std::string source_name = "R",
               std::string outcome_name = "Y");

  /// Columnar constructor. y and w must be NaN exactly where the pattern
  /// makes them unobserved (r=0 resp. r=1) and finite elsewhere.
  FusedDataset(Eigen::VectorXi r, Eigen::MatrixXd v, Eigen::VectorXd y, Eigen::MatrixXd w,
               std::vector<std::string> v_names, std::vector<std::string> w_names,
               std::string source_name = "R", std::string outcome_name = "Y");

  Eigen::Index n() const { return r_.size(); }
  Eigen::Index m() const { return static_cast<Eigen::Index>(primary_rows_.size()); }
  Eigen::Index dim_v() const { return v_.cols(); }
  Eigen::Index dim_w() const { return w_.cols(); }

  int r(Eigen::Index i) const { return r_(i); }
  const Eigen::VectorXi& r() const { return r_; }
  const Eigen::MatrixXd& v() const { return v_; }

  /// Outcome for a primary row (r(i) must be 1).
  double y(Eigen::Index i) const;
  /// Auxiliary covariate row (r(i) must be 0).
  Eigen::RowVectorXd w_row(Eigen::Index i) const;

  /// Raw columns; unobserved entries are NaN.
  const Eigen::VectorXd& y_raw() const { return y_; }
  const Eigen::MatrixXd& w_raw() const { return w_; }

  const std::vector<Eigen::Index>& primary_rows() const { return primary_rows_; }
  const std::vector<Eigen::Index>& auxiliary_rows() const { return auxiliary_rows_; }

  const std::vector<std::string>& v_names() const { return v_names_; }
  const std::vector<std::string>& w_names() const { return w_names_; }
  const std::string& source_name() const { return source_name_; }
  const std::string& outcome_name() const { return outcome_name_; }

  bool operator==(const FusedDataset& other) const;

private:
  void validate() const;

  Eigen::VectorXi r_;
  Eigen::MatrixXd v_;
  Eigen::VectorXd y_; // NaN where r = 0
  Eigen::MatrixXd w_; // NaN rows where r = 1
  std::vector<std::string> v_names_, w_names_;
  std::string source_name_, outcome_name_;
  std::vector<Eigen::Index> primary_rows_, auxiliary_rows_;
};

/// M multiply-imputed replicates of one fused dataset; all share a schema.
struct ReplicateSet {
  std::vector<FusedDataset> replicates;

  explicit ReplicateSet(std::vector<FusedDataset> reps);
  Eigen::Index size() const { return static_cast<Eigen::Index>(replicates.size()); }
};

enum class ColumnRole { Source, Outcome, Common, Auxiliary };

/// Column-name -> role map covering every column of the CSV.
using CsvSchema = std::map<std::string, ColumnRole>;

ColumnRole parse_column_role(const std::string& name);

/// Parse a fused-data CSV. The header must be present; every header name
/// must appear in the schema (exactly one source and one outcome column).
/// Missing values are empty fields. Rows that violate the missingness
/// pattern are rejected.
FusedDataset read_fused_csv(const std::string& path, const CsvSchema& schema);

/// Write a dataset so that read_fused_csv inverts it exactly (17 significant
/// digits). Column order: source, outcome, common..., auxiliary...
void write_fused_csv(const FusedDataset& data, const std::string& path);

} // namespace fusereg

#endif
