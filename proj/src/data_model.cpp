#include "fusereg/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace fusereg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double parse_cell(const std::string& cell, const std::string& col, std::size_t line_no) {
  double out = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last)
    throw ParseError("non-numeric cell '" + cell + "' in column '" + col + "', line " +
                     std::to_string(line_no));
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

std::string format_value(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

} // namespace

FusedDataset::FusedDataset(std::vector<Row> rows, std::vector<std::string> v_names,
                           std::vector<std::string> w_names, std::string source_name,
                           std::string outcome_name)
    : v_names_(std::move(v_names)), w_names_(std::move(w_names)),
      source_name_(std::move(source_name)), outcome_name_(std::move(outcome_name)) {
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index dv = static_cast<Eigen::Index>(v_names_.size());
  const Eigen::Index dw = static_cast<Eigen::Index>(w_names_.size());
  r_.resize(n);
  v_.resize(n, dv);
  y_.setConstant(n, kNaN);
  w_.setConstant(n, dw, kNaN);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Row& row = rows[i];
    if (row.v.size() != dv)
      throw PatternError("row " + std::to_string(i) + ": v has length " +
                         std::to_string(row.v.size()) + ", expected " + std::to_string(dv));
    r_(i) = row.r;
    v_.row(i) = row.v.transpose();
    if (row.y) y_(i) = *row.y;
    if (row.w) {
      if (row.w->size() != dw)
        throw PatternError("row " + std::to_string(i) + ": w has length " +
                           std::to_string(row.w->size()) + ", expected " + std::to_string(dw));
      w_.row(i) = row.w->transpose();
    }
  }
  validate();
  for (Eigen::Index i = 0; i < n; ++i)
    (r_(i) == 1 ? primary_rows_ : auxiliary_rows_).push_back(i);
}

FusedDataset::FusedDataset(Eigen::VectorXi r, Eigen::MatrixXd v, Eigen::VectorXd y,
                           Eigen::MatrixXd w, std::vector<std::string> v_names,
                           std::vector<std::string> w_names, std::string source_name,
                           std::string outcome_name)
    : r_(std::move(r)), v_(std::move(v)), y_(std::move(y)), w_(std::move(w)),
      v_names_(std::move(v_names)), w_names_(std::move(w_names)),
      source_name_(std::move(source_name)), outcome_name_(std::move(outcome_name)) {
  validate();
  for (Eigen::Index i = 0; i < r_.size(); ++i)
    (r_(i) == 1 ? primary_rows_ : auxiliary_rows_).push_back(i);
}

void FusedDataset::validate() const {
  const Eigen::Index n = r_.size();
  if (v_.rows() != n || y_.size() != n || w_.rows() != n)
    throw PatternError("column lengths disagree");
  if (static_cast<Eigen::Index>(v_names_.size()) != v_.cols())
    throw SchemaError("v_names length does not match v columns");
  if (static_cast<Eigen::Index>(w_names_.size()) != w_.cols())
    throw SchemaError("w_names length does not match w columns");
  if (w_.cols() < 1) throw SchemaError("at least one auxiliary column is required");

  Eigen::Index m = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (r_(i) != 0 && r_(i) != 1)
      throw PatternError("row " + std::to_string(i) + ": source indicator must be 0 or 1");
    if (!v_.row(i).allFinite())
      throw PatternError("row " + std::to_string(i) + ": non-finite common covariate");
    const bool has_y = !std::isnan(y_(i));
    const bool has_w = w_.row(i).allFinite();
    const bool any_w = !w_.row(i).array().isNaN().all();
    if (r_(i) == 1) {
      ++m;
      if (!has_y)
        throw PatternError("row " + std::to_string(i) + ": primary row lacks outcome");
      if (any_w)
        throw PatternError("row " + std::to_string(i) + ": primary row carries auxiliary value");
      if (!std::isfinite(y_(i)))
        throw PatternError("row " + std::to_string(i) + ": non-finite outcome");
    } else {
      if (has_y)
        throw PatternError("row " + std::to_string(i) + ": auxiliary row carries outcome");
      if (!has_w)
        throw PatternError("row " + std::to_string(i) + ": auxiliary row lacks auxiliary value");
    }
  }
  if (m == 0 || m == n)
    throw PatternError("both samples must be nonempty (m=" + std::to_string(m) +
                       ", n=" + std::to_string(n) + ")");
}

double FusedDataset::y(Eigen::Index i) const {
  if (r_(i) != 1) throw IndexError("y requested for auxiliary row " + std::to_string(i));
  return y_(i);
}

Eigen::RowVectorXd FusedDataset::w_row(Eigen::Index i) const {
  if (r_(i) != 0) throw IndexError("w requested for primary row " + std::to_string(i));
  return w_.row(i);
}

bool FusedDataset::operator==(const FusedDataset& other) const {
  if (v_names_ != other.v_names_ || w_names_ != other.w_names_ ||
      source_name_ != other.source_name_ || outcome_name_ != other.outcome_name_)
    return false;
  if (n() != other.n() || r_ != other.r_ || v_ != other.v_) return false;
  for (Eigen::Index i = 0; i < n(); ++i) {
    if (r_(i) == 1) {
      if (y_(i) != other.y_(i)) return false;
    } else {
      if (w_.row(i) != other.w_.row(i)) return false;
    }
  }
  return true;
}

ReplicateSet::ReplicateSet(std::vector<FusedDataset> reps) : replicates(std::move(reps)) {
  if (replicates.empty()) throw SchemaError("replicate set must hold at least one dataset");
  for (std::size_t k = 1; k < replicates.size(); ++k) {
    if (replicates[k].v_names() != replicates[0].v_names() ||
        replicates[k].w_names() != replicates[0].w_names())
      throw SchemaError("replicate " + std::to_string(k) + " has a different column schema");
  }
}

ColumnRole parse_column_role(const std::string& name) {
  if (name == "source") return ColumnRole::Source;
  if (name == "outcome") return ColumnRole::Outcome;
  if (name == "common") return ColumnRole::Common;
  if (name == "auxiliary") return ColumnRole::Auxiliary;
  throw SchemaError("unknown column role '" + name +
                    "' (expected source|outcome|common|auxiliary)");
}

FusedDataset read_fused_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  std::string header_line;
  if (!std::getline(in, header_line)) throw ParseError("empty file '" + path + "'");
  const std::vector<std::string> header = split_csv_line(header_line);

  std::vector<int> role(header.size());
  int source_col = -1, outcome_col = -1;
  std::vector<int> v_cols, w_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    auto it = schema.find(header[c]);
    if (it == schema.end()) throw SchemaError("column '" + header[c] + "' has no assigned role");
    switch (it->second) {
      case ColumnRole::Source:
        if (source_col >= 0) throw SchemaError("duplicate source column");
        source_col = static_cast<int>(c);
        break;
      case ColumnRole::Outcome:
        if (outcome_col >= 0) throw SchemaError("duplicate outcome column");
        outcome_col = static_cast<int>(c);
        break;
      case ColumnRole::Common:
        v_cols.push_back(static_cast<int>(c));
        break;
      case ColumnRole::Auxiliary:
        w_cols.push_back(static_cast<int>(c));
        break;
    }
    role[c] = static_cast<int>(it->second);
  }
  for (const auto& [name, _] : schema)
    if (std::find(header.begin(), header.end(), name) == header.end())
      throw SchemaError("schema names column '" + name + "' absent from the file");
  if (source_col < 0) throw SchemaError("no source column");
  if (outcome_col < 0) throw SchemaError("no outcome column");
  if (v_cols.empty()) throw SchemaError("no common columns");
  if (w_cols.empty()) throw SchemaError("no auxiliary columns");

  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("line " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(header.size()));
    Row row;
    const std::string& src = cells[source_col];
    if (src.empty())
      throw PatternError("line " + std::to_string(line_no) + ": missing source indicator");
    const double rv = parse_cell(src, header[source_col], line_no);
    if (rv != 0.0 && rv != 1.0)
      throw PatternError("line " + std::to_string(line_no) + ": source value must be 0 or 1");
    row.r = static_cast<int>(rv);

    row.v.resize(static_cast<Eigen::Index>(v_cols.size()));
    for (std::size_t k = 0; k < v_cols.size(); ++k) {
      const std::string& cell = cells[v_cols[k]];
      if (cell.empty())
        throw PatternError("line " + std::to_string(line_no) + ": missing common covariate '" +
                           header[v_cols[k]] + "'");
      row.v(static_cast<Eigen::Index>(k)) = parse_cell(cell, header[v_cols[k]], line_no);
    }

    const std::string& ycell = cells[outcome_col];
    if (!ycell.empty()) row.y = parse_cell(ycell, header[outcome_col], line_no);

    bool any_w = false, all_w = true;
    Eigen::VectorXd wvec(static_cast<Eigen::Index>(w_cols.size()));
    for (std::size_t k = 0; k < w_cols.size(); ++k) {
      const std::string& cell = cells[w_cols[k]];
      if (cell.empty()) {
        all_w = false;
      } else {
        any_w = true;
        wvec(static_cast<Eigen::Index>(k)) = parse_cell(cell, header[w_cols[k]], line_no);
      }
    }
    if (any_w && !all_w)
      throw PatternError("line " + std::to_string(line_no) +
                         ": auxiliary covariates are partially missing");
    if (any_w) row.w = wvec;
    rows.push_back(std::move(row));
  }

  std::vector<std::string> v_names, w_names;
  for (int c : v_cols) v_names.push_back(header[c]);
  for (int c : w_cols) w_names.push_back(header[c]);
  return FusedDataset(std::move(rows), std::move(v_names), std::move(w_names),
                      header[source_col], header[outcome_col]);
}

void write_fused_csv(const FusedDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");

  out << data.source_name() << ',' << data.outcome_name();
  for (const auto& name : data.v_names()) out << ',' << name;
  for (const auto& name : data.w_names()) out << ',' << name;
  out << '\n';

  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out << data.r(i) << ',';
    if (data.r(i) == 1) out << format_value(data.y_raw()(i));
    for (Eigen::Index c = 0; c < data.dim_v(); ++c) out << ',' << format_value(data.v()(i, c));
    for (Eigen::Index c = 0; c < data.dim_w(); ++c) {
      out << ',';
      if (data.r(i) == 0) out << format_value(data.w_raw()(i, c));
    }
    out << '\n';
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

} // namespace fusereg
