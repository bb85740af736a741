#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mixcontrast/errors.hpp"

namespace mixcontrast {

// n x p matrix of feature measurements (rows = features, columns = samples)
// plus 1-based class labels per sample.
struct ExpressionMatrix {
  Eigen::MatrixXd values;                // n x p
  std::vector<std::string> feature_ids;  // n
  std::vector<std::string> sample_ids;   // p
  std::vector<int> class_of_sample;      // p entries in 1..m
  bool standardized = false;

  Eigen::Index n() const { return values.rows(); }
  Eigen::Index p() const { return values.cols(); }

  int num_classes() const {
    int m = 0;
    for (int c : class_of_sample) m = std::max(m, c);
    return m;
  }

  std::vector<int> class_sizes() const {
    std::vector<int> sizes(static_cast<std::size_t>(num_classes()), 0);
    for (int c : class_of_sample) sizes[static_cast<std::size_t>(c - 1)]++;
    return sizes;
  }
};

// Fixed/random-effect design: X is the p x m class indicator, U = X and V is
// the p x p identity (kept implicit).
struct DesignMatrices {
  Eigen::MatrixXd X;  // p x m

  const Eigen::MatrixXd& U() const { return X; }
  Eigen::Index p() const { return X.rows(); }
  Eigen::Index m() const { return X.cols(); }
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') {
    out.back().pop_back();
  }
  return out;
}

inline double parse_cell(const std::string& cell, Eigen::Index row, Eigen::Index col) {
  const char* b = cell.data();
  const char* e = b + cell.size();
  double v = 0.0;
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e || !std::isfinite(v)) {
    throw DataError("non-numeric value at row " + std::to_string(row + 1) +
                    ", column " + std::to_string(col + 2));
  }
  return v;
}

}  // namespace detail

// Checks contiguity of class indices (1..m, every class present).
inline void validate_contiguous_classes(const std::vector<int>& labels) {
  if (labels.empty()) throw DataError("no samples");
  std::map<int, int> counts;
  for (int c : labels) counts[c]++;
  if (counts.begin()->first < 1) throw DataError("class indices must be >= 1");
  const int m = counts.rbegin()->first;
  for (int h = 1; h <= m; ++h) {
    if (!counts.count(h)) {
      throw DataError("class indices do not form a contiguous 1.." +
                      std::to_string(m) + " range (class " + std::to_string(h) +
                      " missing)");
    }
  }
}

inline void validate_class_labels(const std::vector<int>& labels) {
  validate_contiguous_classes(labels);
  std::map<int, int> counts;
  for (int c : labels) counts[c]++;
  for (const auto& [h, cnt] : counts) {
    if (cnt < 2) {
      throw DataError("class " + std::to_string(h) + " has fewer than 2 samples");
    }
  }
}

// Matrix file: header row of sample ids, then one row per feature
// (feature id followed by p numeric values). Labels file: lines of
// "sample_id<TAB>class_index".
inline ExpressionMatrix load_expression_matrix(const std::string& matrix_path,
                                               const std::string& labels_path) {
  std::ifstream lf(labels_path);
  if (!lf) throw DataError("cannot open labels file: " + labels_path);
  std::map<std::string, int> label_of;
  std::string line;
  while (std::getline(lf, line)) {
    if (line.empty()) continue;
    const auto parts = detail::split_tabs(line);
    if (parts.size() != 2) throw DataError("malformed labels line: " + line);
    int cls = 0;
    const auto res = std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), cls);
    if (res.ec != std::errc{}) throw DataError("non-integer class label for sample " + parts[0]);
    if (!label_of.emplace(parts[0], cls).second) {
      throw DataError("duplicate sample id in labels file: " + parts[0]);
    }
  }

  std::ifstream mf(matrix_path);
  if (!mf) throw DataError("cannot open matrix file: " + matrix_path);
  if (!std::getline(mf, line)) throw DataError("empty matrix file");
  auto header = detail::split_tabs(line);
  if (header.size() < 2) throw DataError("matrix header has no sample columns");

  ExpressionMatrix out;
  out.sample_ids.assign(header.begin() + 1, header.end());
  const Eigen::Index p = static_cast<Eigen::Index>(out.sample_ids.size());
  out.class_of_sample.reserve(static_cast<std::size_t>(p));
  for (const auto& sid : out.sample_ids) {
    auto it = label_of.find(sid);
    if (it == label_of.end()) throw DataError("sample id not in labels file: " + sid);
    out.class_of_sample.push_back(it->second);
  }
  validate_class_labels(out.class_of_sample);

  std::vector<std::vector<double>> rows;
  std::set<std::string> seen;
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    const auto parts = detail::split_tabs(line);
    if (static_cast<Eigen::Index>(parts.size()) != p + 1) {
      throw DataError("row " + std::to_string(rows.size() + 2) + " has " +
                      std::to_string(parts.size() - 1) + " values, expected " +
                      std::to_string(p));
    }
    if (!seen.insert(parts[0]).second) {
      throw DataError("duplicate feature id: " + parts[0]);
    }
    out.feature_ids.push_back(parts[0]);
    std::vector<double> row(static_cast<std::size_t>(p));
    for (Eigen::Index c = 0; c < p; ++c) {
      row[static_cast<std::size_t>(c)] =
          detail::parse_cell(parts[static_cast<std::size_t>(c + 1)],
                             static_cast<Eigen::Index>(rows.size()), c);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("matrix file has no feature rows");

  out.values.resize(static_cast<Eigen::Index>(rows.size()), p);
  for (Eigen::Index r = 0; r < out.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < p; ++c) {
      out.values(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
  }
  out.standardized = false;
  return out;
}

inline void save_expression_matrix(const ExpressionMatrix& data,
                                   const std::string& matrix_path,
                                   const std::string& labels_path) {
  std::ofstream mf(matrix_path);
  if (!mf) throw DataError("cannot write matrix file: " + matrix_path);
  mf << "feature_id";
  for (const auto& sid : data.sample_ids) mf << '\t' << sid;
  mf << '\n';
  char buf[64];
  for (Eigen::Index r = 0; r < data.n(); ++r) {
    mf << data.feature_ids[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < data.p(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.values(r, c));
      mf << '\t' << buf;
    }
    mf << '\n';
  }
  std::ofstream lf(labels_path);
  if (!lf) throw DataError("cannot write labels file: " + labels_path);
  for (std::size_t s = 0; s < data.sample_ids.size(); ++s) {
    lf << data.sample_ids[s] << '\t' << data.class_of_sample[s] << '\n';
  }
}

// Rescales each column (sample) to mean 0 and sample sd 1 over the n
// features. Row standardization is never applied.
inline ExpressionMatrix column_standardize(const ExpressionMatrix& data) {
  if (data.standardized) throw DomainError("matrix is already standardized");
  if (data.n() < 2) throw DataError("need at least 2 features to standardize");
  ExpressionMatrix out = data;
  const double n = static_cast<double>(data.n());
  for (Eigen::Index c = 0; c < data.p(); ++c) {
    const double mu = data.values.col(c).mean();
    const double ss = (data.values.col(c).array() - mu).square().sum();
    const double sd = std::sqrt(ss / (n - 1.0));
    if (sd <= 0.0) {
      throw DataError("constant column: " + data.sample_ids[static_cast<std::size_t>(c)]);
    }
    out.values.col(c) = (data.values.col(c).array() - mu) / sd;
  }
  out.standardized = true;
  return out;
}

inline DesignMatrices build_design_matrices(const std::vector<int>& class_of_sample) {
  validate_contiguous_classes(class_of_sample);
  int m = 0;
  for (int c : class_of_sample) m = std::max(m, c);
  DesignMatrices d;
  d.X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(class_of_sample.size()), m);
  for (std::size_t s = 0; s < class_of_sample.size(); ++s) {
    d.X(static_cast<Eigen::Index>(s), class_of_sample[s] - 1) = 1.0;
  }
  return d;
}

}  // namespace mixcontrast
