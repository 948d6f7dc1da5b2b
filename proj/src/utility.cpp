#include "lbd/utility.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "lbd/errors.hpp"
#include "lbd/text_io.hpp"

namespace lbd {

UtilityMatrix::UtilityMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (values_.rows() != values_.cols()) {
    throw InputError("utility matrix must be square, got " + std::to_string(values_.rows()) + " x " +
                     std::to_string(values_.cols()));
  }
  if (values_.rows() < 2) throw InputError("utility matrix needs at least 2 classes");
  for (Index i = 0; i < values_.rows(); ++i) {
    if (!values_.row(i).allFinite()) throw InputError("utility row " + std::to_string(i) + " has non-finite entries");
    if (values_.row(i).maxCoeff() > values_(i, i)) {
      throw InputError("utility row " + std::to_string(i) + ": diagonal entry is not the row maximum");
    }
  }
}

Eigen::VectorXd UtilityMatrix::gain_weights(Index decision) const { return values_.row(decision).transpose(); }

Eigen::MatrixXd UtilityMatrix::gain_matrix() const { return values_.transpose(); }

UtilityMatrix one_hot_utility(Index num_classes) {
  if (num_classes < 2) throw InputError("utility matrix needs at least 2 classes");
  return UtilityMatrix(Eigen::MatrixXd::Identity(num_classes, num_classes));
}

UtilityMatrix tail_sensitive_utility(const TailSplit& split, double rho) {
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw InputError("tail penalty rho must be a finite value >= 0");
  const Index k = split.num_classes();
  Eigen::MatrixXd values = Eigen::MatrixXd::Identity(k, k);
  for (int truth = split.first_tail(); truth < k; ++truth) {
    for (int decision = 0; decision < split.first_tail(); ++decision) values(truth, decision) = -rho;
  }
  return UtilityMatrix(std::move(values));
}

UtilityMatrix parse_utility_matrix(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    std::vector<double> row;
    for (const auto field : split(body, ',')) {
      try {
        row.push_back(parse_double(field));
      } catch (const std::invalid_argument& e) {
        throw ParseError(source, line_no, e.what());
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(source, line_no, "row has " + std::to_string(row.size()) + " columns, expected " +
                                            std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(source, line_no, "empty utility matrix");
  if (rows.size() != rows.front().size()) {
    throw InputError(source + ": utility matrix is " + std::to_string(rows.size()) + " x " +
                     std::to_string(rows.front().size()) + ", must be square");
  }
  const auto k = static_cast<Index>(rows.size());
  Eigen::MatrixXd values(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  try {
    return UtilityMatrix(std::move(values));
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
}

UtilityMatrix load_utility_matrix(const std::string& path) { return parse_utility_matrix(read_file(path), path); }

std::string to_csv(const UtilityMatrix& utility) {
  std::string out;
  for (Index i = 0; i < utility.num_classes(); ++i) {
    for (Index j = 0; j < utility.num_classes(); ++j) {
      if (j) out += ',';
      out += format_double(utility(i, j));
    }
    out += '\n';
  }
  return out;
}

}  // namespace lbd
