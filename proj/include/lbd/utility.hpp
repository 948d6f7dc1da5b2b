#pragma once

#include <Eigen/Dense>
#include <string>

#include "lbd/dataset.hpp"

namespace lbd {

/// K x K gains, entry (i, j) = u(true class i, decision j).
///
/// Every row must be finite and have its diagonal entry as its maximum.
class UtilityMatrix {
 public:
  /// Validates and takes ownership; throws InputError naming the bad row.
  explicit UtilityMatrix(Eigen::MatrixXd values);

  Index num_classes() const { return values_.rows(); }
  const Eigen::MatrixXd& values() const { return values_; }
  double operator()(Index truth, Index decision) const { return values_(truth, decision); }

  /// Exponents of the log-gain of `decision`:
  /// log g(decision) = gain_weights(decision) . log p(. | x).
  ///
  /// This is row `decision` of the matrix, not its column. Contracting over
  /// the truth index would turn a negative (tail, head) entry into a reward
  /// for deciding head, since log p <= 0.
  Eigen::VectorXd gain_weights(Index decision) const;
  /// All gain weights as columns, so that gains = logprobs * gain_matrix().
  Eigen::MatrixXd gain_matrix() const;

 private:
  Eigen::MatrixXd values_;
};

UtilityMatrix one_hot_utility(Index num_classes);

/// Identity plus a -rho penalty at (tail truth, head decision).
UtilityMatrix tail_sensitive_utility(const TailSplit& split, double rho);

/// K rows of K comma-separated numbers, no header.
UtilityMatrix load_utility_matrix(const std::string& path);
UtilityMatrix parse_utility_matrix(const std::string& text, const std::string& source);
std::string to_csv(const UtilityMatrix& utility);

}  // namespace lbd
