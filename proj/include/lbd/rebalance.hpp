#pragma once

#include <Eigen/Dense>
#include <string>
#include <string_view>
#include <vector>

#include "lbd/net.hpp"

namespace lbd {

/// Growth function f(n) whose reciprocal is the train-to-test class weight.
enum class DiscrepancyForm { kLinear, kPower, kEffective, kSqrt, kLog, kPlain };

DiscrepancyForm parse_discrepancy_form(std::string_view name);
std::string_view to_string(DiscrepancyForm form);

struct DiscrepancySpec {
  DiscrepancyForm form = DiscrepancyForm::kLinear;
  double gamma = 1.0;    // power form exponent
  double beta = 0.9999;  // effective-number decay

  /// gamma > 0 for power, 0 < beta < 1 for effective.
  void validate() const;
};

/// f(n) for the configured form. The log form is ln(1 + n) so that f(1) > 0.
double f_value(const DiscrepancySpec& spec, Index n);

struct ClassWeights {
  Eigen::VectorXd raw;         // 1 / f(n_k)
  Eigen::VectorXd normalized;  // rescaled so the training-set mean weight is 1

  Index num_classes() const { return raw.size(); }
};

/// raw * N / sum_k n_k raw_k, so the training-set mean weight is 1.
/// Constant raw weights map to exactly 1.
Eigen::VectorXd normalize_weights(const Eigen::VectorXd& raw, const std::vector<Index>& counts);

ClassWeights class_weights(const DiscrepancySpec& spec, const std::vector<Index>& counts);

/// (raw[K-1] / raw[0] - 1) * 100.
double growth_rate(const ClassWeights& weights);

}  // namespace lbd
