#include "lbd/rebalance.hpp"

#include <cmath>

#include "lbd/errors.hpp"

namespace lbd {

DiscrepancyForm parse_discrepancy_form(std::string_view name) {
  if (name == "linear") return DiscrepancyForm::kLinear;
  if (name == "power") return DiscrepancyForm::kPower;
  if (name == "effective") return DiscrepancyForm::kEffective;
  if (name == "sqrt") return DiscrepancyForm::kSqrt;
  if (name == "log") return DiscrepancyForm::kLog;
  if (name == "plain") return DiscrepancyForm::kPlain;
  throw InputError("unknown discrepancy ratio '" + std::string(name) +
                   "' (expected linear|power|effective|sqrt|log|plain)");
}

std::string_view to_string(DiscrepancyForm form) {
  switch (form) {
    case DiscrepancyForm::kLinear: return "linear";
    case DiscrepancyForm::kPower: return "power";
    case DiscrepancyForm::kEffective: return "effective";
    case DiscrepancyForm::kSqrt: return "sqrt";
    case DiscrepancyForm::kLog: return "log";
    case DiscrepancyForm::kPlain: return "plain";
  }
  return "unknown";
}

void DiscrepancySpec::validate() const {
  if (form == DiscrepancyForm::kPower && !(gamma > 0.0)) throw InputError("power ratio requires gamma > 0");
  if (form == DiscrepancyForm::kEffective && !(beta > 0.0 && beta < 1.0)) {
    throw InputError("effective ratio requires 0 < beta < 1");
  }
}

double f_value(const DiscrepancySpec& spec, Index n) {
  spec.validate();
  if (n < 1) throw InputError("class count must be >= 1 (drop empty classes first)");
  const auto count = static_cast<double>(n);
  switch (spec.form) {
    case DiscrepancyForm::kLinear: return count;
    case DiscrepancyForm::kPower: return std::pow(count, spec.gamma);
    case DiscrepancyForm::kEffective:
      // (1 - beta^n) / (1 - beta) with beta^n = exp(n log beta), both sides via expm1/log1p.
      return -std::expm1(count * std::log1p(-(1.0 - spec.beta))) / (1.0 - spec.beta);
    case DiscrepancyForm::kSqrt: return std::sqrt(count);
    case DiscrepancyForm::kLog: return std::log1p(count);
    case DiscrepancyForm::kPlain: return 1.0;
  }
  throw InputError("unknown discrepancy form");
}

Eigen::VectorXd normalize_weights(const Eigen::VectorXd& raw, const std::vector<Index>& counts) {
  const auto k = static_cast<Index>(counts.size());
  if (raw.size() != k) throw InputError("one raw weight per class required");
  if ((raw.array() == raw[0]).all()) return Eigen::VectorXd::Ones(k);  // constant weights normalize to exactly 1
  double total = 0.0;
  double weighted = 0.0;
  for (Index c = 0; c < k; ++c) {
    const auto n = static_cast<double>(counts[static_cast<std::size_t>(c)]);
    total += n;
    weighted += n * raw[c];
  }
  if (!(weighted > 0.0)) throw InputError("class weights have no mass on the training set");
  return raw * (total / weighted);
}

ClassWeights class_weights(const DiscrepancySpec& spec, const std::vector<Index>& counts) {
  spec.validate();
  const auto k = static_cast<Index>(counts.size());
  ClassWeights w;
  w.raw.resize(k);
  for (Index c = 0; c < k; ++c) {
    const Index n = counts[static_cast<std::size_t>(c)];
    if (n < 1) throw InputError("class " + std::to_string(c) + " has no samples");
    w.raw[c] = 1.0 / f_value(spec, n);
  }
  w.normalized = normalize_weights(w.raw, counts);
  return w;
}

double growth_rate(const ClassWeights& weights) {
  if (weights.num_classes() < 2) throw InputError("growth rate needs at least 2 classes");
  return (weights.raw[weights.num_classes() - 1] / weights.raw[0] - 1.0) * 100.0;
}

}  // namespace lbd
