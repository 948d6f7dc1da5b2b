#include "lbd/objective.hpp"

#include <cmath>
#include <string>

#include "lbd/errors.hpp"

namespace lbd {

void ObjectiveParams::validate() const {
  if (!(alpha > 0.0)) throw InputError("alpha must be positive");
  if (!(lambda >= 0.0)) throw InputError("lambda must be >= 0");
  if (!(anneal >= 0.0 && anneal <= 1.0)) throw InputError("anneal weight must lie in [0, 1]");
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
}

double expectation_weighting(const ClassWeights& weights, int label) {
  if (label < 0 || label >= weights.num_classes()) throw InputError("label " + std::to_string(label) + " out of range");
  return weights.normalized[label];
}

BatchLoss batch_loss(const ParticleEnsemble& ens, const Eigen::MatrixXd& inputs, std::span<const int> labels,
                     const ClassWeights& weights, const UtilityMatrix& utility, const ObjectiveParams& params) {
  params.validate();
  const Index batch = inputs.rows();
  const Index k = ens.shape().num_classes;
  const Index m = ens.size();
  if (batch == 0 || labels.empty()) throw InputError("empty batch");
  if (static_cast<Index>(labels.size()) != batch) throw InputError("one label per input row required");
  if (weights.num_classes() != k || utility.num_classes() != k) {
    throw InputError("class weights and utility must cover " + std::to_string(k) + " classes");
  }

  const Eigen::MatrixXd gains = utility.gain_matrix();
  const double inv_alpha = 1.0 / params.alpha;

  // Per-sample weight on each log-probability; identical for every particle.
  Eigen::MatrixXd sample_weights(batch, k);
  Eigen::VectorXd importance(batch);
  for (Index i = 0; i < batch; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    importance[i] = expectation_weighting(weights, y);
    sample_weights.row(i) = gains.col(y).transpose();
  }

  std::vector<ForwardTape<double>> tapes;
  tapes.reserve(static_cast<std::size_t>(m));
  Eigen::VectorXd nll_per_sample = Eigen::VectorXd::Zero(batch);
  Eigen::VectorXd util_per_sample = Eigen::VectorXd::Zero(batch);
  for (Index j = 0; j < m; ++j) {
    tapes.push_back(forward_tape(ens.shape(), ens.particle(j), inputs));
    const Eigen::MatrixXd& logp = tapes.back().logprobs;
    for (Index i = 0; i < batch; ++i) nll_per_sample[i] += logp(i, labels[static_cast<std::size_t>(i)]);
    util_per_sample += (logp.array() * sample_weights.array()).rowwise().sum().matrix();
  }

  const double scale = 1.0 / (static_cast<double>(batch) * static_cast<double>(m));
  BatchLoss result;
  LossBreakdown& out = result.breakdown;
  for (Index i = 0; i < batch; ++i) {
    const double nll = -importance[i] * nll_per_sample[i] * scale;
    const double util = -importance[i] * inv_alpha * util_per_sample[i] * scale;
    if (!std::isfinite(nll) || !std::isfinite(util)) throw NumericError("non-finite loss for batch sample", i);
    out.nll_term += nll;
    out.utility_term += util;
  }

  const Regularizer reg = regularizer(ens, params.lambda, params.anneal, params.epsilon);
  out.reg_l2 = reg.value.l2_term;
  out.reg_entropy = reg.value.entropy_term;
  out.total = out.nll_term + out.utility_term + reg.value.combined;
  if (!std::isfinite(out.total)) throw NumericError("non-finite regularized loss", -1);

  // Cotangent on log p_j(.|x_i): -(w_i / (B M)) (e_{y_i} + g(y_i) / alpha).
  Eigen::MatrixXd cotangent = inv_alpha * sample_weights;
  for (Index i = 0; i < batch; ++i) cotangent(i, labels[static_cast<std::size_t>(i)]) += 1.0;
  cotangent = -(cotangent.array().colwise() * (importance.array() * scale)).matrix();

  result.gradient = reg.gradient;
  for (Index j = 0; j < m; ++j) {
    result.gradient.col(j) +=
        backward_from_tape(ens.shape(), ens.particle(j), tapes[static_cast<std::size_t>(j)], cotangent);
  }
  return result;
}

}  // namespace lbd
