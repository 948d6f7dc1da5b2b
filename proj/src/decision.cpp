#include "lbd/decision.hpp"

#include "lbd/errors.hpp"
#include "lbd/metrics.hpp"
#include "lbd/text_io.hpp"

namespace lbd {

namespace {

// First index of the maximum, so ties resolve to the lowest class id.
int first_argmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<int>(best);
}

void check_classes(const ParticleEnsemble& ens, const UtilityMatrix& utility) {
  if (utility.num_classes() != ens.shape().num_classes) {
    throw InputError("utility covers " + std::to_string(utility.num_classes()) + " classes, model has " +
                     std::to_string(ens.shape().num_classes));
  }
}

}  // namespace

DecisionOutput decide(const ParticleEnsemble& ens, const UtilityMatrix& utility, const Eigen::VectorXd& x) {
  check_classes(ens, utility);
  const Predictive pred = predictive_logprobs(ens, x);
  DecisionOutput out;
  const Eigen::VectorXd mean_logp = pred.per_particle.colwise().mean().transpose();
  out.expected_gains = utility.gain_matrix().transpose() * mean_logp;
  out.decision = first_argmax(out.expected_gains);
  out.mixture = pred.mixture;
  out.argmax_pred = first_argmax(out.mixture);
  return out;
}

std::vector<DecisionOutput> decide_batch(const ParticleEnsemble& ens, const UtilityMatrix& utility,
                                         const Eigen::MatrixXd& inputs) {
  check_classes(ens, utility);
  if (inputs.cols() != ens.shape().input_dim) throw InputError("input dimension does not match the model");
  const BatchPredictive pred = predictive_batch(ens, inputs);
  Eigen::MatrixXd mean_logp = Eigen::MatrixXd::Zero(inputs.rows(), ens.shape().num_classes);
  for (const auto& logp : pred.per_particle) mean_logp += logp;
  mean_logp /= static_cast<double>(ens.size());
  const Eigen::MatrixXd gains = mean_logp * utility.gain_matrix();

  std::vector<DecisionOutput> out(static_cast<std::size_t>(inputs.rows()));
  for (Index i = 0; i < inputs.rows(); ++i) {
    auto& d = out[static_cast<std::size_t>(i)];
    d.expected_gains = gains.row(i).transpose();
    d.decision = first_argmax(d.expected_gains);
    d.mixture = pred.mixture.row(i).transpose();
    d.argmax_pred = first_argmax(d.mixture);
  }
  return out;
}

std::string predictions_csv(const std::vector<DecisionOutput>& decisions) {
  std::string out = "index,decision,argmax_pred,entropy,maxprob\n";
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const auto& d = decisions[i];
    out += std::to_string(i) + "," + std::to_string(d.decision) + "," + std::to_string(d.argmax_pred) + "," +
           format_double(predictive_entropy(d.mixture)) + "," + format_double(d.mixture.maxCoeff()) + "\n";
  }
  return out;
}

}  // namespace lbd
