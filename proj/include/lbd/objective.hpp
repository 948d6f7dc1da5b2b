#pragma once

#include <Eigen/Dense>
#include <span>

#include "lbd/ensemble.hpp"
#include "lbd/rebalance.hpp"
#include "lbd/utility.hpp"

namespace lbd {

/// Terms of the minimized training loss:
/// total = nll_term + utility_term + lambda * reg_l2 - anneal * reg_entropy.
struct LossBreakdown {
  double nll_term = 0.0;
  double utility_term = 0.0;
  double reg_l2 = 0.0;
  double reg_entropy = 0.0;
  double total = 0.0;
};

struct ObjectiveParams {
  double alpha = 1.0;  // utility term is scaled by 1 / alpha
  double lambda = 0.0;
  double anneal = 0.0;
  double epsilon = 1e-8;

  void validate() const;
};

struct BatchLoss {
  LossBreakdown breakdown;
  Eigen::MatrixXd gradient;  // P x M, d total / d particle j in column j
};

/// Importance weight of a training sample: the normalized 1/f(n_y).
double expectation_weighting(const ClassWeights& weights, int label);

/// Negated lower bound on a minibatch, with the training decision fixed to the
/// true label:
///
///   -(1/B) sum_i w[y_i] (1/M) sum_j [ log p_j(y_i|x_i)
///                                     + (1/alpha) g(y_i) . log p_j(.|x_i) ]
///   + lambda * l2 - anneal * entropy
///
/// where g(d) = utility.gain_weights(d). Throws NumericError carrying the
/// sample index when a per-sample term is not finite.
BatchLoss batch_loss(const ParticleEnsemble& ens, const Eigen::MatrixXd& inputs, std::span<const int> labels,
                     const ClassWeights& weights, const UtilityMatrix& utility, const ObjectiveParams& params);

}  // namespace lbd
