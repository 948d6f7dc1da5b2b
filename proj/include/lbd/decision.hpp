#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "lbd/ensemble.hpp"
#include "lbd/utility.hpp"

namespace lbd {

struct DecisionOutput {
  int decision = 0;                // argmax of expected_gains, lowest id on ties
  Eigen::VectorXd expected_gains;  // per candidate decision
  int argmax_pred = 0;             // argmax of the mixture predictive
  Eigen::VectorXd mixture;         // mixture predictive probabilities
};

/// Gain-maximizing decision: expected_gains[d] is the particle-mean log-gain
/// (1/M) sum_j g(d) . log p_j(.|x).
DecisionOutput decide(const ParticleEnsemble& ens, const UtilityMatrix& utility, const Eigen::VectorXd& x);

/// decide() for every row of `inputs`, in input order.
std::vector<DecisionOutput> decide_batch(const ParticleEnsemble& ens, const UtilityMatrix& utility,
                                         const Eigen::MatrixXd& inputs);

/// "index,decision,argmax_pred,entropy,maxprob" rows.
std::string predictions_csv(const std::vector<DecisionOutput>& decisions);

}  // namespace lbd
