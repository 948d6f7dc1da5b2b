#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lbd/decision.hpp"
#include "lbd/ensemble.hpp"
#include "lbd/metrics.hpp"
#include "lbd/objective.hpp"
#include "lbd/rebalance.hpp"
#include "lbd/utility.hpp"

namespace lbd {

struct TrainConfig {
  std::vector<Index> hidden_dims{32};
  Index epochs = 40;
  Index batch_size = 128;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double lambda = 5e-4;
  double tau = 40.0;
  double alpha = 1.0;
  Index particles = 3;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  /// Seed of the minibatch order; defaults to `seed`.
  std::optional<std::uint64_t> data_seed;
  DiscrepancySpec ratio;
  bool repulsion = true;
  /// Multiplies the annealed repulsion weight; unset means 1 / N_train, which
  /// puts the entropy on the scale of a dataset-summed log-likelihood.
  std::optional<double> repulsion_scale;
  /// Multiply the learning rate by lr_decay_factor every lr_decay_every epochs (0 = never).
  Index lr_decay_every = 0;
  double lr_decay_factor = 0.1;

  void validate() const;
};

/// exp(-epoch / tau).
double anneal_weight(Index epoch, double tau);

/// Sample order for one epoch; depends only on (n, seed, epoch).
std::vector<Index> minibatch_order(Index n, std::uint64_t seed, Index epoch);

/// Weight on the entropy term at `epoch`: 0 with repulsion off, otherwise
/// repulsion_scale (default 1 / num_train) times anneal_weight.
double repulsion_weight(const TrainConfig& config, Index epoch, Index num_train);

struct EpochRecord {
  Index epoch = 0;
  LossBreakdown loss;  // mean over the epoch's minibatches
  double anneal = 0.0;
  double learning_rate = 0.0;
  DiversityDiagnostics diversity;  // on the training features
  std::optional<MetricsReport> validation;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  /// One JSON object per line, one line per epoch.
  std::string to_jsonl() const;
};

struct EvalOptions {
  std::vector<double> tail_ratios{0.25, 0.5, 0.75};
  int ece_bins = 15;
};

struct TrainHooks {
  /// Called after every completed epoch with the current ensemble.
  std::function<void(const EpochRecord&, const ParticleEnsemble&)> on_epoch;
  /// When set, each epoch record carries a MetricsReport on this data.
  const LongTailDataset* validation = nullptr;
  EvalOptions eval_options;
};

struct TrainResult {
  ParticleEnsemble ensemble;
  TrainLog log;
};

/// Minibatch SGD with momentum on batch_loss over all particles.
///
/// Particle j starts from init_params(shape, seed + j). Each particle takes
/// steps on M times its loss gradient, so its step size does not depend on
/// the ensemble size. Identical inputs give bit-identical results.
TrainResult train(const TrainConfig& config, const LongTailDataset& train_data, const UtilityMatrix& utility,
                  const TrainHooks& hooks = {});

struct Evaluation {
  MetricsReport report;
  std::vector<DecisionOutput> decisions;
};

Evaluation evaluate(const ParticleEnsemble& ens, const LongTailDataset& test_data, const UtilityMatrix& utility,
                    const EvalOptions& options = {});

struct MetricStats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for a single run
};

struct RunSummary {
  std::vector<MetricsReport> runs;
  std::map<std::string, MetricStats> stats;  // keyed by metric name, e.g. "acc_overall", "fhr@0.5"
};

/// Aggregates per-run reports into mean and standard deviation per metric.
RunSummary summarize(std::vector<MetricsReport> runs);

/// Trains and evaluates with seeds seed, seed+1, ..., on fixed data.
RunSummary repeat_runs(const TrainConfig& config, int n_runs, const LongTailDataset& train_data,
                       const LongTailDataset& test_data, const UtilityMatrix& utility,
                       const EvalOptions& options = {});

}  // namespace lbd
