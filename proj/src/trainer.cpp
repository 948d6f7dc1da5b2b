#include "lbd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"
#include "lbd/errors.hpp"
#include "lbd/text_io.hpp"

namespace lbd {

void TrainConfig::validate() const {
  for (const Index h : hidden_dims) {
    if (h <= 0) throw InputError("hidden layer sizes must be positive");
  }
  if (epochs < 0) throw InputError("epochs must be >= 0");
  if (batch_size < 1) throw InputError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw InputError("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InputError("momentum must lie in [0, 1)");
  if (!(lambda >= 0.0)) throw InputError("lambda must be >= 0");
  if (!(tau > 0.0)) throw InputError("tau must be positive");
  if (!(alpha > 0.0)) throw InputError("alpha must be positive");
  if (particles < 1) throw InputError("particles must be >= 1");
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
  if (lr_decay_every < 0) throw InputError("lr_decay_every must be >= 0");
  if (!(lr_decay_factor > 0.0)) throw InputError("lr_decay_factor must be positive");
  if (repulsion_scale && !(*repulsion_scale >= 0.0 && *repulsion_scale <= 1.0)) {
    throw InputError("repulsion_scale must lie in [0, 1]");
  }
  ratio.validate();
}

double anneal_weight(Index epoch, double tau) {
  if (epoch < 0) throw InputError("epoch must be >= 0");
  if (!(tau > 0.0)) throw InputError("tau must be positive");
  return std::exp(-static_cast<double>(epoch) / tau);
}

double repulsion_weight(const TrainConfig& config, Index epoch, Index num_train) {
  if (!config.repulsion) return 0.0;
  if (num_train < 1) throw InputError("training set is empty");
  const double scale = config.repulsion_scale.value_or(1.0 / static_cast<double>(num_train));
  return scale * anneal_weight(epoch, config.tau);
}

namespace {

nlohmann::ordered_json loss_json(const LossBreakdown& loss) {
  nlohmann::ordered_json j;
  j["nll_term"] = loss.nll_term;
  j["utility_term"] = loss.utility_term;
  j["reg_l2"] = loss.reg_l2;
  j["reg_entropy"] = loss.reg_entropy;
  j["total"] = loss.total;
  return j;
}

}  // namespace

std::vector<Index> minibatch_order(Index n, std::uint64_t seed, Index epoch) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const auto& rec : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = rec.epoch;
    j["loss"] = loss_json(rec.loss);
    j["anneal"] = rec.anneal;
    j["learning_rate"] = rec.learning_rate;
    j["param_distance"] = rec.diversity.param_distance;
    j["disagreement"] = rec.diversity.disagreement;
    if (rec.validation) j["validation"] = nlohmann::ordered_json::parse(to_json(*rec.validation));
    out += j.dump() + "\n";
  }
  return out;
}

TrainResult train(const TrainConfig& config, const LongTailDataset& train_data, const UtilityMatrix& utility,
                  const TrainHooks& hooks) {
  config.validate();
  if (train_data.size() == 0) throw InputError("training data is empty");
  const Index k = train_data.num_classes();
  if (utility.num_classes() != k) {
    throw InputError("utility covers " + std::to_string(utility.num_classes()) + " classes, data has " +
                     std::to_string(k));
  }
  for (Index c = 0; c < k; ++c) {
    if (train_data.class_counts[static_cast<std::size_t>(c)] < 1) {
      throw InputError("class " + std::to_string(c) + " is absent from the training data");
    }
  }
  const ClassWeights weights = class_weights(config.ratio, train_data.class_counts);
  const NetShape shape{train_data.dim(), config.hidden_dims, k};

  TrainResult result{ParticleEnsemble::initialize(shape, config.particles, config.seed), {}};
  ParticleEnsemble& ens = result.ensemble;
  const double particle_scale = static_cast<double>(config.particles);
  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(ens.param_count(), ens.size());
  const std::uint64_t data_seed = config.data_seed.value_or(config.seed);
  const Index n = train_data.size();

  ObjectiveParams objective{config.alpha, config.lambda, 0.0, config.epsilon};
  double lr = config.learning_rate;
  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.lr_decay_every > 0 && epoch > 0 && epoch % config.lr_decay_every == 0) lr *= config.lr_decay_factor;
    objective.anneal = repulsion_weight(config, epoch, n);

    const auto order = minibatch_order(n, data_seed, epoch);
    EpochRecord record;
    record.epoch = epoch;
    record.anneal = objective.anneal;
    record.learning_rate = lr;
    Index batches = 0;
    for (Index start = 0; start < n; start += config.batch_size, ++batches) {
      const Index size = std::min(config.batch_size, n - start);
      Eigen::MatrixXd inputs(size, train_data.dim());
      std::vector<int> labels(static_cast<std::size_t>(size));
      for (Index i = 0; i < size; ++i) {
        const Index row = order[static_cast<std::size_t>(start + i)];
        inputs.row(i) = train_data.features.row(row);
        labels[static_cast<std::size_t>(i)] = train_data.labels[static_cast<std::size_t>(row)];
      }
      BatchLoss loss;
      try {
        loss = batch_loss(ens, inputs, labels, weights, utility, objective);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches) + ": " + e.what(),
                           e.index());
      }
      record.loss.nll_term += loss.breakdown.nll_term;
      record.loss.utility_term += loss.breakdown.utility_term;
      record.loss.reg_l2 += loss.breakdown.reg_l2;
      record.loss.reg_entropy += loss.breakdown.reg_entropy;
      record.loss.total += loss.breakdown.total;

      velocity = config.momentum * velocity + particle_scale * loss.gradient;
      ens.mutable_particles() -= lr * velocity;
      if (!ens.particles().allFinite()) {
        throw NumericError("non-finite parameters after update at epoch " + std::to_string(epoch), batches);
      }
    }
    const auto denom = static_cast<double>(std::max<Index>(batches, 1));
    record.loss.nll_term /= denom;
    record.loss.utility_term /= denom;
    record.loss.reg_l2 /= denom;
    record.loss.reg_entropy /= denom;
    record.loss.total /= denom;
    record.diversity = diversity_diagnostics(ens, train_data.features);
    if (hooks.validation) record.validation = evaluate(ens, *hooks.validation, utility, hooks.eval_options).report;
    if (hooks.on_epoch) hooks.on_epoch(record, ens);
    result.log.epochs.push_back(std::move(record));
  }
  return result;
}

Evaluation evaluate(const ParticleEnsemble& ens, const LongTailDataset& test_data, const UtilityMatrix& utility,
                    const EvalOptions& options) {
  if (test_data.size() == 0) throw InputError("test data is empty");
  Evaluation eval;
  eval.decisions = decide_batch(ens, utility, test_data.features);
  const std::size_t n = eval.decisions.size();
  std::vector<int> picks(n);
  std::vector<double> uncertainty(n);
  std::vector<double> confidence(n);
  std::vector<bool> correct(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = eval.decisions[i];
    picks[i] = d.decision;
    uncertainty[i] = predictive_entropy(d.mixture);
    confidence[i] = std::clamp(d.mixture[d.decision], 0.0, 1.0);
    correct[i] = d.decision == test_data.labels[i];
  }

  const Index k = ens.shape().num_classes;
  MetricsReport& r = eval.report;
  r.n_test = static_cast<long>(n);
  const RegionAccuracy acc = region_accuracy(picks, test_data.labels, region_partition(k));
  r.acc_overall = acc.overall;
  r.acc_head = acc.head;
  r.acc_med = acc.med;
  r.acc_tail = acc.tail;
  double fhr_sum = 0.0;
  for (const double ratio : options.tail_ratios) {
    const double fhr = false_head_rate(picks, test_data.labels, TailSplit(k, ratio));
    r.fhr[ratio] = fhr;
    fhr_sum += fhr;
  }
  r.fhr_avg = options.tail_ratios.empty() ? 0.0 : fhr_sum / static_cast<double>(options.tail_ratios.size());
  r.auc = auc_misclassification(uncertainty, correct);
  r.ece = expected_calibration_error(confidence, correct, options.ece_bins);
  const DiversityDiagnostics diversity = diversity_diagnostics(ens, test_data.features);
  r.param_distance = diversity.param_distance;
  r.disagreement = diversity.disagreement;
  return eval;
}

RunSummary summarize(std::vector<MetricsReport> runs) {
  RunSummary summary;
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : runs) {
    values["acc_overall"].push_back(r.acc_overall);
    values["acc_head"].push_back(r.acc_head);
    values["acc_med"].push_back(r.acc_med);
    values["acc_tail"].push_back(r.acc_tail);
    for (const auto& [ratio, fhr] : r.fhr) values["fhr@" + format_double(ratio)].push_back(fhr);
    values["fhr_avg"].push_back(r.fhr_avg);
    if (r.auc) values["auc"].push_back(*r.auc);
    values["ece"].push_back(r.ece);
    values["param_distance"].push_back(r.param_distance);
    values["disagreement"].push_back(r.disagreement);
  }
  for (const auto& [name, xs] : values) {
    MetricStats s;
    const auto count = static_cast<double>(xs.size());
    s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / count;
    if (xs.size() > 1) {
      double ss = 0.0;
      for (const double x : xs) ss += (x - s.mean) * (x - s.mean);
      s.std = std::sqrt(ss / (count - 1.0));
    }
    summary.stats[name] = s;
  }
  summary.runs = std::move(runs);
  return summary;
}

RunSummary repeat_runs(const TrainConfig& config, int n_runs, const LongTailDataset& train_data,
                       const LongTailDataset& test_data, const UtilityMatrix& utility, const EvalOptions& options) {
  if (n_runs < 1) throw InputError("n_runs must be >= 1");
  std::vector<MetricsReport> runs;
  runs.reserve(static_cast<std::size_t>(n_runs));
  for (int r = 0; r < n_runs; ++r) {
    TrainConfig run_config = config;
    run_config.seed = config.seed + static_cast<std::uint64_t>(r);
    if (config.data_seed) run_config.data_seed = *config.data_seed + static_cast<std::uint64_t>(r);
    const TrainResult trained = train(run_config, train_data, utility);
    runs.push_back(evaluate(trained.ensemble, test_data, utility, options).report);
  }
  return summarize(std::move(runs));
}

}  // namespace lbd
