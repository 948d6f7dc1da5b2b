#include <cmath>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "lbd/errors.hpp"
#include "lbd/text_io.hpp"
#include "lbd/trainer.hpp"

using lbd::Index;
using lbd::TrainConfig;

namespace {

std::pair<lbd::LongTailDataset, lbd::LongTailDataset> small_task(std::uint64_t seed = 0) {
  lbd::SyntheticSpec spec;
  spec.num_classes = 4;
  spec.n_max = 60;
  spec.imbalance_factor = 10.0;
  spec.dim = 3;
  spec.test_per_class = 20;
  spec.seed = seed;
  return lbd::generate_synthetic(spec);
}

TrainConfig small_config() {
  TrainConfig c;
  c.hidden_dims = {6};
  c.epochs = 4;
  c.batch_size = 16;
  c.learning_rate = 0.05;
  c.particles = 2;
  c.seed = 3;
  return c;
}

// Plain cross-entropy SGD with momentum on one network, sharing only the
// minibatch order with the library trainer.
Eigen::VectorXd cross_entropy_sgd(const TrainConfig& c, const lbd::LongTailDataset& data) {
  const lbd::NetShape shape{data.dim(), c.hidden_dims, data.num_classes()};
  Eigen::VectorXd theta = lbd::init_params(shape, c.seed);
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(theta.size());
  for (Index epoch = 0; epoch < c.epochs; ++epoch) {
    const auto order = lbd::minibatch_order(data.size(), c.data_seed.value_or(c.seed), epoch);
    for (Index start = 0; start < data.size(); start += c.batch_size) {
      const Index b = std::min(c.batch_size, data.size() - start);
      Eigen::MatrixXd x(b, data.dim());
      Eigen::MatrixXd cot = Eigen::MatrixXd::Zero(b, data.num_classes());
      for (Index i = 0; i < b; ++i) {
        const Index row = order[static_cast<std::size_t>(start + i)];
        x.row(i) = data.features.row(row);
        cot(i, data.labels[static_cast<std::size_t>(row)]) = -1.0 / static_cast<double>(b);
      }
      velocity = c.momentum * velocity + lbd::backward_batch(shape, theta, x, cot);
      theta -= c.learning_rate * velocity;
    }
  }
  return theta;
}

struct QuietWarnings {
  QuietWarnings() { lbd::set_warnings_enabled(false); }
  ~QuietWarnings() { lbd::set_warnings_enabled(true); }
};

}  // namespace

TEST_CASE("anneal weight") {
  CHECK(lbd::anneal_weight(0, 40.0) == 1.0);
  CHECK(lbd::anneal_weight(40, 40.0) == doctest::Approx(std::exp(-1.0)));
  CHECK(std::round(lbd::anneal_weight(40, 40.0) * 1e4) / 1e4 == 0.3679);
  for (const double tau : {0.5, 1.0, 40.0, 1e4}) {
    for (Index e = 0; e < 200; ++e) CHECK(lbd::anneal_weight(e + 1, tau) < lbd::anneal_weight(e, tau));
  }
  CHECK_THROWS_AS(lbd::anneal_weight(-1, 40.0), lbd::InputError);
  CHECK_THROWS_AS(lbd::anneal_weight(1, 0.0), lbd::InputError);
}

TEST_CASE("repulsion weight") {
  TrainConfig c;
  CHECK(lbd::repulsion_weight(c, 0, 500) == doctest::Approx(1.0 / 500.0));
  CHECK(lbd::repulsion_weight(c, 40, 500) == doctest::Approx(std::exp(-1.0) / 500.0));
  c.repulsion_scale = 1.0;
  CHECK(lbd::repulsion_weight(c, 0, 500) == 1.0);
  c.repulsion = false;
  CHECK(lbd::repulsion_weight(c, 0, 500) == 0.0);
}

TEST_CASE("config validation") {
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.batch_size = 0; }).validate(), lbd::InputError);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.momentum = 1.0; }).validate(), lbd::InputError);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.tau = 0.0; }).validate(), lbd::InputError);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.particles = 0; }).validate(), lbd::InputError);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.alpha = -1.0; }).validate(), lbd::InputError);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.hidden_dims = {0}; }).validate(), lbd::InputError);
  CHECK_NOTHROW(TrainConfig{}.validate());
}

TEST_CASE("minibatch order is a seeded permutation") {
  const auto a = lbd::minibatch_order(50, 7, 3);
  CHECK(a == lbd::minibatch_order(50, 7, 3));
  CHECK(a != lbd::minibatch_order(50, 7, 4));
  CHECK(a != lbd::minibatch_order(50, 8, 3));
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (Index i = 0; i < 50; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("zero learning rate leaves the particles untouched") {
  const auto [train, test] = small_task();
  TrainConfig c = small_config();
  c.learning_rate = 0.0;
  const auto result = lbd::train(c, train, lbd::one_hot_utility(4));
  CHECK(result.ensemble.particles() ==
        lbd::ParticleEnsemble::initialize(result.ensemble.shape(), 2, c.seed).particles());
  CHECK(result.log.epochs.size() == 4);
}

TEST_CASE("single particle with no utility matches plain cross-entropy SGD") {
  QuietWarnings quiet;
  const auto [train, test] = small_task();
  TrainConfig c = small_config();
  c.particles = 1;
  c.lambda = 0.0;
  c.ratio.form = lbd::DiscrepancyForm::kPlain;
  const auto result = lbd::train(c, train, lbd::UtilityMatrix(Eigen::MatrixXd::Zero(4, 4)));
  CHECK(result.ensemble.particle(0) == cross_entropy_sgd(c, train));
}

TEST_CASE("particles without coupling train as independent solo runs") {
  const auto [train, test] = small_task(1);
  const auto utility = lbd::tail_sensitive_utility(lbd::TailSplit(4, 0.5), 0.2);
  for (const Index m : {Index{2}, Index{3}, Index{4}}) {
    TrainConfig c = small_config();
    c.particles = m;
    c.lambda = 0.0;
    c.repulsion = false;
    c.data_seed = 99;
    const auto joint = lbd::train(c, train, utility);
    for (Index j = 0; j < m; ++j) {
      TrainConfig solo = c;
      solo.particles = 1;
      solo.seed = lbd::particle_seed(c.seed, j);
      QuietWarnings quiet;
      const auto alone = lbd::train(solo, train, utility);
      const double gap = (joint.ensemble.particle(j) - alone.ensemble.particle(0)).norm();
      if ((m & (m - 1)) == 0) {
        // Scaling by a power of two is exact, so the trajectories agree bit for bit.
        CHECK(gap == 0.0);
      } else {
        CHECK(gap <= 1e-12 * alone.ensemble.particle(0).norm());
      }
    }
  }
}

TEST_CASE("training is deterministic") {
  const auto [train, test] = small_task();
  TrainConfig c = small_config();
  c.particles = 3;
  lbd::TrainHooks hooks;
  hooks.validation = &test;
  const auto utility = lbd::tail_sensitive_utility(lbd::TailSplit(4, 0.5), 0.1);
  const auto a = lbd::train(c, train, utility, hooks);
  const auto b = lbd::train(c, train, utility, hooks);
  CHECK(a.ensemble == b.ensemble);
  CHECK(a.log.to_jsonl() == b.log.to_jsonl());
  c.seed = 4;
  CHECK(!(lbd::train(c, train, utility).ensemble == a.ensemble));
}

TEST_CASE("train log records every epoch") {
  const auto [train, test] = small_task();
  TrainConfig c = small_config();
  c.lr_decay_every = 2;
  c.lr_decay_factor = 0.5;
  int calls = 0;
  lbd::TrainHooks hooks;
  hooks.validation = &test;
  hooks.on_epoch = [&](const lbd::EpochRecord& rec, const lbd::ParticleEnsemble&) { CHECK(rec.epoch == calls++); };
  const auto result = lbd::train(c, train, lbd::one_hot_utility(4), hooks);
  CHECK(calls == 4);
  const auto& e = result.log.epochs;
  CHECK(e[0].learning_rate == 0.05);
  CHECK(e[1].learning_rate == 0.05);
  CHECK(e[2].learning_rate == 0.025);
  CHECK(e[3].learning_rate == 0.025);
  for (std::size_t i = 1; i < e.size(); ++i) CHECK(e[i].anneal < e[i - 1].anneal);
  CHECK(e[0].validation.has_value());
  std::istringstream lines(result.log.to_jsonl());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["epoch"] == n++);
    CHECK(j.contains("loss"));
    CHECK(j["validation"].contains("acc_overall"));
  }
  CHECK(n == 4);
}

TEST_CASE("first epoch lowers the loss on the default task") {
  const auto [train, test] = lbd::generate_synthetic(lbd::SyntheticSpec{});
  int lower = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainConfig c;
    c.epochs = 2;
    c.seed = seed;
    const auto log = lbd::train(c, train, lbd::one_hot_utility(10)).log;
    lower += log.epochs[1].loss.total < log.epochs[0].loss.total;
  }
  CHECK(lower >= 4);
}

TEST_CASE("input errors") {
  const auto [train, test] = small_task();
  CHECK_THROWS_AS(lbd::train(small_config(), train, lbd::one_hot_utility(3)), lbd::InputError);
  auto missing = train.subset({0, 1, 2});
  missing.class_counts = lbd::count_classes(missing.labels, 4);
  CHECK_THROWS_AS(lbd::train(small_config(), missing, lbd::one_hot_utility(4)), lbd::InputError);
  TrainConfig c = small_config();
  c.learning_rate = 1e300;
  c.lambda = 1.0;
  CHECK_THROWS_AS(lbd::train(c, train, lbd::one_hot_utility(4)), lbd::NumericError);
}

TEST_CASE("evaluate fills the report from the metric functions") {
  const auto [train, test] = small_task();
  const auto trained = lbd::train(small_config(), train, lbd::one_hot_utility(4));
  lbd::EvalOptions options;
  options.tail_ratios = {0.25, 0.5};
  options.ece_bins = 10;
  const auto eval = lbd::evaluate(trained.ensemble, test, lbd::one_hot_utility(4), options);
  const auto& r = eval.report;
  CHECK(r.n_test == test.size());
  CHECK(r.fhr.size() == 2);
  CHECK(r.fhr_avg == doctest::Approx((r.fhr.at(0.25) + r.fhr.at(0.5)) / 2.0));
  std::vector<int> picks;
  std::vector<double> conf;
  std::vector<bool> correct;
  for (std::size_t i = 0; i < eval.decisions.size(); ++i) {
    picks.push_back(eval.decisions[i].decision);
    conf.push_back(eval.decisions[i].mixture[eval.decisions[i].decision]);
    correct.push_back(picks.back() == test.labels[i]);
  }
  CHECK(r.acc_overall == lbd::region_accuracy(picks, test.labels, lbd::region_partition(4)).overall);
  CHECK(r.fhr.at(0.5) == lbd::false_head_rate(picks, test.labels, lbd::TailSplit(4, 0.5)));
  CHECK(r.ece == doctest::Approx(lbd::expected_calibration_error(conf, correct, 10)).epsilon(1e-15));
  CHECK(r.auc.has_value());
}

TEST_CASE("summaries use the sample standard deviation") {
  std::vector<lbd::MetricsReport> runs(3);
  runs[0].acc_overall = 0.5;
  runs[1].acc_overall = 0.6;
  runs[2].acc_overall = 0.7;
  const auto s = lbd::summarize(runs);
  CHECK(s.stats.at("acc_overall").mean == doctest::Approx(0.6));
  CHECK(s.stats.at("acc_overall").std == doctest::Approx(0.1));
  CHECK(lbd::summarize({runs[0]}).stats.at("acc_overall").std == 0.0);
}

TEST_CASE("repeat runs vary only the seed") {
  const auto [train, test] = small_task();
  TrainConfig c = small_config();
  const auto summary = lbd::repeat_runs(c, 3, train, test, lbd::one_hot_utility(4));
  CHECK(summary.runs.size() == 3);
  c.seed += 2;
  const auto third = lbd::evaluate(lbd::train(c, train, lbd::one_hot_utility(4)).ensemble, test,
                                   lbd::one_hot_utility(4));
  CHECK(lbd::to_json(third.report) == lbd::to_json(summary.runs[2]));
  CHECK_THROWS_AS(lbd::repeat_runs(c, 0, train, test, lbd::one_hot_utility(4)), lbd::InputError);
}
