// Acceptance suite: one PASS/FAIL line per criterion, tolerances fixed below.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lbd/decision.hpp"
#include "lbd/metrics.hpp"
#include "lbd/objective.hpp"
#include "lbd/text_io.hpp"
#include "lbd/trainer.hpp"
#include "oracles.hpp"

using lbd::DiscrepancyForm;
using lbd::Index;
using lbd::NetShape;
using lbd::ParticleEnsemble;

namespace {

constexpr double kGradTol = 1e-4;        // criterion 1, relative
constexpr double kFdStep = 1e-5;         // criterion 1
constexpr double kGradSeconds = 60.0;    // criterion 1 runtime
constexpr int kGradConfigs = 120;        // criterion 1, >= 100
constexpr double kReductionTol = 1e-12;  // criterion 2, absolute
constexpr int kMetricInstances = 1000;   // criterion 3
constexpr double kMetricTol = 1e-12;     // criterion 3 (AUC, ECE)
constexpr int kDecisionInputs = 10000;   // criterion 4
constexpr int kSeeds = 5;                // criteria 5-8
constexpr int kSeedQuorum = 4;           // criteria 5-8: comparisons won out of kSeeds
constexpr double kMaxAccDrop = 0.02;     // criterion 6: two percentage points
constexpr double kMaxEceWorsening = 0.005;  // criterion 7: half a point

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<Outcome()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = check();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  failures += out.pass ? 0 : 1;
  std::printf("%s %2d  %s: %s [%.1f s]\n", out.pass ? "PASS" : "FAIL", id, title, out.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Eigen::VectorXd flat(const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

// Random utility satisfying the row-diagonal-maximum rule.
lbd::UtilityMatrix random_utility(std::mt19937_64& rng, Index k) {
  Eigen::MatrixXd u = oracle::random_matrix(rng, k, k);
  for (Index i = 0; i < k; ++i) u(i, i) = u.row(i).maxCoeff() + 0.1;
  return lbd::UtilityMatrix(u);
}

Outcome gradient_correctness() {
  const NetShape shape{2, {8}, 3};
  std::mt19937_64 rng(1001);
  const DiscrepancyForm forms[] = {DiscrepancyForm::kLinear, DiscrepancyForm::kPower, DiscrepancyForm::kEffective,
                                   DiscrepancyForm::kSqrt,   DiscrepancyForm::kLog,   DiscrepancyForm::kPlain};
  double worst = 0.0;
  const auto start = std::chrono::steady_clock::now();
  for (int trial = 0; trial < kGradConfigs; ++trial) {
    const Eigen::MatrixXd particles = oracle::random_matrix(rng, shape.param_count(), 2, 0.7);
    const Eigen::MatrixXd x = oracle::random_matrix(rng, 6, 2, 1.5);
    std::vector<int> y(6);
    for (auto& v : y) v = static_cast<int>(rng() % 3);
    const std::vector<Index> counts{static_cast<Index>(20 + rng() % 200), static_cast<Index>(5 + rng() % 20),
                                    static_cast<Index>(1 + rng() % 5)};
    const lbd::DiscrepancySpec ratio{forms[trial % 6], 0.3 + static_cast<double>(rng() % 100) / 50.0, 0.99};
    const auto weights = lbd::class_weights(ratio, counts);
    const lbd::UtilityMatrix utility =
        trial % 4 == 0   ? lbd::one_hot_utility(3)
        : trial % 4 == 1 ? lbd::tail_sensitive_utility(lbd::TailSplit(3, 0.5), static_cast<double>(rng() % 20) / 10.0)
        : trial % 4 == 2 ? lbd::UtilityMatrix(Eigen::MatrixXd::Zero(3, 3))
                         : random_utility(rng, 3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const lbd::ObjectiveParams params{0.2 + 3.0 * unit(rng), 0.05 * unit(rng), unit(rng), 1e-8};

    const auto loss = lbd::batch_loss(ParticleEnsemble(shape, particles), x, y, weights, utility, params);
    const auto numeric = oracle::central_difference(
        [&](const Eigen::VectorXd& p) {
          const ParticleEnsemble e(shape, Eigen::Map<const Eigen::MatrixXd>(p.data(), particles.rows(), 2));
          return lbd::batch_loss(e, x, y, weights, utility, params).breakdown.total;
        },
        flat(particles), kFdStep);
    worst = std::max(worst, oracle::relative_error(flat(loss.gradient), numeric));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst < kGradTol && secs < kGradSeconds,
          fmt("worst relative error %.2e over %d configurations (tol %.0e), %.1f s (limit %.0f s)", worst, kGradConfigs,
              kGradTol, secs, kGradSeconds)};
}

Outcome analytic_reductions() {
  const NetShape shape{4, {8}, 5};
  std::mt19937_64 rng(1002);
  const auto plain = lbd::class_weights({DiscrepancyForm::kPlain, 1.0, 0.5}, {400, 90, 20, 6, 2});
  const lbd::UtilityMatrix zero(Eigen::MatrixXd::Zero(5, 5));
  const auto onehot = lbd::one_hot_utility(5);
  double worst_ce = 0.0;
  double worst_double = 0.0;
  lbd::set_warnings_enabled(false);  // single-particle ensembles are part of the sample
  for (int trial = 0; trial < 200; ++trial) {
    const auto ens = ParticleEnsemble::initialize(shape, 1 + trial % 5, 50 + static_cast<unsigned>(trial));
    const auto b = static_cast<Index>(1 + rng() % 32);
    const Eigen::MatrixXd x = oracle::random_matrix(rng, b, 4, 2.0);
    std::vector<int> y(static_cast<std::size_t>(b));
    for (auto& v : y) v = static_cast<int>(rng() % 5);
    double ce = 0.0;
    for (Index j = 0; j < ens.size(); ++j) {
      const auto lp = lbd::forward_logprobs_batch(shape, ens.particle(j), x);
      for (Index i = 0; i < b; ++i) ce -= lp(i, y[static_cast<std::size_t>(i)]);
    }
    ce /= static_cast<double>(b * ens.size());
    const double t0 = lbd::batch_loss(ens, x, y, plain, zero, {1.0, 0.0, 0.0, 1e-8}).breakdown.total;
    const double t1 = lbd::batch_loss(ens, x, y, plain, onehot, {1.0, 0.0, 0.0, 1e-8}).breakdown.total;
    worst_ce = std::max(worst_ce, std::abs(t0 - ce));
    worst_double = std::max(worst_double, std::abs(t1 - 2.0 * ce));
  }
  lbd::set_warnings_enabled(true);
  return {worst_ce <= kReductionTol && worst_double <= kReductionTol,
          fmt("|loss - CE| max %.1e, |loss - 2 CE| max %.1e over 200 batches (tol %.0e)", worst_ce, worst_double,
              kReductionTol)};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(1003);
  int fhr_bad = 0;
  int auc_checked = 0;
  double auc_worst = 0.0;
  double ece_worst = 0.0;
  for (int trial = 0; trial < kMetricInstances; ++trial) {
    const auto n = 1 + rng() % 50;
    const int k = 2 + static_cast<int>(rng() % 10);
    const lbd::TailSplit split(k, 0.05 + 0.9 * std::generate_canonical<double, 53>(rng));
    std::vector<int> labels(n);
    std::vector<int> picks(n);
    std::vector<double> u(n);
    std::vector<double> conf(n);
    std::vector<bool> correct(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng() % static_cast<unsigned>(k));
      picks[i] = rng() % 2 ? labels[i] : static_cast<int>(rng() % static_cast<unsigned>(k));
      u[i] = trial % 2 ? static_cast<double>(rng() % 6) : std::generate_canonical<double, 53>(rng);
      conf[i] = trial % 4 == 0 ? static_cast<double>(rng() % 21) / 20.0 : std::generate_canonical<double, 53>(rng);
      correct[i] = rng() % 3 != 0;
    }
    lbd::set_warnings_enabled(false);
    fhr_bad += lbd::false_head_rate(picks, labels, split) != oracle::fhr_count(picks, labels, split.first_tail());
    lbd::set_warnings_enabled(true);
    if (const auto auc = lbd::auc_misclassification(u, correct)) {
      ++auc_checked;
      auc_worst = std::max(auc_worst, std::abs(*auc - oracle::auc_all_pairs(u, correct)));
    }
    const int bins = trial % 2 ? 15 : 1 + static_cast<int>(rng() % 20);
    ece_worst = std::max(ece_worst, std::abs(lbd::expected_calibration_error(conf, correct, bins) -
                                             oracle::ece_by_bin(conf, correct, bins)));
  }
  // AUC is undefined when every sample is correct (or none is); top up so at
  // least kMetricInstances defined instances are compared.
  while (auc_checked < kMetricInstances) {
    const auto n = 2 + rng() % 49;
    std::vector<double> u(n);
    std::vector<bool> correct(n);
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = static_cast<double>(rng() % 5);
      correct[i] = i == 0 ? true : (i == 1 ? false : rng() % 2 == 0);
    }
    auc_worst = std::max(auc_worst, std::abs(*lbd::auc_misclassification(u, correct) - oracle::auc_all_pairs(u, correct)));
    ++auc_checked;
  }
  return {fhr_bad == 0 && auc_worst <= kMetricTol && ece_worst <= kMetricTol,
          fmt("FHR mismatches %d/%d, AUC max err %.1e over %d, ECE max err %.1e over %d (tol %.0e)", fhr_bad,
              kMetricInstances, auc_worst, auc_checked, ece_worst, kMetricInstances, kMetricTol)};
}

Outcome decision_identities() {
  const NetShape shape{5, {12}, 10};
  std::mt19937_64 rng(1004);
  const lbd::TailSplit split(10, 0.5);
  const auto onehot = lbd::one_hot_utility(10);
  const auto rho0 = lbd::tail_sensitive_utility(split, 0.0);
  const Eigen::MatrixXd tail = lbd::tail_sensitive_utility(split, 1.3).values();
  const Eigen::MatrixXd random = random_utility(rng, 10).values();
  int argmax_bad = 0;
  int rho_bad = 0;
  int shift_bad = 0;
  int done = 0;
  for (int block = 0; done < kDecisionInputs; ++block) {
    const ParticleEnsemble ens(shape, oracle::random_matrix(rng, shape.param_count(), 1 + block % 5, 1.2));
    const Eigen::MatrixXd x = oracle::random_matrix(rng, 500, 5, 2.0);
    const auto base = lbd::decide_batch(ens, onehot, x);
    const auto zero = lbd::decide_batch(ens, rho0, x);
    const double c = std::normal_distribution<double>(0.0, 3.0)(rng);
    const Eigen::MatrixXd& u = block % 2 ? tail : random;
    const auto plain_u = lbd::decide_batch(ens, lbd::UtilityMatrix(u), x);
    const auto shifted = lbd::decide_batch(ens, lbd::UtilityMatrix((u.array() + c).matrix()), x);
    for (Index i = 0; i < x.rows(); ++i, ++done) {
      Eigen::VectorXd mean_logp = Eigen::VectorXd::Zero(10);
      for (Index j = 0; j < ens.size(); ++j) {
        mean_logp += lbd::forward_logprobs(shape, ens.particle(j), x.row(i).transpose().eval());
      }
      Index best = 0;
      for (Index k = 1; k < 10; ++k) {
        if (mean_logp[k] > mean_logp[best]) best = k;
      }
      const auto s = static_cast<std::size_t>(i);
      argmax_bad += base[s].decision != best;
      rho_bad += zero[s].decision != base[s].decision;
      shift_bad += shifted[s].decision != plain_u[s].decision;
    }
  }
  return {argmax_bad == 0 && rho_bad == 0 && shift_bad == 0,
          fmt("over %d inputs: one-hot vs mean-log argmax mismatches %d, rho=0 vs one-hot %d, constant shift %d", done,
              argmax_bad, rho_bad, shift_bad)};
}

// Default synthetic task shared by criteria 5-9.
const std::pair<lbd::LongTailDataset, lbd::LongTailDataset>& default_task() {
  static const auto task = lbd::generate_synthetic(lbd::SyntheticSpec{});
  return task;
}

std::vector<lbd::MetricsReport> seeded_runs(const lbd::TrainConfig& config, const lbd::UtilityMatrix& utility) {
  const auto& [train, test] = default_task();
  return lbd::repeat_runs(config, kSeeds, train, test, utility).runs;
}

template <typename Pred>
int wins(const std::vector<lbd::MetricsReport>& a, const std::vector<lbd::MetricsReport>& b, Pred pred) {
  int n = 0;
  for (std::size_t s = 0; s < a.size(); ++s) n += pred(a[s], b[s]) ? 1 : 0;
  return n;
}

double mean_of(const std::vector<lbd::MetricsReport>& runs, double lbd::MetricsReport::*field) {
  double sum = 0.0;
  for (const auto& r : runs) sum += r.*field;
  return sum / static_cast<double>(runs.size());
}

Outcome ratio_ordering() {
  auto with = [](DiscrepancyForm f) {
    lbd::TrainConfig c;
    c.ratio.form = f;
    return seeded_runs(c, lbd::one_hot_utility(10));
  };
  const auto linear = with(DiscrepancyForm::kLinear);
  const auto sqrt_r = with(DiscrepancyForm::kSqrt);
  const auto plain = with(DiscrepancyForm::kPlain);
  const auto acc = &lbd::MetricsReport::acc_overall;
  const auto tail = &lbd::MetricsReport::acc_tail;
  const int w1 = wins(linear, sqrt_r, [](auto& a, auto& b) { return a.acc_overall >= b.acc_overall; });
  const int w2 = wins(sqrt_r, plain, [](auto& a, auto& b) { return a.acc_overall >= b.acc_overall; });
  const int w3 = wins(linear, plain, [](auto& a, auto& b) { return a.acc_tail > b.acc_tail; });
  const double ml = mean_of(linear, acc);
  const double ms = mean_of(sqrt_r, acc);
  const double mp = mean_of(plain, acc);
  const bool pass = ml >= ms && ms >= mp && w1 >= kSeedQuorum && w2 >= kSeedQuorum && w3 >= kSeedQuorum;
  return {pass, fmt("mean acc linear %.4f, sqrt %.4f, plain %.4f; seeds linear>=sqrt %d/5, sqrt>=plain %d/5, "
                    "tail acc linear %.4f vs plain %.4f with linear>plain %d/5",
                    ml, ms, mp, w1, w2, mean_of(linear, tail), mean_of(plain, tail), w3)};
}

Outcome utility_tradeoff() {
  const lbd::TrainConfig c;
  const auto onehot = seeded_runs(c, lbd::one_hot_utility(10));
  const auto tail = seeded_runs(c, lbd::tail_sensitive_utility(lbd::TailSplit(10, 0.5), 1.0));
  const int w = wins(tail, onehot, [](auto& a, auto& b) { return a.fhr.at(0.5) < b.fhr.at(0.5); });
  double fhr_t = 0.0;
  double fhr_o = 0.0;
  for (int s = 0; s < kSeeds; ++s) {
    fhr_t += tail[static_cast<std::size_t>(s)].fhr.at(0.5) / kSeeds;
    fhr_o += onehot[static_cast<std::size_t>(s)].fhr.at(0.5) / kSeeds;
  }
  const double drop = mean_of(onehot, &lbd::MetricsReport::acc_overall) - mean_of(tail, &lbd::MetricsReport::acc_overall);
  return {w >= kSeedQuorum && drop <= kMaxAccDrop,
          fmt("FHR@50%% tail-sensitive %.4f vs one-hot %.4f, lower in %d/5 seeds; accuracy drop %.2f points (limit %.1f)",
              fhr_t, fhr_o, w, 100.0 * drop, 100.0 * kMaxAccDrop)};
}

Outcome repulsion_effect() {
  const lbd::TrainConfig on;
  lbd::TrainConfig off = on;
  off.repulsion = false;
  const auto r_on = seeded_runs(on, lbd::one_hot_utility(10));
  const auto r_off = seeded_runs(off, lbd::one_hot_utility(10));
  const int w = wins(r_on, r_off, [](auto& a, auto& b) { return a.disagreement > b.disagreement; });
  const double ece_on = mean_of(r_on, &lbd::MetricsReport::ece);
  const double ece_off = mean_of(r_off, &lbd::MetricsReport::ece);
  return {w >= kSeedQuorum && ece_on - ece_off <= kMaxEceWorsening,
          fmt("disagreement on %.4f vs off %.4f, higher in %d/5 seeds; ECE on %.4f vs off %.4f (may worsen by <= %.3f)",
              mean_of(r_on, &lbd::MetricsReport::disagreement), mean_of(r_off, &lbd::MetricsReport::disagreement), w,
              ece_on, ece_off, kMaxEceWorsening)};
}

Outcome particle_trend() {
  lbd::TrainConfig one;
  one.particles = 1;
  lbd::TrainConfig three;
  three.particles = 3;
  lbd::set_warnings_enabled(false);
  const auto r1 = seeded_runs(one, lbd::one_hot_utility(10));
  lbd::set_warnings_enabled(true);
  const auto r3 = seeded_runs(three, lbd::one_hot_utility(10));
  const int w = wins(r3, r1, [](auto& a, auto& b) { return a.acc_overall > b.acc_overall; });
  return {w >= kSeedQuorum, fmt("mean acc M=3 %.4f vs M=1 %.4f, M=3 higher in %d/5 seeds",
                                mean_of(r3, &lbd::MetricsReport::acc_overall),
                                mean_of(r1, &lbd::MetricsReport::acc_overall), w)};
}

Outcome determinism() {
  const auto& [train, test] = default_task();
  lbd::TrainConfig c;
  c.epochs = 10;
  c.seed = 17;
  const auto u = lbd::tail_sensitive_utility(lbd::TailSplit(10, 0.5), 0.1);
  const auto a = lbd::train(c, train, u);
  const auto b = lbd::train(c, train, u);
  const bool ckpt = lbd::to_checkpoint_text(a.ensemble) == lbd::to_checkpoint_text(b.ensemble);
  const bool log = a.log.to_jsonl() == b.log.to_jsonl();
  const bool metrics =
      lbd::to_json(lbd::evaluate(a.ensemble, test, u).report) == lbd::to_json(lbd::evaluate(b.ensemble, test, u).report);
  return {ckpt && log && metrics, fmt("checkpoint identical: %s, train log identical: %s, metrics identical: %s",
                                      ckpt ? "yes" : "no", log ? "yes" : "no", metrics ? "yes" : "no")};
}

Outcome invariance_suite() {
  std::vector<std::string> failed;
  std::mt19937_64 rng(1010);

  // Anneal weight strictly decreasing.
  for (const double tau : {1.0, 40.0, 500.0}) {
    for (Index e = 0; e < 500; ++e) {
      if (!(lbd::anneal_weight(e + 1, tau) < lbd::anneal_weight(e, tau))) {
        failed.push_back("anneal");
        break;
      }
    }
  }

  // Entropy gradient unchanged by a common shift of one coordinate.
  {
    const NetShape shape{3, {}, 2};
    const Eigen::MatrixXd base = oracle::random_matrix(rng, shape.param_count(), 4);
    const auto g0 = lbd::entropy_gradient(ParticleEnsemble(shape, base), 1e-8);
    for (Index k = 0; k < base.rows(); ++k) {
      Eigen::MatrixXd moved = base;
      moved.row(k).array() += 5.0;
      const auto g = lbd::entropy_gradient(ParticleEnsemble(shape, moved), 1e-8);
      if ((g - g0).cwiseAbs().maxCoeff() > 1e-12 * g0.cwiseAbs().maxCoeff()) {
        failed.push_back("entropy translation");
        break;
      }
    }
  }

  // Mixture within per-particle bounds.
  {
    const NetShape shape{3, {6}, 4};
    bool ok = true;
    for (int t = 0; t < 200 && ok; ++t) {
      const ParticleEnsemble ens(shape, oracle::random_matrix(rng, shape.param_count(), 2 + t % 4, 1.5));
      const auto pred = lbd::predictive_logprobs(ens, oracle::random_matrix(rng, 3, 1, 2.0));
      const Eigen::MatrixXd probs = pred.per_particle.array().exp();
      for (Index k = 0; k < 4; ++k) {
        ok = ok && pred.mixture[k] >= probs.col(k).minCoeff() * (1 - 1e-15) &&
             pred.mixture[k] <= probs.col(k).maxCoeff() * (1 + 1e-15);
      }
    }
    if (!ok) failed.push_back("mixture bounds");
  }

  // Class weights have training-set mean one.
  {
    bool ok = true;
    for (const auto f : {DiscrepancyForm::kLinear, DiscrepancyForm::kPower, DiscrepancyForm::kEffective,
                         DiscrepancyForm::kSqrt, DiscrepancyForm::kLog, DiscrepancyForm::kPlain}) {
      for (int t = 0; t < 20; ++t) {
        std::vector<Index> counts(static_cast<std::size_t>(2 + rng() % 20));
        for (auto& n : counts) n = static_cast<Index>(1 + rng() % 3000);
        const auto w = lbd::class_weights({f, 0.6, 0.999}, counts);
        double total = 0.0;
        double weighted = 0.0;
        for (std::size_t c = 0; c < counts.size(); ++c) {
          total += static_cast<double>(counts[c]);
          weighted += static_cast<double>(counts[c]) * w.normalized[static_cast<Index>(c)];
        }
        ok = ok && std::abs(weighted - total) <= 1e-9 * total;
      }
    }
    if (!ok) failed.push_back("weight normalization");
  }

  // AUC unchanged by a strictly increasing transform.
  {
    bool ok = true;
    for (int t = 0; t < 300; ++t) {
      const auto n = 2 + rng() % 49;
      std::vector<double> u(n);
      std::vector<double> tu(n);
      std::vector<bool> correct(n);
      for (std::size_t i = 0; i < n; ++i) {
        u[i] = static_cast<double>(rng() % 10) / 10.0;
        tu[i] = std::atan(4.0 * u[i]) * 3.0 + 1.0;
        correct[i] = rng() % 2 == 0;
      }
      const auto a = lbd::auc_misclassification(u, correct);
      const auto b = lbd::auc_misclassification(tu, correct);
      ok = ok && a.has_value() == b.has_value() && (!a || std::abs(*a - *b) <= 1e-12);
    }
    if (!ok) failed.push_back("AUC rank invariance");
  }

  std::string detail = "anneal monotonicity, entropy translation-equivariance, mixture bounds, weight "
                       "normalization, AUC rank invariance";
  if (!failed.empty()) {
    detail = "violated:";
    for (const auto& f : failed) detail += " " + f;
  }
  return {failed.empty(), detail};
}

}  // namespace

int main() {
  report(1, "gradient correctness", gradient_correctness);
  report(2, "analytic reductions", analytic_reductions);
  report(3, "metric oracles", metric_oracles);
  report(4, "decision-rule identities", decision_identities);
  report(5, "ratio ordering", ratio_ordering);
  report(6, "utility trade-off", utility_tradeoff);
  report(7, "repulsion effect", repulsion_effect);
  report(8, "particle-count trend", particle_trend);
  report(9, "determinism", determinism);
  report(10, "invariance suite", invariance_suite);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures;
}
