#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lbd/dataset.hpp"

namespace lbd {

struct RegionAccuracy {
  double overall = 0.0;
  double head = 0.0;
  double med = 0.0;
  double tail = 0.0;
};

/// Accuracy overall and within each region of the true label. An empty region
/// reports NaN.
RegionAccuracy region_accuracy(std::span<const int> decisions, std::span<const int> labels,
                               const RegionPartition& partition);

/// TH / (TT + TH) over tail-labelled samples: TH are decided head, TT tail.
/// Returns 0 (with a warning) when no sample is tail-labelled.
double false_head_rate(std::span<const int> decisions, std::span<const int> labels, const TailSplit& split);

/// Shannon entropy in nats, with 0 log 0 = 0.
double predictive_entropy(const Eigen::Ref<const Eigen::VectorXd>& probs);

/// Area under the ROC curve of `uncertainties` as a detector of incorrect
/// predictions (rank statistic, ties count 1/2). Empty when either class is
/// absent.
std::optional<double> auc_misclassification(std::span<const double> uncertainties, const std::vector<bool>& correct);

/// Binned |accuracy - confidence| over `bins` equal-width bins on (0, 1],
/// weighted by bin occupancy. A confidence of exactly 0 falls in the first bin.
double expected_calibration_error(std::span<const double> confidences, const std::vector<bool>& correct, int bins);

struct MetricsReport {
  double acc_overall = 0.0;
  double acc_head = 0.0;
  double acc_med = 0.0;
  double acc_tail = 0.0;
  std::map<double, double> fhr;  // tail ratio -> FHR
  double fhr_avg = 0.0;
  std::optional<double> auc;
  double ece = 0.0;
  long n_test = 0;
  double param_distance = 0.0;
  double disagreement = 0.0;
};

/// Single JSON object; the FHR map is keyed by the ratio's shortest decimal text.
std::string to_json(const MetricsReport& report);

}  // namespace lbd
