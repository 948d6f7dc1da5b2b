#include "lbd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "lbd/errors.hpp"
#include "lbd/text_io.hpp"

namespace lbd {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw InputError("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
}

double ratio_or_nan(long num, long den) {
  return den == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(num) / static_cast<double>(den);
}

// Bin b covers (b/bins, (b+1)/bins], with 0 in the first bin. The product
// c * bins can round across a boundary, so the guess is checked with fma,
// whose sign is exact.
long ece_bin(double c, int bins) {
  long b = std::clamp<long>(static_cast<long>(std::ceil(c * bins)) - 1, 0, bins - 1);
  while (b > 0 && std::fma(c, bins, -static_cast<double>(b)) <= 0.0) --b;
  while (b + 1 < bins && std::fma(c, bins, -static_cast<double>(b + 1)) > 0.0) ++b;
  return b;
}

}  // namespace

RegionAccuracy region_accuracy(std::span<const int> decisions, std::span<const int> labels,
                               const RegionPartition& partition) {
  check_lengths(decisions.size(), labels.size());
  long correct[3] = {0, 0, 0};
  long total[3] = {0, 0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int r = partition.region_of(labels[i]);
    ++total[r];
    correct[r] += decisions[i] == labels[i];
  }
  RegionAccuracy acc;
  acc.overall = ratio_or_nan(correct[0] + correct[1] + correct[2], total[0] + total[1] + total[2]);
  acc.head = ratio_or_nan(correct[0], total[0]);
  acc.med = ratio_or_nan(correct[1], total[1]);
  acc.tail = ratio_or_nan(correct[2], total[2]);
  return acc;
}

double false_head_rate(std::span<const int> decisions, std::span<const int> labels, const TailSplit& split) {
  check_lengths(decisions.size(), labels.size());
  long tail_as_head = 0;
  long tail_as_tail = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!split.is_tail(labels[i])) continue;
    if (split.is_head(decisions[i])) {
      ++tail_as_head;
    } else {
      ++tail_as_tail;
    }
  }
  if (tail_as_head + tail_as_tail == 0) {
    warn("false head rate: no tail-labelled samples");
    return 0.0;
  }
  return static_cast<double>(tail_as_head) / static_cast<double>(tail_as_head + tail_as_tail);
}

double predictive_entropy(const Eigen::Ref<const Eigen::VectorXd>& probs) {
  double h = 0.0;
  for (Index k = 0; k < probs.size(); ++k) {
    if (probs[k] > 0.0) h -= probs[k] * std::log(probs[k]);
  }
  return h;
}

std::optional<double> auc_misclassification(std::span<const double> uncertainties, const std::vector<bool>& correct) {
  check_lengths(uncertainties.size(), correct.size());
  const std::size_t n = uncertainties.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return uncertainties[a] < uncertainties[b]; });

  // Mann-Whitney U from midranks of the positives (incorrect predictions).
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start;
    while (end < n && uncertainties[order[end]] == uncertainties[order[start]]) ++end;
    const double midrank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t i = start; i < end; ++i) {
      if (!correct[order[i]]) {
        positive_rank_sum += midrank;
        ++positives;
      }
    }
    start = end;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double np = static_cast<double>(positives);
  const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(negatives));
}

double expected_calibration_error(std::span<const double> confidences, const std::vector<bool>& correct, int bins) {
  check_lengths(confidences.size(), correct.size());
  if (bins < 1) throw InputError("ECE needs at least one bin");
  if (confidences.empty()) return 0.0;
  std::vector<double> conf_sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<long> hits(static_cast<std::size_t>(bins), 0);
  std::vector<long> count(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) throw InputError("confidence outside [0, 1] at index " + std::to_string(i));
    const long b = ece_bin(c, bins);
    conf_sum[static_cast<std::size_t>(b)] += c;
    hits[static_cast<std::size_t>(b)] += correct[i];
    ++count[static_cast<std::size_t>(b)];
  }
  const auto n = static_cast<double>(confidences.size());
  double ece = 0.0;
  for (std::size_t b = 0; b < conf_sum.size(); ++b) {
    if (count[b] == 0) continue;
    const auto size = static_cast<double>(count[b]);
    ece += (size / n) * std::abs(static_cast<double>(hits[b]) / size - conf_sum[b] / size);
  }
  return ece;
}

std::string to_json(const MetricsReport& report) {
  using nlohmann::ordered_json;
  auto number = [](double v) -> ordered_json {
    if (!std::isfinite(v)) return nullptr;
    return v;
  };
  ordered_json j;
  j["acc_overall"] = number(report.acc_overall);
  j["acc_head"] = number(report.acc_head);
  j["acc_med"] = number(report.acc_med);
  j["acc_tail"] = number(report.acc_tail);
  ordered_json fhr = ordered_json::object();
  for (const auto& [ratio, value] : report.fhr) fhr[format_double(ratio)] = number(value);
  j["fhr"] = fhr;
  j["fhr_avg"] = number(report.fhr_avg);
  j["auc"] = report.auc ? number(*report.auc) : ordered_json(nullptr);
  j["ece"] = number(report.ece);
  j["n_test"] = report.n_test;
  j["param_distance"] = number(report.param_distance);
  j["disagreement"] = number(report.disagreement);
  return j.dump(2) + "\n";
}

}  // namespace lbd
