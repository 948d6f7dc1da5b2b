#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lbd/net.hpp"

namespace lbd {

enum class Split { kTrain, kTest };

/// Labelled feature rows with per-class counts.
struct LongTailDataset {
  Eigen::MatrixXd features;  // N x D
  std::vector<int> labels;
  std::vector<Index> class_counts;  // n_y for y in [0, K)
  Split split = Split::kTrain;

  Index size() const { return static_cast<Index>(labels.size()); }
  Index dim() const { return features.cols(); }
  Index num_classes() const { return static_cast<Index>(class_counts.size()); }

  /// Rows `indices` as a new dataset with the same class count vector length.
  LongTailDataset subset(const std::vector<Index>& indices) const;
};

/// Counts labels into a K-vector; throws InputError for labels outside [0, K).
std::vector<Index> count_classes(const std::vector<int>& labels, Index num_classes);

struct SyntheticSpec {
  Index num_classes = 10;
  Index n_max = 1000;
  double imbalance_factor = 100.0;
  Index dim = 10;
  double class_separation = 2.5;
  Index test_per_class = 100;
  std::uint64_t seed = 0;
};

/// Training profile n_k = round(n_max * IF^(-k/(K-1))).
std::vector<Index> long_tail_profile(Index num_classes, Index n_max, double imbalance_factor);

/// Gaussian class clusters with a long-tailed train split and a uniform test
/// split drawn independently from the same clusters.
std::pair<LongTailDataset, LongTailDataset> generate_synthetic(const SyntheticSpec& spec);

/// CSV with header "f0,...,f{D-1},label". When `num_classes` is given labels
/// must lie below it; otherwise K = max label + 1.
LongTailDataset load_csv(const std::string& path, std::optional<Index> num_classes = std::nullopt,
                         Split split = Split::kTrain);
void save_csv(const LongTailDataset& data, const std::string& path);
std::string to_csv(const LongTailDataset& data);
LongTailDataset parse_csv(const std::string& text, const std::string& source,
                          std::optional<Index> num_classes = std::nullopt, Split split = Split::kTrain);

/// Head/med/tail thirds by class id: floor(K/3), floor(K/3), the rest.
struct RegionPartition {
  std::vector<int> head;
  std::vector<int> med;
  std::vector<int> tail;

  /// 0 = head, 1 = med, 2 = tail.
  int region_of(int label) const;
};

RegionPartition region_partition(Index num_classes);

/// The last ceil(ratio * K) class ids are tail; everything else is head.
class TailSplit {
 public:
  TailSplit(Index num_classes, double tail_ratio);

  double tail_ratio() const { return tail_ratio_; }
  Index num_classes() const { return num_classes_; }
  /// Smallest tail class id.
  int first_tail() const { return first_tail_; }
  bool is_tail(int label) const { return label >= first_tail_; }
  bool is_head(int label) const { return label < first_tail_; }
  std::vector<int> tail() const;
  std::vector<int> head() const;

 private:
  Index num_classes_;
  double tail_ratio_;
  int first_tail_;
};

}  // namespace lbd
