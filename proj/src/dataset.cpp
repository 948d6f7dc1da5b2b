#include "lbd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "lbd/errors.hpp"
#include "lbd/text_io.hpp"

namespace lbd {

namespace {

std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

// Unit-norm class directions: orthonormal columns of a random rotation when
// K <= D, independent random directions otherwise.
Eigen::MatrixXd class_means(const SyntheticSpec& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index dim = spec.dim;
  const Index k = spec.num_classes;
  Eigen::MatrixXd gauss(dim, std::max(dim, k));
  for (Index c = 0; c < gauss.cols(); ++c)
    for (Index r = 0; r < dim; ++r) gauss(r, c) = normal(rng);
  Eigen::MatrixXd dirs(dim, k);
  if (k <= dim) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss.leftCols(dim));
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, dim);
    dirs = q.leftCols(k);
  } else {
    dirs = gauss.leftCols(k).colwise().normalized();
  }
  return spec.class_separation * dirs.transpose();  // K x D
}

LongTailDataset sample_split(const Eigen::MatrixXd& means, const std::vector<Index>& counts, Split split,
                             std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Index total = 0;
  for (const Index n : counts) total += n;
  LongTailDataset data;
  data.split = split;
  data.features.resize(total, means.cols());
  data.labels.reserve(static_cast<std::size_t>(total));
  Index row = 0;
  for (Index k = 0; k < static_cast<Index>(counts.size()); ++k) {
    for (Index i = 0; i < counts[static_cast<std::size_t>(k)]; ++i, ++row) {
      for (Index d = 0; d < means.cols(); ++d) data.features(row, d) = means(k, d) + normal(rng);
      data.labels.push_back(static_cast<int>(k));
    }
  }
  data.class_counts = counts;
  return data;
}

}  // namespace

LongTailDataset LongTailDataset::subset(const std::vector<Index>& indices) const {
  LongTailDataset out;
  out.split = split;
  out.features.resize(static_cast<Index>(indices.size()), dim());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.features.row(static_cast<Index>(i)) = features.row(indices[i]);
    out.labels.push_back(labels[static_cast<std::size_t>(indices[i])]);
  }
  out.class_counts = count_classes(out.labels, num_classes());
  return out;
}

std::vector<Index> count_classes(const std::vector<int>& labels, Index num_classes) {
  std::vector<Index> counts(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw InputError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) + " outside [0, " +
                       std::to_string(num_classes) + ")");
    }
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  return counts;
}

std::vector<Index> long_tail_profile(Index num_classes, Index n_max, double imbalance_factor) {
  if (num_classes < 2) throw InputError("need at least 2 classes");
  if (n_max < num_classes) throw InputError("n_max must be at least the number of classes");
  if (!(imbalance_factor >= 1.0)) throw InputError("imbalance factor must be >= 1");
  std::vector<Index> counts(static_cast<std::size_t>(num_classes));
  for (Index k = 0; k < num_classes; ++k) {
    const double exponent = -static_cast<double>(k) / static_cast<double>(num_classes - 1);
    const auto n = static_cast<Index>(std::llround(static_cast<double>(n_max) * std::pow(imbalance_factor, exponent)));
    counts[static_cast<std::size_t>(k)] = std::max<Index>(n, 1);
  }
  return counts;
}

std::pair<LongTailDataset, LongTailDataset> generate_synthetic(const SyntheticSpec& spec) {
  const auto train_counts = long_tail_profile(spec.num_classes, spec.n_max, spec.imbalance_factor);
  if (spec.dim <= 0) throw InputError("dim must be positive");
  if (spec.test_per_class <= 0) throw InputError("test_per_class must be positive");
  if (!(spec.class_separation >= 0.0)) throw InputError("class separation must be nonnegative");

  auto mean_rng = seeded_rng(spec.seed, 1);
  auto train_rng = seeded_rng(spec.seed, 2);
  auto test_rng = seeded_rng(spec.seed, 3);
  const Eigen::MatrixXd means = class_means(spec, mean_rng);
  const std::vector<Index> test_counts(static_cast<std::size_t>(spec.num_classes), spec.test_per_class);
  return {sample_split(means, train_counts, Split::kTrain, train_rng),
          sample_split(means, test_counts, Split::kTest, test_rng)};
}

LongTailDataset parse_csv(const std::string& text, const std::string& source, std::optional<Index> num_classes,
                          Split split_tag) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  ++line_no;
  const auto header = split(trim(line), ',');
  if (header.size() < 2 || trim(header.back()) != "label") {
    throw ParseError(source, line_no, "header must be f0,...,f{D-1},label");
  }
  const auto dim = static_cast<Index>(header.size() - 1);
  for (Index d = 0; d < dim; ++d) {
    if (trim(header[static_cast<std::size_t>(d)]) != "f" + std::to_string(d)) {
      throw ParseError(source, line_no, "expected column 'f" + std::to_string(d) + "'");
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto fields = split(body, ',');
    if (static_cast<Index>(fields.size()) != dim + 1) {
      throw ParseError(source, line_no,
                       "expected " + std::to_string(dim + 1) + " fields, found " + std::to_string(fields.size()));
    }
    for (Index d = 0; d < dim; ++d) {
      try {
        values.push_back(parse_double(fields[static_cast<std::size_t>(d)]));
      } catch (const std::invalid_argument& e) {
        throw ParseError(source, line_no, e.what());
      }
    }
    long long label = 0;
    const auto label_field = trim(fields.back());
    if (label_field.empty()) throw ParseError(source, line_no, "missing label");
    try {
      label = parse_integer(label_field);
    } catch (const std::invalid_argument& e) {
      throw ParseError(source, line_no, e.what());
    }
    if (label < 0 || (num_classes && label >= *num_classes) || label > 1'000'000) {
      throw ParseError(source, line_no, "label " + std::to_string(label) + " out of range");
    }
    labels.push_back(static_cast<int>(label));
  }

  LongTailDataset data;
  data.split = split_tag;
  const auto rows = static_cast<Index>(labels.size());
  data.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, dim);
  const Index k = num_classes ? *num_classes
                              : (labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1);
  data.class_counts = count_classes(labels, k);
  data.labels = std::move(labels);
  return data;
}

LongTailDataset load_csv(const std::string& path, std::optional<Index> num_classes, Split split_tag) {
  return parse_csv(read_file(path), path, num_classes, split_tag);
}

std::string to_csv(const LongTailDataset& data) {
  std::string out;
  for (Index d = 0; d < data.dim(); ++d) out += "f" + std::to_string(d) + ",";
  out += "label\n";
  for (Index i = 0; i < data.size(); ++i) {
    for (Index d = 0; d < data.dim(); ++d) {
      out += format_double(data.features(i, d));
      out += ',';
    }
    out += std::to_string(data.labels[static_cast<std::size_t>(i)]);
    out += '\n';
  }
  return out;
}

void save_csv(const LongTailDataset& data, const std::string& path) { write_file(path, to_csv(data)); }

int RegionPartition::region_of(int label) const {
  if (!med.empty() && label < med.front()) return 0;
  if (!tail.empty() && label >= tail.front()) return 2;
  return 1;
}

RegionPartition region_partition(Index num_classes) {
  if (num_classes < 3) throw InputError("region partition needs at least 3 classes");
  const auto third = static_cast<int>(num_classes / 3);
  RegionPartition part;
  for (int k = 0; k < num_classes; ++k) {
    if (k < third) {
      part.head.push_back(k);
    } else if (k < 2 * third) {
      part.med.push_back(k);
    } else {
      part.tail.push_back(k);
    }
  }
  return part;
}

TailSplit::TailSplit(Index num_classes, double tail_ratio) : num_classes_(num_classes), tail_ratio_(tail_ratio) {
  if (num_classes < 2) throw InputError("tail split needs at least 2 classes");
  if (!(tail_ratio > 0.0 && tail_ratio < 1.0)) throw InputError("tail ratio must lie in (0, 1)");
  // Guard the ceiling against representation error (0.3 * 10 = 3.0000000000000004).
  const double scaled = tail_ratio * static_cast<double>(num_classes);
  auto tail_size = static_cast<Index>(std::ceil(scaled - 1e-9));
  tail_size = std::clamp<Index>(tail_size, 1, num_classes);
  first_tail_ = static_cast<int>(num_classes - tail_size);
}

std::vector<int> TailSplit::tail() const {
  std::vector<int> out;
  for (int k = first_tail_; k < num_classes_; ++k) out.push_back(k);
  return out;
}

std::vector<int> TailSplit::head() const {
  std::vector<int> out;
  for (int k = 0; k < first_tail_; ++k) out.push_back(k);
  return out;
}

}  // namespace lbd
