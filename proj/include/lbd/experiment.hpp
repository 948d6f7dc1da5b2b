#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lbd/dataset.hpp"
#include "lbd/trainer.hpp"
#include "lbd/utility.hpp"

namespace lbd {

/// Key-value experiment settings validated against a fixed schema.
///
/// Text form: one "key = value" per line, '#' starts a comment. Unknown keys
/// and malformed values are InputErrors.
class ExperimentConfig {
 public:
  struct Key {
    std::string_view name;
    std::string_view default_value;
    std::string_view help;
  };

  ExperimentConfig();

  static const std::vector<Key>& schema();

  void set(std::string_view key, std::string_view value);
  const std::string& get(std::string_view key) const;
  /// Applies a config file's entries; later calls override earlier ones.
  void merge_text(const std::string& text, const std::string& source);
  void merge_file(const std::string& path);

  /// Checks every key's value; throws InputError on the first bad one.
  void validate() const;
  /// Effective configuration in schema order, in the merge_text format.
  std::string to_text() const;

  double get_real(std::string_view key) const;
  long long get_int(std::string_view key) const;
  bool get_switch(std::string_view key) const;

  TrainConfig train_config() const;
  SyntheticSpec synthetic_spec() const;
  EvalOptions eval_options() const;

 private:
  std::vector<std::pair<std::string, std::string>> values_;
};

/// Training/test data per the config: CSV files when given, synthetic otherwise.
/// The test split is empty when train_csv is set without test_csv.
std::pair<LongTailDataset, LongTailDataset> load_datasets(const ExperimentConfig& config);

UtilityMatrix build_utility(const ExperimentConfig& config, Index num_classes);

/// Sweep axis grid after defaults are applied; throws InputError if empty.
std::vector<std::string> sweep_grid(const ExperimentConfig& config);

struct SweepResult {
  std::string table_csv;    // axis-specific ablation table
  std::string regions_csv;  // per-cell region accuracies and FHR
};

SweepResult run_sweep(const ExperimentConfig& config);

/// Commands write into config "out"; each returns after all files are written.
void cmd_generate(const ExperimentConfig& config);
void cmd_train(const ExperimentConfig& config);
void cmd_evaluate(const ExperimentConfig& config);
void cmd_sweep(const ExperimentConfig& config);

}  // namespace lbd
