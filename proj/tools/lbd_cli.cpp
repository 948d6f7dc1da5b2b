// Command-line driver: generate-data, train, evaluate, sweep.

#include <exception>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "lbd/errors.hpp"
#include "lbd/experiment.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-tailed Bayesian decision: particle-ensemble training and evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::map<std::string, std::optional<std::string>> overrides;
  for (const auto& key : lbd::ExperimentConfig::schema()) overrides[std::string(key.name)];

  auto add_shared = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value configuration file");
    for (const auto& key : lbd::ExperimentConfig::schema()) {
      const std::string name(key.name);
      std::string flag = "--" + name;
      for (auto& ch : flag) {
        if (ch == '_') ch = '-';
      }
      cmd->add_option(flag, overrides[name], std::string(key.help) + " [" + std::string(key.default_value) + "]");
    }
  };

  auto* generate = app.add_subcommand("generate-data", "write synthetic train/test CSVs");
  auto* train = app.add_subcommand("train", "train an ensemble; writes checkpoint, log, metrics");
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint; writes metrics and predictions");
  auto* sweep = app.add_subcommand("sweep", "run an ablation grid; writes a CSV table");
  for (auto* cmd : {generate, train, evaluate, sweep}) add_shared(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    lbd::ExperimentConfig config;
    if (!config_path.empty()) config.merge_file(config_path);
    for (const auto& [key, value] : overrides) {
      if (value) config.set(key, *value);
    }
    if (generate->parsed()) lbd::cmd_generate(config);
    if (train->parsed()) lbd::cmd_train(config);
    if (evaluate->parsed()) lbd::cmd_evaluate(config);
    if (sweep->parsed()) lbd::cmd_sweep(config);
  } catch (const lbd::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
