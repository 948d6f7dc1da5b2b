#include "lbd/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <future>
#include <sstream>

#include "lbd/errors.hpp"
#include "lbd/text_io.hpp"

namespace lbd {

namespace {

enum class Kind { kString, kInt, kReal, kSwitch };

struct KeyKind {
  std::string_view name;
  Kind kind;
};

// Value kinds for typed validation; names must match schema().
constexpr KeyKind kKinds[] = {
    {"classes", Kind::kInt},         {"n_max", Kind::kInt},
    {"imbalance", Kind::kReal},      {"dim", Kind::kInt},
    {"separation", Kind::kReal},     {"test_per_class", Kind::kInt},
    {"data_seed", Kind::kInt},       {"epochs", Kind::kInt},
    {"batch_size", Kind::kInt},      {"lr", Kind::kReal},
    {"momentum", Kind::kReal},       {"lambda", Kind::kReal},
    {"tau", Kind::kReal},            {"alpha", Kind::kReal},
    {"particles", Kind::kInt},       {"epsilon", Kind::kReal},
    {"seed", Kind::kInt},            {"gamma", Kind::kReal},
    {"beta", Kind::kReal},           {"repulsion", Kind::kSwitch},
    {"lr_decay_every", Kind::kInt},  {"lr_decay_factor", Kind::kReal},
    {"checkpoint_every", Kind::kInt}, {"rho", Kind::kReal},
    {"utility_tail_ratio", Kind::kReal}, {"ece_bins", Kind::kInt},
    {"runs", Kind::kInt},            {"jobs", Kind::kInt},
};

Kind kind_of(std::string_view key) {
  for (const auto& k : kKinds) {
    if (k.name == key) return k.kind;
  }
  return Kind::kString;
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  for (const auto item : split(text, ',')) {
    const auto t = trim(item);
    if (t.empty()) throw InputError("empty item in list '" + std::string(text) + "'");
    out.emplace_back(t);
  }
  return out;
}

std::string mean_std(const RunSummary& s, const std::string& key) {
  const auto it = s.stats.find(key);
  if (it == s.stats.end()) return ",";
  return format_double(it->second.mean) + "," + format_double(it->second.std);
}

std::string join_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

void prepare_out_dir(const ExperimentConfig& config) {
  std::filesystem::create_directories(config.get("out"));
  write_file(join_path(config.get("out"), "config.txt"), config.to_text());
}

}  // namespace

const std::vector<ExperimentConfig::Key>& ExperimentConfig::schema() {
  static const std::vector<Key> keys = {
      {"train_csv", "", "training CSV; synthetic data when empty"},
      {"test_csv", "", "test CSV"},
      {"classes", "10", "synthetic: number of classes K"},
      {"n_max", "1000", "synthetic: head class size"},
      {"imbalance", "100", "synthetic: imbalance factor n_0 / n_{K-1}"},
      {"dim", "10", "synthetic: feature dimension"},
      {"separation", "2.5", "synthetic: norm of each class mean"},
      {"test_per_class", "100", "synthetic: uniform test count per class"},
      {"data_seed", "0", "synthetic: generator seed"},
      {"hidden", "32", "hidden layer widths, comma separated (may be empty)"},
      {"epochs", "40", "training epochs"},
      {"batch_size", "128", "minibatch size"},
      {"lr", "0.1", "learning rate"},
      {"momentum", "0.9", "SGD momentum"},
      {"lambda", "5e-4", "weight decay coefficient"},
      {"tau", "40", "repulsion annealing stride"},
      {"alpha", "1", "utility term scale (term is divided by alpha)"},
      {"particles", "3", "number of particles M"},
      {"epsilon", "1e-8", "variance floor inside the entropy term"},
      {"seed", "0", "training seed"},
      {"ratio", "linear", "discrepancy ratio: linear|power|effective|sqrt|log|plain"},
      {"gamma", "1", "power ratio exponent"},
      {"beta", "0.9999", "effective-number beta"},
      {"repulsion", "on", "annealed repulsive force: on|off"},
      {"repulsion_scale", "auto", "multiplier on the annealed repulsion; auto = 1 / N_train"},
      {"lr_decay_every", "0", "step decay period in epochs (0 = constant rate)"},
      {"lr_decay_factor", "0.1", "step decay multiplier"},
      {"checkpoint_every", "0", "also write a checkpoint every k epochs (0 = only at the end)"},
      {"utility", "one-hot", "utility matrix: one-hot|tail-sensitive|file"},
      {"rho", "1", "tail-sensitive penalty"},
      {"utility_tail_ratio", "0.5", "tail-sensitive: fraction of classes treated as tail"},
      {"utility_file", "", "utility CSV when utility = file"},
      {"ece_bins", "15", "calibration bins"},
      {"checkpoint", "", "evaluate: checkpoint to load"},
      {"runs", "5", "sweep: repeated runs per cell"},
      {"jobs", "1", "sweep: cells trained concurrently"},
      {"axis", "ratio", "sweep axis: utility|ratio|repulsion|particles"},
      {"grid", "default", "sweep values, comma separated; 'default' uses the axis default"},
      {"out", "out", "output directory"},
  };
  return keys;
}

ExperimentConfig::ExperimentConfig() {
  for (const auto& key : schema()) values_.emplace_back(std::string(key.name), std::string(key.default_value));
}

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  for (auto& [name, current] : values_) {
    if (name == key) {
      current = std::string(trim(value));
      return;
    }
  }
  throw InputError("unknown configuration key '" + std::string(key) + "'");
}

const std::string& ExperimentConfig::get(std::string_view key) const {
  for (const auto& [name, value] : values_) {
    if (name == key) return value;
  }
  throw InputError("unknown configuration key '" + std::string(key) + "'");
}

void ExperimentConfig::merge_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = line;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = trim(body);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, line_no, "expected 'key = value'");
    try {
      set(trim(body.substr(0, eq)), body.substr(eq + 1));
    } catch (const ParseError&) {
      throw;
    } catch (const InputError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
}

void ExperimentConfig::merge_file(const std::string& path) { merge_text(read_file(path), path); }

double ExperimentConfig::get_real(std::string_view key) const {
  try {
    return parse_double(get(key));
  } catch (const std::invalid_argument& e) {
    throw InputError("config '" + std::string(key) + "': " + e.what());
  }
}

long long ExperimentConfig::get_int(std::string_view key) const {
  try {
    return parse_integer(get(key));
  } catch (const std::invalid_argument& e) {
    throw InputError("config '" + std::string(key) + "': " + e.what());
  }
}

bool ExperimentConfig::get_switch(std::string_view key) const {
  const auto& v = get(key);
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw InputError("config '" + std::string(key) + "': expected on|off, got '" + v + "'");
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig c;
  c.hidden_dims.clear();
  for (const auto& item : split_list(get("hidden"))) {
    try {
      c.hidden_dims.push_back(static_cast<Index>(parse_integer(item)));
    } catch (const std::invalid_argument& e) {
      throw InputError(std::string("config 'hidden': ") + e.what());
    }
  }
  c.epochs = get_int("epochs");
  c.batch_size = get_int("batch_size");
  c.learning_rate = get_real("lr");
  c.momentum = get_real("momentum");
  c.lambda = get_real("lambda");
  c.tau = get_real("tau");
  c.alpha = get_real("alpha");
  c.particles = get_int("particles");
  c.epsilon = get_real("epsilon");
  if (get_int("seed") < 0) throw InputError("config 'seed' must be >= 0");
  c.seed = static_cast<std::uint64_t>(get_int("seed"));
  c.ratio.form = parse_discrepancy_form(get("ratio"));
  c.ratio.gamma = get_real("gamma");
  c.ratio.beta = get_real("beta");
  c.repulsion = get_switch("repulsion");
  if (get("repulsion_scale") != "auto") c.repulsion_scale = get_real("repulsion_scale");
  c.lr_decay_every = get_int("lr_decay_every");
  c.lr_decay_factor = get_real("lr_decay_factor");
  c.validate();
  return c;
}

SyntheticSpec ExperimentConfig::synthetic_spec() const {
  SyntheticSpec s;
  s.num_classes = get_int("classes");
  s.n_max = get_int("n_max");
  s.imbalance_factor = get_real("imbalance");
  s.dim = get_int("dim");
  s.class_separation = get_real("separation");
  s.test_per_class = get_int("test_per_class");
  if (get_int("data_seed") < 0) throw InputError("config 'data_seed' must be >= 0");
  s.seed = static_cast<std::uint64_t>(get_int("data_seed"));
  return s;
}

EvalOptions ExperimentConfig::eval_options() const {
  EvalOptions o;
  o.ece_bins = static_cast<int>(get_int("ece_bins"));
  if (o.ece_bins < 1) throw InputError("config 'ece_bins' must be >= 1");
  return o;
}

void ExperimentConfig::validate() const {
  for (const auto& [name, value] : values_) {
    switch (kind_of(name)) {
      case Kind::kInt: get_int(name); break;
      case Kind::kReal: get_real(name); break;
      case Kind::kSwitch: get_switch(name); break;
      case Kind::kString: break;
    }
  }
  train_config();
  eval_options();
  const auto& utility = get("utility");
  if (utility != "one-hot" && utility != "tail-sensitive" && utility != "file") {
    throw InputError("config 'utility': expected one-hot|tail-sensitive|file, got '" + utility + "'");
  }
  if (utility == "file" && get("utility_file").empty()) throw InputError("utility = file requires utility_file");
  if (get_real("rho") < 0.0) throw InputError("config 'rho' must be >= 0");
  const double tr = get_real("utility_tail_ratio");
  if (!(tr > 0.0 && tr < 1.0)) throw InputError("config 'utility_tail_ratio' must lie in (0, 1)");
  if (get_int("checkpoint_every") < 0) throw InputError("config 'checkpoint_every' must be >= 0");
  if (get_int("runs") < 1) throw InputError("config 'runs' must be >= 1");
  if (get_int("jobs") < 1) throw InputError("config 'jobs' must be >= 1");
  const auto& axis = get("axis");
  if (axis != "utility" && axis != "ratio" && axis != "repulsion" && axis != "particles") {
    throw InputError("config 'axis': expected utility|ratio|repulsion|particles, got '" + axis + "'");
  }
  if (get("out").empty()) throw InputError("config 'out' must not be empty");
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [name, value] : values_) out += name + " = " + value + "\n";
  return out;
}

std::pair<LongTailDataset, LongTailDataset> load_datasets(const ExperimentConfig& config) {
  if (config.get("train_csv").empty()) {
    auto data = generate_synthetic(config.synthetic_spec());
    if (!config.get("test_csv").empty()) {
      data.second = load_csv(config.get("test_csv"), data.first.num_classes(), Split::kTest);
    }
    return data;
  }
  LongTailDataset train = load_csv(config.get("train_csv"), std::nullopt, Split::kTrain);
  LongTailDataset test;
  test.split = Split::kTest;
  if (!config.get("test_csv").empty()) {
    test = load_csv(config.get("test_csv"), train.num_classes(), Split::kTest);
    if (test.dim() != train.dim()) throw InputError("train and test CSVs have different feature counts");
  }
  return {std::move(train), std::move(test)};
}

UtilityMatrix build_utility(const ExperimentConfig& config, Index num_classes) {
  const auto& kind = config.get("utility");
  if (kind == "one-hot") return one_hot_utility(num_classes);
  if (kind == "tail-sensitive") {
    return tail_sensitive_utility(TailSplit(num_classes, config.get_real("utility_tail_ratio")),
                                  config.get_real("rho"));
  }
  if (kind == "file") {
    UtilityMatrix u = load_utility_matrix(config.get("utility_file"));
    if (u.num_classes() != num_classes) {
      throw InputError("utility file has " + std::to_string(u.num_classes()) + " classes, data has " +
                       std::to_string(num_classes));
    }
    return u;
  }
  throw InputError("unknown utility '" + kind + "'");
}

std::vector<std::string> sweep_grid(const ExperimentConfig& config) {
  const auto& axis = config.get("axis");
  const auto& grid = config.get("grid");
  if (grid == "default") {
    if (axis == "utility") return {"one-hot", "tail-sensitive"};
    if (axis == "ratio") return {"linear", "effective", "sqrt", "log", "plain"};
    if (axis == "repulsion") return {"on", "off"};
    if (axis == "particles") return {"1", "2", "3", "4", "5", "6", "7", "8"};
  }
  auto values = split_list(grid);
  if (values.empty()) throw InputError("sweep grid for axis '" + axis + "' is empty");
  return values;
}

SweepResult run_sweep(const ExperimentConfig& base) {
  base.validate();
  const auto& axis = base.get("axis");
  const auto grid = sweep_grid(base);

  // Every cell's configuration is validated before any training starts.
  std::vector<ExperimentConfig> cells;
  for (const auto& value : grid) {
    ExperimentConfig cell = base;
    if (axis == "utility") cell.set("utility", value);
    if (axis == "ratio") cell.set("ratio", value);
    if (axis == "repulsion") cell.set("repulsion", value);
    if (axis == "particles") cell.set("particles", value);
    cell.validate();
    cells.push_back(std::move(cell));
  }

  const auto [train_data, test_data] = load_datasets(base);
  if (test_data.size() == 0) throw InputError("sweep needs test data");
  const int runs = static_cast<int>(base.get_int("runs"));
  const auto jobs = static_cast<std::size_t>(base.get_int("jobs"));

  std::vector<RunSummary> summaries(cells.size());
  for (std::size_t first = 0; first < cells.size(); first += jobs) {
    std::vector<std::future<RunSummary>> pending;
    for (std::size_t c = first; c < std::min(cells.size(), first + jobs); ++c) {
      pending.push_back(std::async(std::launch::async, [&, c] {
        const auto& cell = cells[c];
        return repeat_runs(cell.train_config(), runs, train_data, test_data,
                           build_utility(cell, train_data.num_classes()), cell.eval_options());
      }));
    }
    for (std::size_t i = 0; i < pending.size(); ++i) summaries[first + i] = pending[i].get();
  }

  SweepResult out;
  if (axis == "ratio") {
    out.table_csv = "form,first_class_weight,last_class_weight,growth_pct,acc_mean,acc_std\n";
  } else if (axis == "utility") {
    out.table_csv =
        "utility,fhr@0.25_mean,fhr@0.25_std,fhr@0.5_mean,fhr@0.5_std,fhr@0.75_mean,fhr@0.75_std,fhr_avg_mean,"
        "fhr_avg_std,acc_mean,acc_std\n";
  } else if (axis == "repulsion") {
    out.table_csv = "repulsion,auc_mean,auc_std,ece_mean,ece_std,acc_mean,acc_std,disagreement_mean,disagreement_std\n";
  } else {
    out.table_csv = "particles,acc_mean,acc_std,head_mean,head_std,med_mean,med_std,tail_mean,tail_std\n";
  }
  out.regions_csv =
      axis + ",all_mean,all_std,head_mean,head_std,med_mean,med_std,tail_mean,tail_std,fhr_avg_mean,fhr_avg_std\n";

  for (std::size_t c = 0; c < cells.size(); ++c) {
    const RunSummary& s = summaries[c];
    const std::string& label = grid[c];
    if (axis == "ratio") {
      const ClassWeights w = class_weights(cells[c].train_config().ratio, train_data.class_counts);
      out.table_csv += label + "," + format_double(w.raw[0]) + "," + format_double(w.raw[w.num_classes() - 1]) + "," +
                       format_double(growth_rate(w)) + "," + mean_std(s, "acc_overall") + "\n";
    } else if (axis == "utility") {
      out.table_csv += label + "," + mean_std(s, "fhr@0.25") + "," + mean_std(s, "fhr@0.5") + "," +
                       mean_std(s, "fhr@0.75") + "," + mean_std(s, "fhr_avg") + "," + mean_std(s, "acc_overall") +
                       "\n";
    } else if (axis == "repulsion") {
      out.table_csv += label + "," + mean_std(s, "auc") + "," + mean_std(s, "ece") + "," +
                       mean_std(s, "acc_overall") + "," + mean_std(s, "disagreement") + "\n";
    } else {
      out.table_csv += label + "," + mean_std(s, "acc_overall") + "," + mean_std(s, "acc_head") + "," +
                       mean_std(s, "acc_med") + "," + mean_std(s, "acc_tail") + "\n";
    }
    out.regions_csv += label + "," + mean_std(s, "acc_overall") + "," + mean_std(s, "acc_head") + "," +
                       mean_std(s, "acc_med") + "," + mean_std(s, "acc_tail") + "," + mean_std(s, "fhr_avg") + "\n";
  }
  return out;
}

void cmd_generate(const ExperimentConfig& config) {
  config.validate();
  const auto [train, test] = generate_synthetic(config.synthetic_spec());
  prepare_out_dir(config);
  save_csv(train, join_path(config.get("out"), "train.csv"));
  save_csv(test, join_path(config.get("out"), "test.csv"));
}

void cmd_train(const ExperimentConfig& config) {
  config.validate();
  const TrainConfig train_config = config.train_config();
  const auto [train_data, test_data] = load_datasets(config);
  const UtilityMatrix utility = build_utility(config, train_data.num_classes());
  prepare_out_dir(config);
  const std::string out = config.get("out");
  const auto every = config.get_int("checkpoint_every");

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& rec, const ParticleEnsemble& ens) {
    if (every > 0 && (rec.epoch + 1) % every == 0) {
      save_checkpoint(ens, join_path(out, "checkpoint_epoch" + std::to_string(rec.epoch + 1) + ".txt"));
    }
  };
  const TrainResult result = train(train_config, train_data, utility, hooks);
  save_checkpoint(result.ensemble, join_path(out, "checkpoint.txt"));
  write_file(join_path(out, "trainlog.jsonl"), result.log.to_jsonl());
  if (test_data.size() > 0) {
    const Evaluation eval = evaluate(result.ensemble, test_data, utility, config.eval_options());
    write_file(join_path(out, "metrics.json"), to_json(eval.report));
    write_file(join_path(out, "predictions.csv"), predictions_csv(eval.decisions));
  }
}

void cmd_evaluate(const ExperimentConfig& config) {
  config.validate();
  if (config.get("checkpoint").empty()) throw InputError("evaluate requires a checkpoint");
  const ParticleEnsemble ens = load_checkpoint(config.get("checkpoint"));
  LongTailDataset test;
  if (!config.get("test_csv").empty()) {
    test = load_csv(config.get("test_csv"), ens.shape().num_classes, Split::kTest);
  } else if (config.get("train_csv").empty()) {
    test = generate_synthetic(config.synthetic_spec()).second;
  } else {
    throw InputError("evaluate requires test_csv when train_csv is set");
  }
  if (test.num_classes() != ens.shape().num_classes) {
    throw InputError("test data has " + std::to_string(test.num_classes()) + " classes, model has " +
                     std::to_string(ens.shape().num_classes));
  }
  const UtilityMatrix utility = build_utility(config, ens.shape().num_classes);
  prepare_out_dir(config);
  const Evaluation eval = evaluate(ens, test, utility, config.eval_options());
  write_file(join_path(config.get("out"), "metrics.json"), to_json(eval.report));
  write_file(join_path(config.get("out"), "predictions.csv"), predictions_csv(eval.decisions));
}

void cmd_sweep(const ExperimentConfig& config) {
  const SweepResult result = run_sweep(config);
  prepare_out_dir(config);
  const auto& axis = config.get("axis");
  write_file(join_path(config.get("out"), "sweep_" + axis + ".csv"), result.table_csv);
  write_file(join_path(config.get("out"), "sweep_" + axis + "_regions.csv"), result.regions_csv);
}

}  // namespace lbd
