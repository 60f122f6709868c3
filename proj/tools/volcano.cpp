#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "volcano/cli.hpp"
#include "volcano/errors.hpp"

namespace {

using volcano::ConfigError;
using json = nlohmann::json;

constexpr int kUsageExit = 2;
constexpr int kRuntimeExit = 3;

struct RunFlags {
  std::string config;
  std::string benchmark;
  std::string dataset;
  std::string metric;
  std::string plan;
  std::optional<double> budget_secs;
  std::optional<std::size_t> budget_evals;
  std::optional<std::uint64_t> seed;
  std::string meta_store;
  std::string meta_mode;
  std::optional<std::size_t> meta_k;
  std::optional<std::size_t> ensemble_size;
  std::string out;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw volcano::IoError("cannot read '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw volcano::ParseError(path + ": " + e.what());
  }
}

// Flags override the config document field by field.
volcano::RunConfig resolve_run_config(const RunFlags& f) {
  json doc = f.config.empty() ? json::object() : read_json_file(f.config);
  if (!f.benchmark.empty() || !f.dataset.empty()) {
    doc.erase("benchmark");
    doc.erase("dataset");
    doc.erase("command");
  }
  if (!f.benchmark.empty()) doc["benchmark"] = f.benchmark;
  if (!f.dataset.empty()) doc["dataset"] = f.dataset;
  if (!f.metric.empty()) doc["metric"] = f.metric;
  if (!f.plan.empty()) doc["plan"] = f.plan;
  if (f.budget_secs && f.budget_evals) throw ConfigError("give either --budget-secs or --budget-evals");
  if (f.budget_secs) doc["budget"] = {{"seconds", *f.budget_secs}};
  if (f.budget_evals) doc["budget"] = {{"evaluations", *f.budget_evals}};
  if (f.seed) doc["seed"] = *f.seed;
  if (!f.meta_store.empty()) doc["meta"]["store"] = f.meta_store;
  if (!f.meta_mode.empty()) doc["meta"]["mode"] = f.meta_mode;
  if (f.meta_k) doc["meta"]["k"] = *f.meta_k;
  if (f.ensemble_size) doc["ensemble"]["size"] = *f.ensemble_size;
  if (!f.out.empty()) doc["out"] = f.out;
  return volcano::run_config_from_json(doc);
}

std::vector<double> parse_features(const std::string& text) {
  std::vector<double> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, comma - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad dataset feature '" + item + "'");
    }
    start = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"volcano: plan-based AutoML search"};
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "Run one search and write its history");
  run_cmd->add_option("--config", run_flags.config, "Run-config document (JSON)");
  run_cmd->add_option("--benchmark", run_flags.benchmark, "Built-in benchmark name");
  run_cmd->add_option("--dataset", run_flags.dataset, "CSV dataset path");
  run_cmd->add_option("--metric", run_flags.metric, "balanced_accuracy | mse");
  run_cmd->add_option("--plan", run_flags.plan, "J | C | A | AC | CA | CA-progressive");
  run_cmd->add_option("--budget-secs", run_flags.budget_secs);
  run_cmd->add_option("--budget-evals", run_flags.budget_evals);
  run_cmd->add_option("--seed", run_flags.seed);
  run_cmd->add_option("--meta-store", run_flags.meta_store);
  run_cmd->add_option("--meta-mode", run_flags.meta_mode, "rgpe | ranknet");
  run_cmd->add_option("--meta-k", run_flags.meta_k);
  run_cmd->add_option("--ensemble-size", run_flags.ensemble_size);
  run_cmd->add_option("--out", run_flags.out, "History path (JSONL)");

  std::vector<std::string> cmp_tasks;
  std::size_t cmp_evals = 150;
  std::size_t cmp_seeds = 5;
  std::string cmp_out;
  auto* cmp_cmd = app.add_subcommand("compare-plans", "Rank the enumerated plans over benchmarks");
  cmp_cmd->add_option("--benchmark", cmp_tasks, "Benchmark names (default: the synthetic suite)");
  cmp_cmd->add_option("--budget-evals", cmp_evals);
  cmp_cmd->add_option("--seeds", cmp_seeds, "Seeds 0..n-1");
  cmp_cmd->add_option("--out", cmp_out, "Report path (JSON); partial results go to <out>.partial");

  auto* meta_cmd = app.add_subcommand("meta", "Maintain a prior-task store");
  meta_cmd->require_subcommand(1);
  std::string store;
  std::vector<std::string> histories;
  std::string task_id, features, arm;
  auto* ingest_cmd = meta_cmd->add_subcommand("ingest", "Add run histories as prior tasks");
  ingest_cmd->add_option("--store", store)->required();
  ingest_cmd->add_option("histories", histories, "JSONL history files")->required();
  ingest_cmd->add_option("--task-id", task_id);
  ingest_cmd->add_option("--features", features, "Comma-separated dataset features");
  ingest_cmd->add_option("--arm", arm, "Arm label for single-arm histories");

  std::string arm_variable = "algorithm";
  std::uint64_t ranker_seed = 0;
  auto* train_cmd = meta_cmd->add_subcommand("train-ranker", "Train the arm ranker from the store");
  train_cmd->add_option("--store", store)->required();
  train_cmd->add_option("--arm-variable", arm_variable);
  train_cmd->add_option("--seed", ranker_seed);

  auto* list_cmd = meta_cmd->add_subcommand("list", "List stored tasks");
  list_cmd->add_option("--store", store)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageExit;
  }

  try {
    if (*run_cmd) {
      const auto outcome = volcano::cmd_run(resolve_run_config(run_flags));
      std::cout << outcome.summary.dump(2) << '\n';
    } else if (*cmp_cmd) {
      volcano::CompareOptions options;
      options.budget = volcano::Budget::evaluations(cmp_evals);
      options.seeds.clear();
      for (std::size_t s = 0; s < cmp_seeds; ++s) options.seeds.push_back(s);
      if (!cmp_out.empty()) options.partial_path = cmp_out + ".partial";
      const auto tasks = cmp_tasks.empty() ? volcano::synthetic_suite() : cmp_tasks;
      const json report = volcano::to_json(volcano::cmd_compare_plans(tasks, options));
      if (!cmp_out.empty()) {
        std::ofstream out(cmp_out);
        if (!out) throw volcano::IoError("cannot write '" + cmp_out + "'");
        out << report.dump(2) << '\n';
      }
      std::cout << report.dump(2) << '\n';
    } else if (*ingest_cmd) {
      volcano::IngestOptions options;
      options.task_id = task_id;
      options.dataset_features = parse_features(features);
      if (!arm.empty()) options.arm = arm;
      std::vector<std::filesystem::path> paths(histories.begin(), histories.end());
      std::cout << "ingested " << volcano::meta_ingest(store, paths, options) << " task(s)\n";
    } else if (*train_cmd) {
      const auto report = volcano::meta_train_ranker(store, arm_variable, {}, ranker_seed);
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "tasks " << report.tasks << ", triples " << report.triples << ", training accuracy "
                << report.training_accuracy << '\n';
    } else if (*list_cmd) {
      const auto loaded = volcano::load_store(store);
      for (const auto& t : loaded.tasks)
        std::cout << t.task_id << '\t' << t.history.size() << " observations" << (t.arm ? "\tarm " + *t.arm : "")
                  << '\n';
      std::cout << loaded.tasks.size() << " task(s)" << (loaded.ranker ? ", ranker present" : "") << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeExit;
  }
  return 0;
}
