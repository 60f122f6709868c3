#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "volcano/ensemble.hpp"
#include "volcano/meta.hpp"
#include "volcano/plan.hpp"

namespace volcano {

struct ObjectiveSource {
  enum class Kind { benchmark, dataset, command };
  Kind kind = Kind::benchmark;
  std::string benchmark;
  std::string dataset;  // CSV path
  Metric metric = Metric::balanced_accuracy;
  std::uint64_t split_seed = 0;
  std::string command;  // external objective
  std::string space;    // space document for `command`
};

struct MetaConfig {
  std::string store;
  MetaMode mode = MetaMode::rgpe_joint;
  std::size_t k = 5;
};

struct EnsembleConfig {
  std::size_t size = kDefaultEnsembleSize;
  std::size_t top = kDefaultTopPerAlgorithm;
};

struct RunConfig {
  ObjectiveSource source;
  PlanSpec plan;
  bool progressive = false;  // plan "CA-progressive"
  Budget budget = Budget::evaluations(50);
  std::uint64_t seed = 0;
  std::optional<MetaConfig> meta;
  std::optional<EnsembleConfig> ensemble;
  std::string out;  // history path; empty: nothing written
};

// Document keys: exactly one of "benchmark", "dataset" (+ "metric",
// "split_seed") or "command" (+ "space"); "plan" (shape name,
// "CA-progressive" or a plan object); "budget": {"evaluations": n} or
// {"seconds": s}; "seed"; "meta": {"store", "mode", "k"}; "ensemble":
// {"size", "top"}; "out". Throws ConfigError.
RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RunConfig& config);
void validate(const RunConfig& config);

Objective make_objective(const ObjectiveSource& source);

struct RunOutcome {
  RunResult result;
  nlohmann::ordered_json summary;
};

// Builds and runs the configured search. When `out` is set, writes the JSONL
// history there and the summary to `<out>.summary.json`.
RunOutcome cmd_run(const RunConfig& config);

nlohmann::ordered_json summary_json(const RunResult& result, const std::optional<nlohmann::json>& ensemble);

// ---------------------------------------------------------------------------
// Reports

// 1-based ranks, lower loss first; losses within `tolerance` share the
// average of their ranks.
std::vector<double> rank_with_ties(std::span<const double> losses, double tolerance = 1e-6);

struct Report {
  std::vector<std::string> tasks;
  std::vector<std::string> plans;
  std::vector<std::vector<double>> mean_loss;  // [task][plan], mean over seeds
  std::vector<std::vector<double>> ranks;      // [task][plan]
  std::vector<double> average_rank;            // [plan]
};

// Ranks plans per task and averages over tasks. Throws ConfigError on ragged input.
Report average_ranks(std::vector<std::string> tasks, std::vector<std::string> plans,
                     std::vector<std::vector<double>> mean_loss);

nlohmann::json to_json(const Report& report);

struct CompareOptions {
  Budget budget = Budget::evaluations(150);
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::string partial_path;  // results so far are written here if a run fails
};

// Runs every enumerated plan on every benchmark for every seed. All tasks
// must admit the same plan set.
Report cmd_compare_plans(const std::vector<std::string>& benchmarks, const CompareOptions& options);

// (loss_old - loss_new) / max(loss_old, loss_new); both must be positive.
double relative_improvement(double loss_new, double loss_old);

// ---------------------------------------------------------------------------
// Meta store maintenance

struct IngestOptions {
  std::string task_id;                   // default: history file stem
  std::vector<double> dataset_features;  // may be empty
  std::optional<std::string> arm;
};

// One store task per history file. Returns the number of tasks written.
std::size_t meta_ingest(const std::filesystem::path& store, const std::vector<std::filesystem::path>& histories,
                        const IngestOptions& options);

struct RankerReport {
  std::size_t tasks = 0;
  std::size_t triples = 0;
  double training_accuracy = 0.0;
  std::vector<std::string> warnings;
};

// Builds triples from the store, trains the ranker and saves it into the store.
RankerReport meta_train_ranker(const std::filesystem::path& store, const std::string& arm_variable,
                               const RankNetConfig& config, std::uint64_t seed);

}  // namespace volcano
