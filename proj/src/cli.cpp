#include "volcano/cli.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "volcano/errors.hpp"
#include "volcano/history.hpp"
#include "volcano/pipeline.hpp"

namespace volcano {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kProgressive = "CA-progressive";

template <typename T>
T get_field(const json& doc, const char* key) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config field '") + key + "': " + e.what());
  }
}

}  // namespace

RunConfig run_config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("run config must be a JSON object");
  static const std::vector<std::string> known{"benchmark", "dataset", "metric", "split_seed", "command", "space",
                                              "plan",      "budget",  "seed",   "meta",       "ensemble", "out"};
  for (const auto& [key, value] : doc.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown run config field '" + key + "'");

  RunConfig cfg;
  const int sources = static_cast<int>(doc.contains("benchmark")) + static_cast<int>(doc.contains("dataset")) +
                      static_cast<int>(doc.contains("command"));
  if (sources != 1) throw ConfigError("run config needs exactly one of 'benchmark', 'dataset', 'command'");
  if (doc.contains("benchmark")) {
    cfg.source.kind = ObjectiveSource::Kind::benchmark;
    cfg.source.benchmark = get_field<std::string>(doc, "benchmark");
  } else if (doc.contains("dataset")) {
    cfg.source.kind = ObjectiveSource::Kind::dataset;
    cfg.source.dataset = get_field<std::string>(doc, "dataset");
  } else {
    cfg.source.kind = ObjectiveSource::Kind::command;
    cfg.source.command = get_field<std::string>(doc, "command");
  }
  if (doc.contains("metric")) cfg.source.metric = metric_from_string(get_field<std::string>(doc, "metric"));
  if (doc.contains("split_seed")) cfg.source.split_seed = get_field<std::uint64_t>(doc, "split_seed");
  if (doc.contains("space")) cfg.source.space = get_field<std::string>(doc, "space");

  if (doc.contains("plan")) {
    const json& plan = doc.at("plan");
    if (plan.is_string() && plan.get<std::string>() == kProgressive) {
      cfg.progressive = true;
      cfg.plan.shape = PlanShape::CA;
    } else {
      cfg.plan = plan_spec_from_json(plan);
    }
  }
  if (doc.contains("budget")) {
    const json& b = doc.at("budget");
    if (!b.is_object() || b.size() != 1) throw ConfigError("budget must be {\"evaluations\": n} or {\"seconds\": s}");
    if (b.contains("evaluations")) {
      const auto n = get_field<std::int64_t>(b, "evaluations");
      if (n <= 0) throw ConfigError("budget must be positive");
      cfg.budget = Budget::evaluations(static_cast<std::size_t>(n));
    } else if (b.contains("seconds")) {
      cfg.budget = Budget::seconds(get_field<double>(b, "seconds"));
    } else {
      throw ConfigError("budget must be {\"evaluations\": n} or {\"seconds\": s}");
    }
  }
  if (doc.contains("seed")) cfg.seed = get_field<std::uint64_t>(doc, "seed");
  if (doc.contains("meta")) {
    const json& m = doc.at("meta");
    MetaConfig meta;
    meta.store = get_field<std::string>(m, "store");
    if (m.contains("mode")) meta.mode = meta_mode_from_string(get_field<std::string>(m, "mode"));
    if (m.contains("k")) meta.k = get_field<std::size_t>(m, "k");
    cfg.meta = meta;
  }
  if (doc.contains("ensemble")) {
    const json& e = doc.at("ensemble");
    EnsembleConfig ens;
    if (e.contains("size")) ens.size = get_field<std::size_t>(e, "size");
    if (e.contains("top")) ens.top = get_field<std::size_t>(e, "top");
    cfg.ensemble = ens;
  }
  if (doc.contains("out")) cfg.out = get_field<std::string>(doc, "out");
  validate(cfg);
  return cfg;
}

json to_json(const RunConfig& config) {
  json doc;
  switch (config.source.kind) {
    case ObjectiveSource::Kind::benchmark:
      doc["benchmark"] = config.source.benchmark;
      break;
    case ObjectiveSource::Kind::dataset:
      doc["dataset"] = config.source.dataset;
      doc["metric"] = std::string(to_string(config.source.metric));
      doc["split_seed"] = config.source.split_seed;
      break;
    case ObjectiveSource::Kind::command:
      doc["command"] = config.source.command;
      doc["space"] = config.source.space;
      break;
  }
  doc["plan"] = config.progressive ? json(std::string(kProgressive)) : to_json(config.plan);
  doc["budget"] = config.budget.kind == Budget::Kind::evaluations
                      ? json{{"evaluations", static_cast<std::size_t>(config.budget.amount)}}
                      : json{{"seconds", config.budget.amount}};
  doc["seed"] = config.seed;
  if (config.meta)
    doc["meta"] = {{"store", config.meta->store}, {"mode", std::string(to_string(config.meta->mode))}, {"k", config.meta->k}};
  if (config.ensemble) doc["ensemble"] = {{"size", config.ensemble->size}, {"top", config.ensemble->top}};
  if (!config.out.empty()) doc["out"] = config.out;
  return doc;
}

void validate(const RunConfig& config) {
  const auto& src = config.source;
  switch (src.kind) {
    case ObjectiveSource::Kind::benchmark:
      if (src.benchmark.empty()) throw ConfigError("benchmark name is empty");
      break;
    case ObjectiveSource::Kind::dataset:
      if (src.dataset.empty()) throw ConfigError("dataset path is empty");
      if (!std::filesystem::exists(src.dataset)) throw ConfigError("dataset '" + src.dataset + "' does not exist");
      break;
    case ObjectiveSource::Kind::command:
      if (src.command.empty()) throw ConfigError("command is empty");
      if (src.space.empty()) throw ConfigError("a command objective needs a space document");
      break;
  }
  if (!(config.budget.amount > 0.0)) throw ConfigError("budget must be positive");
  if (config.meta) {
    if (config.meta->store.empty()) throw ConfigError("meta store path is empty");
    if (config.meta->k == 0) throw ConfigError("meta k must be at least 1");
    if (config.progressive) throw ConfigError("meta-learning is not available with " + std::string(kProgressive));
  }
  if (config.ensemble) {
    if (src.kind != ObjectiveSource::Kind::dataset) throw ConfigError("ensembles need a dataset objective");
    if (config.ensemble->size == 0 || config.ensemble->top == 0) throw ConfigError("ensemble size and top must be positive");
    if (config.progressive) throw ConfigError("ensembles are not available with " + std::string(kProgressive));
  }
}

Objective make_objective(const ObjectiveSource& source) {
  switch (source.kind) {
    case ObjectiveSource::Kind::benchmark:
      return make_benchmark(source.benchmark);
    case ObjectiveSource::Kind::dataset:
      return make_pipeline_objective(load_dataset(source.dataset), source.metric, source.split_seed);
    case ObjectiveSource::Kind::command:
      return make_command_objective(load_space(source.space), source.command);
  }
  throw ConfigError("unknown objective source");
}

ordered_json summary_json(const RunResult& result, const std::optional<json>& ensemble) {
  ordered_json out;
  out["best_config"] = ordered_json::parse(to_json(result.best_config).dump());
  out["best_loss"] = result.best_loss;
  out["evaluations"] = result.evaluations;
  out["wall_s"] = result.wall_seconds;
  if (ensemble) out["ensemble"] = ordered_json::parse(ensemble->dump());
  return out;
}

RunOutcome cmd_run(const RunConfig& config) {
  validate(config);
  std::optional<Dataset> dataset;
  Objective objective;
  if (config.source.kind == ObjectiveSource::Kind::dataset) {
    dataset = load_dataset(config.source.dataset);
    objective = make_pipeline_objective(*dataset, config.source.metric, config.source.split_seed);
  } else {
    objective = make_objective(config.source);
  }

  RunOutcome outcome;
  std::optional<json> ensemble_doc;
  if (config.progressive) {
    outcome.result = run_progressive(objective, config.budget, config.seed);
  } else {
    auto root = build_plan(config.plan, objective);
    if (config.meta) {
      MetaAttachOptions opts;
      opts.mode = config.meta->mode;
      opts.k = config.meta->k;
      if (dataset) opts.dataset_features = extract_dataset_features(*dataset);
      attach_meta(*root, load_store(config.meta->store), opts);
    }
    RunContext ctx(objective, config.budget, config.seed);
    std::optional<ModelPool> pool;
    if (config.ensemble) {
      pool.emplace(config.ensemble->top);
      const auto algo = objective.space.algorithm_variable();
      ctx.set_evaluation_hook([&pool, algo](const HistoryRecord& rec, const Evaluation& ev) {
        const Observation& o = rec.observation;
        if (!o.ok() || o.fidelity != 1.0 || !ev.predictions) return;
        std::string label = "model";
        if (algo) {
          const auto it = o.config.find(*algo);
          if (it != o.config.end()) label = to_string(it->second);
        }
        pool->record(label, o.config, *ev.predictions, -*o.loss);
      });
    }
    outcome.result = run(*root, ctx);
    if (pool && !pool->empty()) {
      const Metric metric = config.source.metric;
      const auto weights =
          ensemble_select(*pool, config.ensemble->size, metric, validation_labels(*dataset, config.source.split_seed));
      std::vector<Predictions> test(pool->size());
      for (std::size_t i = 0; i < pool->size(); ++i)
        if (weights.counts[i] > 0)
          test[i] = holdout_predictions(*dataset, pool->entries()[i].config, config.source.split_seed);
      const Predictions combined = ensemble_predict(*pool, weights, test);
      ensemble_doc = to_json(*pool, weights);
      (*ensemble_doc)["test_score"] = score(metric, combined, holdout_labels(*dataset, config.source.split_seed));
    }
  }
  outcome.summary = summary_json(outcome.result, ensemble_doc);

  if (!config.out.empty()) {
    write_history(config.out, outcome.result.history);
    const std::string summary_path = config.out + ".summary.json";
    std::ofstream out(summary_path);
    if (!out) throw IoError("cannot write '" + summary_path + "'");
    out << outcome.summary.dump(2) << '\n';
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// Reports

std::vector<double> rank_with_ties(std::span<const double> losses, double tolerance) {
  std::vector<double> ranks(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) {
    double better = 0.0, tied = 0.0;
    for (std::size_t j = 0; j < losses.size(); ++j) {
      if (j == i) continue;
      if (losses[j] < losses[i] - tolerance)
        better += 1.0;
      else if (std::abs(losses[j] - losses[i]) <= tolerance)
        tied += 1.0;
    }
    ranks[i] = 1.0 + better + tied / 2.0;
  }
  return ranks;
}

Report average_ranks(std::vector<std::string> tasks, std::vector<std::string> plans,
                     std::vector<std::vector<double>> mean_loss) {
  if (tasks.empty() || plans.empty()) throw ConfigError("a report needs at least one task and one plan");
  if (mean_loss.size() != tasks.size()) throw ConfigError("one loss row per task required");
  for (const auto& row : mean_loss)
    if (row.size() != plans.size()) throw ConfigError("one loss per plan required in every task row");
  Report r;
  r.tasks = std::move(tasks);
  r.plans = std::move(plans);
  r.mean_loss = std::move(mean_loss);
  r.average_rank.assign(r.plans.size(), 0.0);
  for (const auto& row : r.mean_loss) {
    r.ranks.push_back(rank_with_ties(row));
    for (std::size_t p = 0; p < row.size(); ++p) r.average_rank[p] += r.ranks.back()[p];
  }
  for (double& a : r.average_rank) a /= static_cast<double>(r.tasks.size());
  return r;
}

json to_json(const Report& report) {
  json tasks = json::array();
  for (std::size_t t = 0; t < report.tasks.size(); ++t) {
    json row{{"task", report.tasks[t]}};
    for (std::size_t p = 0; p < report.plans.size(); ++p)
      row["plans"][report.plans[p]] = {{"mean_loss", report.mean_loss[t][p]},
                                       {"rank", t < report.ranks.size() ? report.ranks[t][p] : 0.0}};
    tasks.push_back(row);
  }
  json avg = json::object();
  for (std::size_t p = 0; p < report.plans.size() && p < report.average_rank.size(); ++p)
    avg[report.plans[p]] = report.average_rank[p];
  return {{"tasks", tasks}, {"average_rank", avg}};
}

Report cmd_compare_plans(const std::vector<std::string>& benchmarks, const CompareOptions& options) {
  if (benchmarks.empty()) throw ConfigError("compare-plans needs at least one task");
  if (options.seeds.empty()) throw ConfigError("compare-plans needs at least one seed");
  std::vector<std::string> plan_names;
  std::vector<std::vector<double>> means;
  std::vector<std::string> done;
  for (const auto& name : benchmarks) {
    const Objective objective = make_benchmark(name);
    const Enumeration en = enumerate_plans(objective);
    std::vector<std::string> names;
    for (const auto& p : en.plans) names.emplace_back(to_string(p.shape));
    if (plan_names.empty()) plan_names = names;
    if (names != plan_names) throw ConfigError("task '" + name + "' admits a different plan set");
    std::vector<double> row;
    for (const auto& plan : en.plans) {
      double sum = 0.0;
      for (auto seed : options.seeds) {
        try {
          sum += run_plan(plan, objective, options.budget, seed).best_loss;
        } catch (const Error&) {
          if (!options.partial_path.empty()) {
            Report partial;
            partial.tasks = done;
            partial.plans = plan_names;
            partial.mean_loss = means;
            std::ofstream out(options.partial_path);
            out << to_json(partial).dump(2) << '\n';
          }
          throw;
        }
      }
      row.push_back(sum / static_cast<double>(options.seeds.size()));
    }
    means.push_back(std::move(row));
    done.push_back(name);
  }
  return average_ranks(std::move(done), std::move(plan_names), std::move(means));
}

double relative_improvement(double loss_new, double loss_old) {
  if (!(loss_new > 0.0) || !(loss_old > 0.0)) throw DomainError("relative improvement needs positive losses");
  return (loss_old - loss_new) / std::max(loss_old, loss_new);
}

// ---------------------------------------------------------------------------
// Meta store maintenance

std::size_t meta_ingest(const std::filesystem::path& store, const std::vector<std::filesystem::path>& histories,
                        const IngestOptions& options) {
  if (histories.empty()) throw ConfigError("nothing to ingest");
  if (!options.task_id.empty() && histories.size() > 1)
    throw ConfigError("an explicit task id needs exactly one history file");
  const PriorStore existing = load_store(store);
  if (!existing.tasks.empty() && existing.tasks.front().dataset_features.size() != options.dataset_features.size())
    throw MetaError("dataset feature width differs from the store's");
  for (const auto& path : histories) {
    MetaTask task;
    task.task_id = options.task_id.empty() ? path.stem().string() : options.task_id;
    task.dataset_features = options.dataset_features;
    task.arm = options.arm;
    task.history = read_history(path);
    save_task(store, task);
  }
  return histories.size();
}

RankerReport meta_train_ranker(const std::filesystem::path& store, const std::string& arm_variable,
                               const RankNetConfig& config, std::uint64_t seed) {
  const PriorStore loaded = load_store(store);
  if (loaded.tasks.empty()) throw MetaError("store '" + store.string() + "' has no tasks");
  TripleSet set = build_triples(loaded.tasks, arm_variable);
  RankerReport report;
  report.tasks = loaded.tasks.size();
  report.triples = set.triples.size();
  report.warnings = set.warnings;
  if (set.triples.empty()) throw MetaError("no task has two or more arms; cannot train a ranker");
  Rng rng(seed);
  RankNetModel model = train_ranknet(set.triples, config, rng);
  model.set_arms(set.vocabulary);
  report.training_accuracy = pairwise_accuracy(model, set.triples);
  save_ranker(store, model);
  return report;
}

}  // namespace volcano
