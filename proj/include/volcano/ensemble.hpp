#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "volcano/objective.hpp"

namespace volcano {

inline constexpr std::size_t kDefaultTopPerAlgorithm = 3;
inline constexpr std::size_t kDefaultEnsembleSize = 50;

struct PoolEntry {
  std::string algorithm;
  Configuration config;
  Predictions predictions;  // on the shared validation rows
  double score = 0.0;       // higher is better
};

// Best validation predictions per algorithm, at most `top_per_algorithm` each.
class ModelPool {
 public:
  explicit ModelPool(std::size_t top_per_algorithm = kDefaultTopPerAlgorithm);

  // Inserts, or replaces the algorithm's worst entry when it is full and the
  // new score is strictly better. A configuration already present keeps one
  // entry with the better score. Throws EnsembleError when the predictions'
  // shape differs from earlier entries.
  void record(const std::string& algorithm, const Configuration& config, Predictions predictions, double score);

  const std::vector<PoolEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t top_per_algorithm() const { return top_; }

 private:
  std::size_t top_;
  std::vector<PoolEntry> entries_;
};

struct EnsembleWeights {
  std::vector<std::size_t> counts;  // one per pool entry
  std::size_t size = 0;             // sum of counts
  double validation_score = 0.0;    // metric value of the selected ensemble
};

// Greedy forward selection with replacement over `size` rounds; each round
// adds the entry whose inclusion gives the best validation metric (ties to
// the earliest entry). Returns the best prefix, the longest among equals.
// Throws EnsembleError on an empty pool, size 0, or a metric that does not
// fit the prediction shape.
EnsembleWeights ensemble_select(const ModelPool& pool, std::size_t size, Metric metric,
                                std::span<const double> labels);

// Count-weighted average of per-entry predictions (`predictions[i]` belongs
// to pool entry i). Throws EnsembleError when a selected entry's predictions
// are missing or shaped differently.
Predictions ensemble_predict(const ModelPool& pool, const EnsembleWeights& weights,
                             const std::vector<Predictions>& predictions);

nlohmann::json to_json(const ModelPool& pool, const EnsembleWeights& weights);

}  // namespace volcano
