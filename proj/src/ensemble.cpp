#include "volcano/ensemble.hpp"

#include <algorithm>

#include "volcano/errors.hpp"

namespace volcano {

ModelPool::ModelPool(std::size_t top_per_algorithm) : top_(top_per_algorithm) {
  if (top_ == 0) throw EnsembleError("pool needs room for at least one entry per algorithm");
}

void ModelPool::record(const std::string& algorithm, const Configuration& config, Predictions predictions,
                       double score) {
  if (predictions.values.size() != predictions.rows * predictions.cols)
    throw EnsembleError("prediction matrix size does not match its shape");
  if (!entries_.empty()) {
    const Predictions& first = entries_.front().predictions;
    if (predictions.rows != first.rows || predictions.cols != first.cols)
      throw EnsembleError("predictions are not aligned to the pool's validation rows");
  }
  for (auto& e : entries_) {
    if (e.config != config) continue;
    if (score > e.score) {
      e.score = score;
      e.predictions = std::move(predictions);
    }
    return;
  }
  std::vector<std::size_t> same;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].algorithm == algorithm) same.push_back(i);
  if (same.size() < top_) {
    entries_.push_back({algorithm, config, std::move(predictions), score});
    return;
  }
  std::size_t worst = same.front();
  for (std::size_t i : same)
    if (entries_[i].score < entries_[worst].score) worst = i;
  if (score > entries_[worst].score) entries_[worst] = {algorithm, config, std::move(predictions), score};
}

namespace {

void check_metric(Metric metric, const Predictions& p, std::size_t labels) {
  if (p.rows != labels) throw EnsembleError("labels are not aligned to the pool's validation rows");
  if (metric == Metric::mse && p.cols != 1) throw EnsembleError("mse needs one regression column");
  if (metric == Metric::balanced_accuracy && p.cols < 2)
    throw EnsembleError("balanced accuracy needs class probability columns");
}

}  // namespace

EnsembleWeights ensemble_select(const ModelPool& pool, std::size_t size, Metric metric,
                                std::span<const double> labels) {
  if (pool.empty()) throw EnsembleError("cannot select from an empty pool");
  if (size == 0) throw EnsembleError("ensemble size must be positive");
  const auto& entries = pool.entries();
  check_metric(metric, entries.front().predictions, labels.size());

  const std::size_t cells = entries.front().predictions.values.size();
  std::vector<double> sum(cells, 0.0);
  Predictions trial = entries.front().predictions;
  std::vector<std::size_t> counts(entries.size(), 0);

  EnsembleWeights best;
  double best_loss = 0.0;
  for (std::size_t round = 1; round <= size; ++round) {
    std::size_t pick = 0;
    double pick_loss = 0.0;
    for (std::size_t e = 0; e < entries.size(); ++e) {
      const auto& v = entries[e].predictions.values;
      for (std::size_t c = 0; c < cells; ++c) trial.values[c] = (sum[c] + v[c]) / static_cast<double>(round);
      const double loss = metric_loss(metric, score(metric, trial, labels));
      if (e == 0 || loss < pick_loss) {
        pick = e;
        pick_loss = loss;
      }
    }
    const auto& v = entries[pick].predictions.values;
    for (std::size_t c = 0; c < cells; ++c) sum[c] += v[c];
    ++counts[pick];
    if (round == 1 || pick_loss <= best_loss) {
      best_loss = pick_loss;
      best.counts = counts;
      best.size = round;
    }
  }
  best.validation_score = metric == Metric::mse ? best_loss : 1.0 - best_loss;
  return best;
}

Predictions ensemble_predict(const ModelPool& pool, const EnsembleWeights& weights,
                             const std::vector<Predictions>& predictions) {
  if (weights.counts.size() != pool.size()) throw EnsembleError("weights do not match the pool");
  if (predictions.size() != pool.size()) throw EnsembleError("need predictions for every pool entry");
  if (weights.size == 0) throw EnsembleError("empty ensemble");
  Predictions out;
  bool shaped = false;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (weights.counts[i] == 0) continue;
    const Predictions& p = predictions[i];
    if (p.values.empty() || p.values.size() != p.rows * p.cols)
      throw EnsembleError("missing predictions for ensemble member " + std::to_string(i));
    if (!shaped) {
      out.rows = p.rows;
      out.cols = p.cols;
      out.values.assign(p.values.size(), 0.0);
      shaped = true;
    } else if (p.rows != out.rows || p.cols != out.cols) {
      throw EnsembleError("ensemble member predictions differ in shape");
    }
    const double w = static_cast<double>(weights.counts[i]) / static_cast<double>(weights.size);
    for (std::size_t c = 0; c < p.values.size(); ++c) out.values[c] += w * p.values[c];
  }
  return out;
}

nlohmann::json to_json(const ModelPool& pool, const EnsembleWeights& weights) {
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (weights.counts.at(i) == 0) continue;
    const auto& e = pool.entries()[i];
    members.push_back({{"algorithm", e.algorithm}, {"config", to_json(e.config)}, {"count", weights.counts[i]},
                       {"validation_score", e.score}});
  }
  return {{"size", weights.size}, {"validation_score", weights.validation_score}, {"members", members}};
}

}  // namespace volcano
