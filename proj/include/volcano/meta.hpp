#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "volcano/blocks.hpp"
#include "volcano/dataset.hpp"
#include "volcano/surrogate.hpp"

namespace volcano {

inline constexpr std::size_t kDatasetFeatureWidth = 5;

// (log10 rows, log10 columns, class count, majority/minority ratio,
// categorical column fraction). Regression: class count 0, ratio 1.
std::vector<double> extract_dataset_features(const Dataset& dataset);

// Ordered pairs (j, k) whose predicted order disagrees with the target order:
// sum over j, k of [pred_j < pred_k] xor [y_j < y_k].
std::size_t ranking_loss(std::span<const double> predicted, std::span<const double> targets);
// Same, with the model's posterior means at `inputs`.
std::size_t ranking_loss(const Surrogate& model, const Eigen::MatrixXd& inputs, std::span<const double> targets);

// ---------------------------------------------------------------------------
// RGPE

inline constexpr std::size_t kRgpeSamples = 100;
inline constexpr std::size_t kRgpeMinTargets = 3;

// Probability that each model has the lowest ranking loss on the target
// data, estimated from `samples` joint posterior draws of every base model
// and leave-one-out draws of the target model. Result: one weight per base
// model, then the target's. Ties go to a uniformly random minimizer. Throws
// MetaError with fewer than kRgpeMinTargets targets or zero samples.
std::vector<double> rgpe_weights(std::span<const GPModel* const> base, const GPModel& target,
                                 std::span<const double> targets, std::size_t samples, Rng& rng);

// A model whose prediction is mapped as shift + scale * model (scale > 0).
struct RgpeComponent {
  std::shared_ptr<const GPModel> model;
  double shift = 0.0;
  double scale = 1.0;
};

// Weighted mixture: mean sum w_i mu_i, variance sum w_i sigma_i^2.
class RgpeEnsemble final : public Surrogate {
 public:
  // Throws MetaError unless weights form a probability vector, one per component.
  RgpeEnsemble(std::vector<RgpeComponent> components, std::vector<double> weights);

  std::size_t width() const override;
  std::vector<Prediction> predict_batch(const Eigen::MatrixXd& x) const override;

  const std::vector<RgpeComponent>& components() const { return components_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<RgpeComponent> components_;
  std::vector<double> weights_;
};

Prediction rgpe_predict(const RgpeEnsemble& ensemble, std::span<const double> x);

// ---------------------------------------------------------------------------
// RankNet

struct RankTriple {
  std::vector<double> dataset_features;
  std::vector<double> better;  // arm encoding of the better arm
  std::vector<double> worse;
};

struct RankNetConfig {
  double lr = 0.05;
  std::size_t epochs = 500;
  double margin_hi = 0.9;
  double margin_lo = 0.1;
  std::size_t hidden = 32;
};

// r = w2 . tanh(W1 x + b1) + b2 over x = dataset features ++ arm one-hot.
class RankNetModel {
 public:
  RankNetModel() = default;
  // Parameters drawn uniformly from [-0.1, 0.1].
  RankNetModel(std::size_t input_width, std::size_t hidden, Rng& rng);

  std::size_t input_width() const { return inputs_; }
  std::size_t hidden() const { return hidden_; }

  double score(std::span<const double> input) const;
  // Score of `input` and its gradient with respect to parameters().
  double score_gradient(std::span<const double> input, std::vector<double>& gradient) const;

  // Flat layout: W1 (hidden x input, row-major), b1, w2, b2.
  const std::vector<double>& parameters() const { return params_; }
  std::vector<double>& parameters() { return params_; }

  // Arm vocabulary behind the one-hot arm encoding.
  const std::vector<std::string>& arms() const { return arms_; }
  void set_arms(std::vector<std::string> arms) { arms_ = std::move(arms); }

 private:
  std::size_t inputs_ = 0;
  std::size_t hidden_ = 0;
  std::vector<double> params_;
  std::vector<std::string> arms_;
};

nlohmann::json to_json(const RankNetModel& model);
RankNetModel ranknet_from_json(const nlohmann::json& doc);

// One-hot over `vocabulary`; all zeros for an unknown arm.
std::vector<double> arm_encoding(const std::vector<std::string>& vocabulary, const std::string& arm);

// Mean over triples of l+(s(r_b - r_w)) + l-(s(r_w - r_b)), s the logistic
// function, l+(z) = max(0, margin_hi - z), l-(z) = max(0, z - margin_lo).
double ranknet_loss(const RankNetModel& model, std::span<const RankTriple> triples, const RankNetConfig& config);
std::vector<double> ranknet_gradient(const RankNetModel& model, std::span<const RankTriple> triples,
                                     const RankNetConfig& config);

// Full-batch gradient descent. Throws MetaError on an empty or ragged triple
// set, or when the loss turns non-finite (the message names the epoch).
RankNetModel train_ranknet(std::span<const RankTriple> triples, const RankNetConfig& config, Rng& rng);

// Fraction of triples the model orders correctly (r_better > r_worse).
double pairwise_accuracy(const RankNetModel& model, std::span<const RankTriple> triples);

// Top-k arms by score, descending, ties by declaration order.
std::vector<std::string> select_arms(const RankNetModel& model, std::span<const double> dataset_features,
                                     const std::vector<std::string>& arms, std::size_t k);

// ---------------------------------------------------------------------------
// Prior-task store: <root>/<task_id>/{meta.json, history.jsonl}, plus an
// optional <root>/ranker.json.

struct MetaTask {
  std::string task_id;
  std::vector<double> dataset_features;
  std::optional<std::string> arm;
  std::vector<HistoryRecord> history;
};

struct PriorStore {
  std::vector<MetaTask> tasks;
  std::optional<RankNetModel> ranker;
};

// A missing directory is an empty store. Throws MetaError on malformed
// content or non-uniform feature widths.
PriorStore load_store(const std::filesystem::path& root);
void save_task(const std::filesystem::path& root, const MetaTask& task);
void save_ranker(const std::filesystem::path& root, const RankNetModel& model);

struct TripleSet {
  std::vector<RankTriple> triples;
  std::vector<std::string> vocabulary;
  std::vector<std::string> warnings;
};

// Per task, the best loss of each arm (the `arm_variable` value of each
// observation, else the task's arm label); arm j beats k iff its best loss is
// strictly lower. Tasks with fewer than two arms contribute nothing and a
// warning.
TripleSet build_triples(const std::vector<MetaTask>& tasks, const std::string& arm_variable);

enum class MetaMode { rgpe_joint, ranknet_conditioning };

std::string_view to_string(MetaMode mode);
MetaMode meta_mode_from_string(std::string_view text);

struct MetaAttachOptions {
  MetaMode mode = MetaMode::rgpe_joint;
  std::size_t k = 5;
  std::vector<double> dataset_features;  // target task, for ranknet
  std::size_t samples = kRgpeSamples;
};

// rgpe_joint: every joint block in the tree gets an RGPE surrogate built from
// the prior observations consistent with its fixed values.
// ranknet_conditioning: every conditioning block keeps only the ranker's top-k
// arms; must run before the first pull.
// An empty store leaves the tree untouched. Returns the number of blocks
// changed. Throws MetaError when the store does not fit the tree.
std::size_t attach_meta(Block& root, const PriorStore& store, const MetaAttachOptions& options);

// The surrogate factory attach_meta installs for rgpe_joint.
SurrogateFactory make_rgpe_factory(std::vector<MetaTask> tasks, std::size_t samples);

}  // namespace volcano
