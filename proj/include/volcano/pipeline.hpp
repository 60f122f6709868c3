#pragma once

#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "volcano/dataset.hpp"
#include "volcano/objective.hpp"

namespace volcano {

// The built-in three-stage pipeline space: scaler -> feature selector ->
// learner (k-NN, CART-style tree, ridge/logistic) with per-learner
// hyperparameters conditional on `algo`. Identical to spaces/pipeline_small.json.
std::string_view pipeline_space_document();
SearchSpace pipeline_space();

class Learner {
 public:
  virtual ~Learner() = default;
  virtual Predictions predict(const Eigen::MatrixXd& x) const = 0;
};

// A configured pipeline trained on one dataset.
class FittedPipeline {
 public:
  Predictions predict(const Eigen::MatrixXd& x) const;

 private:
  friend FittedPipeline fit_pipeline(const Configuration&, const Dataset&, std::size_t);
  Eigen::RowVectorXd shift_;
  Eigen::RowVectorXd scale_;
  std::vector<Eigen::Index> kept_;
  std::shared_ptr<const Learner> learner_;
};

// `classes` fixes the probability width for classification (0: infer from
// the training set's label vocabulary). Throws DatasetError when the
// selector leaves no feature.
FittedPipeline fit_pipeline(const Configuration& config, const Dataset& train, std::size_t classes = 0);

// Objective over pipeline_space(): trains on the train split and returns the
// validation loss (1 - balanced accuracy, or MSE). Fidelity f < 1 trains on
// the leading fraction of a fixed shuffle of the train split.
Objective make_pipeline_objective(const Dataset& dataset, Metric metric, std::uint64_t split_seed = 0);

// Predictions on the held-out test fifth after retraining on train + validation.
Predictions holdout_predictions(const Dataset& dataset, const Configuration& config, std::uint64_t split_seed = 0);
std::vector<double> holdout_labels(const Dataset& dataset, std::uint64_t split_seed = 0);
// Labels of the validation split the pipeline objective scores against.
std::vector<double> validation_labels(const Dataset& dataset, std::uint64_t split_seed = 0);

// Retrains on train + validation and scores the held-out test fifth with the
// task metric (balanced accuracy or MSE).
double holdout_score(const Dataset& dataset, Metric metric, const Configuration& config,
                     std::uint64_t split_seed = 0);

}  // namespace volcano
