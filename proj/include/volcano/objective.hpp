#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "volcano/space.hpp"

namespace volcano {

enum class EvalStatus { ok, failed, timeout };

std::string_view to_string(EvalStatus status);
EvalStatus eval_status_from_string(std::string_view text);

// Row-major prediction matrix: class probabilities (one column per class) or
// regression values (one column).
struct Predictions {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  // Arg-max column per row, ties to the lowest index. Regression: the value.
  std::vector<double> labels() const;
};

struct Evaluation {
  EvalStatus status = EvalStatus::ok;
  double loss = 0.0;
  std::optional<Predictions> predictions;
  std::string message;
};

// One evaluation of the objective as seen by the optimizer.
struct Observation {
  std::size_t iter = 0;
  Configuration config;
  std::optional<double> loss;
  double cost_s = 0.0;
  double fidelity = 1.0;
  EvalStatus status = EvalStatus::ok;
  double wall_time = 0.0;

  bool ok() const { return status == EvalStatus::ok && loss.has_value(); }
  std::optional<double> reward() const {
    if (!ok()) return std::nullopt;
    return -*loss;
  }
};

using EvalFn = std::function<Evaluation(const Configuration&, double fidelity, std::uint64_t seed)>;
using CostModel = std::function<double(const Configuration&)>;

// A black-box loss to minimize over `space`.
struct Objective {
  std::string name;
  SearchSpace space;
  EvalFn eval_fn;
  CostModel cost_model;  // optional
  // Known lower bound on the loss, when one exists (e.g. 0 for 1 - accuracy
  // or MSE). Caps expected-utility extrapolation at reward -loss_floor.
  std::optional<double> loss_floor;

  // Validates the configuration, converts exceptions and non-finite losses
  // into failed evaluations.
  Evaluation evaluate(const Configuration& config, double fidelity, std::uint64_t seed) const;

  double reward_ceiling() const {
    return loss_floor ? -*loss_floor : std::numeric_limits<double>::infinity();
  }
};

// ---------------------------------------------------------------------------
// Metrics

enum class Metric { balanced_accuracy, mse };

std::string_view to_string(Metric metric);
Metric metric_from_string(std::string_view text);

// balanced_accuracy: predicted and true class indices; mse: values.
double score(Metric metric, std::span<const double> predictions, std::span<const double> labels);
// Probability matrix for balanced_accuracy (arg-max per row), one column for mse.
double score(Metric metric, const Predictions& predictions, std::span<const double> labels);

// Loss minimized by the optimizer: 1 - balanced accuracy, or MSE.
double metric_loss(Metric metric, double metric_value);

// ---------------------------------------------------------------------------
// Synthetic benchmarks

struct ConditionalQuadraticParams {
  std::vector<std::string> arms;
  std::vector<double> offsets;
  std::vector<std::pair<double, double>> optima;
  double noise_sigma = 0.0;
  double lo = -5.0;
  double hi = 5.0;
};

struct SeparableQuadraticParams {
  std::vector<double> y_optimum;
  std::vector<double> z_optimum;
  double lo = -5.0;
  double hi = 5.0;
};

// loss(arm_i, u, v) = b_i + (u - u_i*)^2 + (v - v_i*)^2 (+ N(0, sigma^2) noise).
// `arm` is the algorithm variable; u is a feature-group and v a hyper-group
// variable so that every coarse plan applies.
Objective make_conditional_quadratic(const ConditionalQuadraticParams& params, std::string name = "conditional_quadratic");

// Branin over x1 in [-5, 10], x2 in [0, 15]; minimum 0.397887.
Objective make_branin(double shift = 0.0);
double branin(double x1, double x2);

// sum (y - y*)^2 + sum (z - z*)^2 with y in the feature and z in the hyper group.
Objective make_separable_quadratic(const SeparableQuadraticParams& params, std::string name = "separable_quadratic");

enum class SyntheticKind { conditional_quadratic, branin, separable_quadratic };

struct SyntheticParams {
  ConditionalQuadraticParams conditional;
  SeparableQuadraticParams separable;
  double branin_shift = 0.0;
};

Objective make_synthetic_objective(SyntheticKind kind, const SyntheticParams& params);

// Built-in named benchmarks (conditional_quadratic_3, branin, ...).
std::vector<std::string> benchmark_names();
Objective make_benchmark(const std::string& name);

// The six-task synthetic suite used for plan comparison.
std::vector<std::string> synthetic_suite();

// Objective delegating to an external command: the configuration is written
// as one JSON object to its standard input, it must print {"loss": x}.
Objective make_command_objective(SearchSpace space, std::string command);

}  // namespace volcano
