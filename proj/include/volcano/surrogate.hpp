#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "volcano/objective.hpp"
#include "volcano/rng.hpp"
#include "volcano/space.hpp"

namespace volcano {

// Predictive distribution of the loss at one point.
struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

// Anything a joint block can use to score candidates.
class Surrogate {
 public:
  virtual ~Surrogate() = default;
  virtual std::size_t width() const = 0;
  virtual Prediction predict(std::span<const double> x) const;
  // One row per query point.
  virtual std::vector<Prediction> predict_batch(const Eigen::MatrixXd& x) const = 0;
};

struct GpHyper {
  double lengthscale = 1.0;
  double signal_variance = 1.0;
};

// Exact GP regression with an isotropic squared-exponential kernel. Targets
// are centred and scaled internally; every output is in loss units.
class GPModel final : public Surrogate {
 public:
  // Grid search over (lengthscale, signal variance) by log marginal
  // likelihood. Throws FitError on bad input or failed factorization.
  static GPModel fit(const Eigen::MatrixXd& inputs, std::span<const double> targets, double noise_floor);
  // Fixed hyperparameters, no search.
  static GPModel fit(const Eigen::MatrixXd& inputs, std::span<const double> targets, double noise_floor,
                     GpHyper hyper);

  std::size_t width() const override { return static_cast<std::size_t>(x_.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(x_.rows()); }
  std::vector<Prediction> predict_batch(const Eigen::MatrixXd& x) const override;

  // Joint posterior of the latent function at the query rows.
  void posterior(const Eigen::MatrixXd& x, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) const;

  // Closed-form leave-one-out predictive mean and variance at each training point.
  void leave_one_out(Eigen::VectorXd& mean, Eigen::VectorXd& variance) const;

  const GpHyper& hyper() const { return hyper_; }
  double noise_variance() const { return noise_; }
  double log_marginal_likelihood() const { return lml_; }
  double target_mean() const { return y_mean_; }
  double target_scale() const { return y_scale_; }
  // Prior variance of the latent function, in loss units.
  double prior_variance() const { return hyper_.signal_variance * y_scale_ * y_scale_; }
  const Eigen::MatrixXd& inputs() const { return x_; }

 private:
  Eigen::MatrixXd cross_kernel(const Eigen::MatrixXd& x) const;

  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;  // standardized
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  double noise_ = 1e-6;
  GpHyper hyper_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
  double lml_ = 0.0;
};

double normal_pdf(double z);
double normal_cdf(double z);

// EI for minimization against the incumbent `best_loss`.
double expected_improvement(const Prediction& pred, double best_loss);

struct SuggestDetail {
  Configuration config;
  double ei = 0.0;
  // Index into `candidates`, or candidates.size() for the random fallback.
  std::size_t index = 0;
  std::vector<Configuration> candidates;
  std::vector<double> ei_values;
  bool fallback = false;
};

inline constexpr std::size_t kRandomCandidates = 1000;
inline constexpr std::size_t kLocalSeeds = 5;
inline constexpr std::size_t kNeighborsPerSeed = 10;

// EI argmax over random samples plus neighbours of the best observations.
// `history` holds configurations of `space`; none of them is returned again.
SuggestDetail suggest_detailed(const SearchSpace& space, const Surrogate& model, std::span<const Observation> history,
                               Rng& rng);
Configuration suggest(const SearchSpace& space, const Surrogate& model, std::span<const Observation> history,
                      Rng& rng);

}  // namespace volcano
