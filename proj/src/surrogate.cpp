#include "volcano/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "volcano/errors.hpp"

namespace volcano {

namespace {

constexpr double kLengthscales[] = {0.05, 0.1, 0.2, 0.5, 1.0, 2.0};
constexpr double kSignalVariances[] = {0.25, 1.0, 4.0};

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::VectorXd an = a.rowwise().squaredNorm();
  const Eigen::VectorXd bn = b.rowwise().squaredNorm();
  Eigen::MatrixXd d = -2.0 * a * b.transpose();
  d.colwise() += an;
  d.rowwise() += bn.transpose();
  return d.cwiseMax(0.0);
}

// Cholesky of k + noise*I, escalating jitter up to 1e-4. False on failure.
bool factorize(const Eigen::MatrixXd& k, double noise, Eigen::LLT<Eigen::MatrixXd>& llt, double& used_noise) {
  const Eigen::Index n = k.rows();
  double jitter = 0.0;
  for (;;) {
    Eigen::MatrixXd a = k;
    a.diagonal().array() += noise + jitter;
    llt.compute(a);
    if (llt.info() == Eigen::Success) {
      used_noise = noise + jitter;
      return true;
    }
    if (jitter >= 1e-4 || n == 0) return false;
    jitter = jitter == 0.0 ? 1e-10 : std::min(jitter * 10.0, 1e-4);
  }
}

}  // namespace

Prediction Surrogate::predict(std::span<const double> x) const {
  if (x.size() != width()) throw FitError("query width " + std::to_string(x.size()) + " does not match model width " +
                                          std::to_string(width()));
  Eigen::MatrixXd row(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = x[j];
  return predict_batch(row).front();
}

GPModel GPModel::fit(const Eigen::MatrixXd& inputs, std::span<const double> targets, double noise_floor) {
  return fit(inputs, targets, noise_floor, GpHyper{0.0, 0.0});
}

GPModel GPModel::fit(const Eigen::MatrixXd& inputs, std::span<const double> targets, double noise_floor,
                     GpHyper hyper) {
  const auto n = static_cast<Eigen::Index>(targets.size());
  if (n == 0) throw FitError("GP needs at least one training point");
  if (inputs.rows() != n) throw FitError("input and target counts differ");
  if (!inputs.allFinite()) throw FitError("non-finite GP input");
  for (double t : targets)
    if (!std::isfinite(t)) throw FitError("non-finite GP target");

  GPModel m;
  m.x_ = inputs;
  m.y_.resize(n);
  double sum = 0.0;
  for (double t : targets) sum += t;
  m.y_mean_ = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double t : targets) ss += (t - m.y_mean_) * (t - m.y_mean_);
  const double sd = std::sqrt(ss / static_cast<double>(n));
  m.y_scale_ = sd >= 1e-12 ? sd : 1.0;
  for (Eigen::Index i = 0; i < n; ++i) m.y_(i) = (targets[static_cast<std::size_t>(i)] - m.y_mean_) / m.y_scale_;
  const double noise = std::max(noise_floor, 1e-6);

  const Eigen::MatrixXd d2 = squared_distances(inputs, inputs);
  const double log2pi = std::log(2.0 * std::numbers::pi);
  auto try_fit = [&](GpHyper h, GPModel& out) {
    const Eigen::MatrixXd k = h.signal_variance * (-0.5 / (h.lengthscale * h.lengthscale) * d2).array().exp();
    Eigen::LLT<Eigen::MatrixXd> llt;
    double used = noise;
    if (!factorize(k, noise, llt, used)) return false;
    Eigen::VectorXd alpha = llt.solve(out.y_);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double lml = -0.5 * out.y_.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(n) * log2pi;
    if (!std::isfinite(lml)) return false;
    out.hyper_ = h;
    out.noise_ = used;
    out.chol_ = std::move(llt);
    out.alpha_ = std::move(alpha);
    out.lml_ = lml;
    return true;
  };

  if (hyper.lengthscale > 0.0) {
    if (!try_fit(hyper, m)) throw FitError("kernel factorization failed after jitter 1e-4");
    return m;
  }
  bool any = false;
  GPModel best = m;
  for (double l : kLengthscales) {
    for (double s2 : kSignalVariances) {
      GPModel cand = m;
      if (!try_fit({l, s2}, cand)) continue;
      if (!any || cand.lml_ > best.lml_) {
        best = std::move(cand);
        any = true;
      }
    }
  }
  if (!any) throw FitError("kernel factorization failed after jitter 1e-4");
  return best;
}

Eigen::MatrixXd GPModel::cross_kernel(const Eigen::MatrixXd& x) const {
  if (x.cols() != x_.cols())
    throw FitError("query width " + std::to_string(x.cols()) + " does not match model width " +
                   std::to_string(x_.cols()));
  const double l2 = hyper_.lengthscale * hyper_.lengthscale;
  return hyper_.signal_variance * (-0.5 / l2 * squared_distances(x, x_)).array().exp();
}

std::vector<Prediction> GPModel::predict_batch(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd ks = cross_kernel(x);  // m x n
  const Eigen::VectorXd mean = ks * alpha_;
  const Eigen::MatrixXd v = chol_.matrixL().solve(ks.transpose());
  const Eigen::VectorXd reduction = v.colwise().squaredNorm().transpose();
  std::vector<Prediction> out(static_cast<std::size_t>(x.rows()));
  const double s2 = y_scale_ * y_scale_;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = {mean(i) * y_scale_ + y_mean_,
                                        std::max(0.0, hyper_.signal_variance - reduction(i)) * s2};
  }
  return out;
}

void GPModel::posterior(const Eigen::MatrixXd& x, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) const {
  const Eigen::MatrixXd ks = cross_kernel(x);
  mean = (ks * alpha_).array() * y_scale_ + y_mean_;
  const Eigen::MatrixXd v = chol_.matrixL().solve(ks.transpose());
  const double l2 = hyper_.lengthscale * hyper_.lengthscale;
  const Eigen::MatrixXd kss = hyper_.signal_variance * (-0.5 / l2 * squared_distances(x, x)).array().exp();
  cov = (kss - v.transpose() * v) * (y_scale_ * y_scale_);
}

void GPModel::leave_one_out(Eigen::VectorXd& mean, Eigen::VectorXd& variance) const {
  const auto n = x_.rows();
  const Eigen::MatrixXd kinv = chol_.solve(Eigen::MatrixXd::Identity(n, n));
  mean.resize(n);
  variance.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = kinv(i, i);
    mean(i) = (y_(i) - alpha_(i) / d) * y_scale_ + y_mean_;
    variance(i) = y_scale_ * y_scale_ / d;
  }
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double expected_improvement(const Prediction& pred, double best_loss) {
  const double sigma = std::sqrt(std::max(0.0, pred.variance));
  if (sigma < 1e-12) return std::max(0.0, best_loss - pred.mean);
  const double g = (best_loss - pred.mean) / sigma;
  return std::max(0.0, sigma * (g * normal_cdf(g) + normal_pdf(g)));
}

SuggestDetail suggest_detailed(const SearchSpace& space, const Surrogate& model, std::span<const Observation> history,
                               Rng& rng) {
  SuggestDetail out;
  out.candidates = sample(space, rng, kRandomCandidates);

  std::vector<std::size_t> ok;
  for (std::size_t i = 0; i < history.size(); ++i)
    if (history[i].ok()) ok.push_back(i);
  std::stable_sort(ok.begin(), ok.end(),
                   [&](std::size_t a, std::size_t b) { return *history[a].loss < *history[b].loss; });
  double best_loss = std::numeric_limits<double>::infinity();
  if (!ok.empty()) best_loss = *history[ok.front()].loss;
  for (std::size_t s = 0; s < std::min(kLocalSeeds, ok.size()); ++s) {
    auto nb = neighbors(space, history[ok[s]].config, rng, kNeighborsPerSeed);
    out.candidates.insert(out.candidates.end(), std::make_move_iterator(nb.begin()), std::make_move_iterator(nb.end()));
  }

  Eigen::MatrixXd x(static_cast<Eigen::Index>(out.candidates.size()), static_cast<Eigen::Index>(space.encoded_width()));
  std::vector<double> row(space.encoded_width());
  for (std::size_t i = 0; i < out.candidates.size(); ++i) {
    encode_into(space, out.candidates[i], row);
    for (std::size_t j = 0; j < row.size(); ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  const auto preds = model.predict_batch(x);
  // Without an incumbent, rank by mean: EI against +inf is not informative.
  out.ei_values.resize(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i)
    out.ei_values[i] = std::isfinite(best_loss) ? expected_improvement(preds[i], best_loss) : -preds[i].mean;

  std::set<Configuration> seen;
  for (const auto& o : history) seen.insert(o.config);
  std::vector<std::size_t> order(out.candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out.ei_values[a] > out.ei_values[b]; });
  for (std::size_t i : order) {
    if (seen.count(out.candidates[i])) continue;
    out.index = i;
    out.config = out.candidates[i];
    out.ei = out.ei_values[i];
    return out;
  }
  out.fallback = true;
  out.index = out.candidates.size();
  out.config = sample_one(space, rng);
  out.ei = 0.0;
  return out;
}

Configuration suggest(const SearchSpace& space, const Surrogate& model, std::span<const Observation> history,
                      Rng& rng) {
  return suggest_detailed(space, model, history, rng).config;
}

}  // namespace volcano
