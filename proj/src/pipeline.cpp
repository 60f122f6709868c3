#include "volcano/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "volcano/errors.hpp"

namespace volcano {

namespace {

constexpr std::string_view kPipelineSpace = R"json({
  "name": "pipeline_small",
  "algorithm": "algo",
  "variables": [
    {"name": "scaler", "type": "cat", "choices": ["none", "standardize", "minmax"], "default": "standardize", "group": "feature"},
    {"name": "feature_selector", "type": "cat", "choices": ["none", "variance_top_p"], "default": "none", "group": "feature"},
    {"name": "selector.p", "type": "real", "lo": 0.1, "hi": 1.0, "default": 0.5, "group": "feature",
     "condition": {"parent": "feature_selector", "equals": "variance_top_p"}},
    {"name": "algo", "type": "cat", "choices": ["knn", "tree", "linear"], "default": "knn"},
    {"name": "knn.k", "type": "int", "lo": 1, "hi": 25, "default": 5, "condition": {"parent": "algo", "equals": "knn"}},
    {"name": "knn.weighting", "type": "cat", "choices": ["uniform", "distance"], "default": "uniform",
     "condition": {"parent": "algo", "equals": "knn"}},
    {"name": "knn.metric", "type": "cat", "choices": ["euclidean", "manhattan"], "default": "euclidean",
     "condition": {"parent": "algo", "equals": "knn"}},
    {"name": "tree.max_depth", "type": "int", "lo": 1, "hi": 12, "default": 6, "condition": {"parent": "algo", "equals": "tree"}},
    {"name": "tree.min_split", "type": "int", "lo": 2, "hi": 20, "default": 2, "condition": {"parent": "algo", "equals": "tree"}},
    {"name": "tree.min_leaf", "type": "int", "lo": 1, "hi": 10, "default": 1, "condition": {"parent": "algo", "equals": "tree"}},
    {"name": "linear.reg_strength", "type": "real", "lo": 0.0001, "hi": 100.0, "log": true, "default": 1.0,
     "condition": {"parent": "algo", "equals": "linear"}}
  ]
}
)json";

const std::string& label_of(const Configuration& c, const char* name) { return std::get<std::string>(c.at(name)); }
std::int64_t int_of(const Configuration& c, const char* name) { return std::get<std::int64_t>(c.at(name)); }
double real_of(const Configuration& c, const char* name) { return std::get<double>(c.at(name)); }

// ---------------------------------------------------------------------------
// k-nearest neighbours

class KnnLearner final : public Learner {
 public:
  KnnLearner(Eigen::MatrixXd x, std::vector<double> y, std::size_t classes, std::size_t k, bool distance_weighted,
             bool manhattan)
      : x_(std::move(x)), y_(std::move(y)), classes_(classes), k_(std::min(k, y_.size())),
        distance_weighted_(distance_weighted), manhattan_(manhattan) {}

  Predictions predict(const Eigen::MatrixXd& q) const override {
    const std::size_t width = classes_ == 0 ? 1 : classes_;
    Predictions out{static_cast<std::size_t>(q.rows()), width, std::vector<double>(q.rows() * width, 0.0)};
    std::vector<std::pair<double, std::size_t>> dist(y_.size());
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
      for (std::size_t i = 0; i < y_.size(); ++i) {
        const auto diff = x_.row(static_cast<Eigen::Index>(i)) - q.row(r);
        dist[i] = {manhattan_ ? diff.cwiseAbs().sum() : diff.norm(), i};
      }
      std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());
      double total = 0.0;
      for (std::size_t j = 0; j < k_; ++j) {
        const double w = distance_weighted_ ? 1.0 / (dist[j].first + 1e-12) : 1.0;
        total += w;
        const double label = y_[dist[j].second];
        if (classes_ == 0)
          out.at(static_cast<std::size_t>(r), 0) += w * label;
        else
          out.at(static_cast<std::size_t>(r), static_cast<std::size_t>(label)) += w;
      }
      for (std::size_t c = 0; c < width; ++c) out.at(static_cast<std::size_t>(r), c) /= total;
    }
    return out;
  }

 private:
  Eigen::MatrixXd x_;
  std::vector<double> y_;
  std::size_t classes_;
  std::size_t k_;
  bool distance_weighted_;
  bool manhattan_;
};

// ---------------------------------------------------------------------------
// CART-style tree (gini for classification, variance for regression)

class TreeLearner final : public Learner {
 public:
  TreeLearner(const Eigen::MatrixXd& x, const std::vector<double>& y, std::size_t classes, std::size_t max_depth,
              std::size_t min_split, std::size_t min_leaf)
      : classes_(classes), max_depth_(max_depth), min_split_(min_split), min_leaf_(min_leaf) {
    std::vector<std::size_t> rows(y.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    grow(x, y, rows, 0);
  }

  Predictions predict(const Eigen::MatrixXd& q) const override {
    const std::size_t width = classes_ == 0 ? 1 : classes_;
    Predictions out{static_cast<std::size_t>(q.rows()), width, {}};
    out.values.reserve(out.rows * width);
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
      std::size_t node = 0;
      while (nodes_[node].feature >= 0)
        node = q(r, nodes_[node].feature) <= nodes_[node].threshold ? nodes_[node].left : nodes_[node].right;
      out.values.insert(out.values.end(), nodes_[node].value.begin(), nodes_[node].value.end());
    }
    return out;
  }

 private:
  struct Node {
    Eigen::Index feature = -1;
    double threshold = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
    std::vector<double> value;
  };

  std::vector<double> leaf_value(const std::vector<double>& y, const std::vector<std::size_t>& rows) const {
    if (classes_ == 0) {
      double sum = 0.0;
      for (auto i : rows) sum += y[i];
      return {sum / static_cast<double>(rows.size())};
    }
    std::vector<double> dist(classes_, 0.0);
    for (auto i : rows) dist[static_cast<std::size_t>(y[i])] += 1.0;
    for (auto& p : dist) p /= static_cast<double>(rows.size());
    return dist;
  }

  // Weighted child impurity; lower is better.
  struct Split {
    Eigen::Index feature = -1;
    double threshold = 0.0;
    double impurity = std::numeric_limits<double>::infinity();
  };

  Split best_split(const Eigen::MatrixXd& x, const std::vector<double>& y, const std::vector<std::size_t>& rows) const {
    Split best;
    const std::size_t n = rows.size();
    std::vector<std::size_t> order(rows);
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x(static_cast<Eigen::Index>(a), f) < x(static_cast<Eigen::Index>(b), f) ||
               (x(static_cast<Eigen::Index>(a), f) == x(static_cast<Eigen::Index>(b), f) && a < b);
      });
      if (classes_ == 0) {
        double total = 0.0, total_sq = 0.0;
        for (auto i : order) {
          total += y[i];
          total_sq += y[i] * y[i];
        }
        double left = 0.0, left_sq = 0.0;
        for (std::size_t j = 0; j + 1 < n; ++j) {
          left += y[order[j]];
          left_sq += y[order[j]] * y[order[j]];
          const auto nl = static_cast<double>(j + 1);
          const auto nr = static_cast<double>(n - j - 1);
          const double xa = x(static_cast<Eigen::Index>(order[j]), f);
          const double xb = x(static_cast<Eigen::Index>(order[j + 1]), f);
          if (xa == xb || j + 1 < min_leaf_ || n - j - 1 < min_leaf_) continue;
          const double sse_l = left_sq - left * left / nl;
          const double sse_r = (total_sq - left_sq) - (total - left) * (total - left) / nr;
          const double impurity = sse_l + sse_r;
          if (impurity < best.impurity - 1e-12) best = {f, 0.5 * (xa + xb), impurity};
        }
      } else {
        std::vector<double> left(classes_, 0.0), total(classes_, 0.0);
        for (auto i : order) total[static_cast<std::size_t>(y[i])] += 1.0;
        for (std::size_t j = 0; j + 1 < n; ++j) {
          left[static_cast<std::size_t>(y[order[j]])] += 1.0;
          const double xa = x(static_cast<Eigen::Index>(order[j]), f);
          const double xb = x(static_cast<Eigen::Index>(order[j + 1]), f);
          if (xa == xb || j + 1 < min_leaf_ || n - j - 1 < min_leaf_) continue;
          const auto nl = static_cast<double>(j + 1);
          const auto nr = static_cast<double>(n - j - 1);
          double gl = 1.0, gr = 1.0;
          for (std::size_t c = 0; c < classes_; ++c) {
            const double pl = left[c] / nl;
            const double pr = (total[c] - left[c]) / nr;
            gl -= pl * pl;
            gr -= pr * pr;
          }
          const double impurity = nl * gl + nr * gr;
          if (impurity < best.impurity - 1e-12) best = {f, 0.5 * (xa + xb), impurity};
        }
      }
    }
    return best;
  }

  std::size_t grow(const Eigen::MatrixXd& x, const std::vector<double>& y, const std::vector<std::size_t>& rows,
                   std::size_t depth) {
    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{-1, 0.0, 0, 0, leaf_value(y, rows)});
    bool pure = true;
    for (auto i : rows)
      if (y[i] != y[rows.front()]) pure = false;
    if (pure || depth >= max_depth_ || rows.size() < min_split_) return id;
    const Split split = best_split(x, y, rows);
    if (split.feature < 0) return id;
    std::vector<std::size_t> left, right;
    for (auto i : rows) (x(static_cast<Eigen::Index>(i), split.feature) <= split.threshold ? left : right).push_back(i);
    nodes_[id].feature = split.feature;
    nodes_[id].threshold = split.threshold;
    const auto l = grow(x, y, left, depth + 1);
    const auto r = grow(x, y, right, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  std::size_t classes_;
  std::size_t max_depth_;
  std::size_t min_split_;
  std::size_t min_leaf_;
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Ridge / multinomial logistic regression by full-batch gradient descent.
// Penalty (reg / 2n) * |w|^2 on the non-bias weights.

class LinearLearner final : public Learner {
 public:
  LinearLearner(const Eigen::MatrixXd& x, const std::vector<double>& y, std::size_t classes, double reg)
      : classes_(classes) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    Eigen::MatrixXd xt(n, d + 1);
    xt << x, Eigen::VectorXd::Ones(n);
    const double mean_sq = xt.rowwise().squaredNorm().mean();
    const double lambda = reg / static_cast<double>(n);
    Eigen::VectorXd penalty_mask = Eigen::VectorXd::Ones(d + 1);
    penalty_mask(d) = 0.0;
    if (classes_ == 0) {
      Eigen::VectorXd target = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
      Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
      const double lr = 1.0 / (mean_sq + lambda);
      for (int it = 0; it < 500; ++it) {
        const Eigen::VectorXd residual = xt * w - target;
        Eigen::VectorXd grad = xt.transpose() * residual / static_cast<double>(n);
        grad += lambda * penalty_mask.cwiseProduct(w);
        w -= lr * grad;
      }
      weights_ = w;
    } else {
      const auto c = static_cast<Eigen::Index>(classes_);
      Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, c);
      for (Eigen::Index i = 0; i < n; ++i) onehot(i, static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)])) = 1.0;
      Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d + 1, c);
      const double lr = 1.0 / (0.5 * mean_sq + lambda);
      for (int it = 0; it < 300; ++it) {
        Eigen::MatrixXd p = softmax(xt * w);
        Eigen::MatrixXd grad = xt.transpose() * (p - onehot) / static_cast<double>(n);
        grad += lambda * (penalty_mask.asDiagonal() * w);
        w -= lr * grad;
      }
      weights_ = w;
    }
  }

  Predictions predict(const Eigen::MatrixXd& q) const override {
    Eigen::MatrixXd qt(q.rows(), q.cols() + 1);
    qt << q, Eigen::VectorXd::Ones(q.rows());
    Eigen::MatrixXd out = qt * weights_;
    if (classes_ > 0) out = softmax(out);
    Predictions p{static_cast<std::size_t>(out.rows()), static_cast<std::size_t>(out.cols()), {}};
    p.values.reserve(p.rows * p.cols);
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      for (Eigen::Index c = 0; c < out.cols(); ++c) p.values.push_back(out(r, c));
    return p;
  }

 private:
  static Eigen::MatrixXd softmax(Eigen::MatrixXd z) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      z.row(r).array() -= z.row(r).maxCoeff();
      z.row(r) = z.row(r).array().exp();
      z.row(r) /= z.row(r).sum();
    }
    return z;
  }

  std::size_t classes_;
  Eigen::MatrixXd weights_;
};

struct PipelineState {
  Splits splits;
  Metric metric;
  std::size_t classes;
  std::vector<std::size_t> train_order;  // fixed shuffle for fidelity prefixes
};

}  // namespace

std::string_view pipeline_space_document() { return kPipelineSpace; }

SearchSpace pipeline_space() { return parse_space(kPipelineSpace); }

Predictions FittedPipeline::predict(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd scaled = (x.rowwise() - shift_).array().rowwise() / scale_.array();
  Eigen::MatrixXd selected(scaled.rows(), static_cast<Eigen::Index>(kept_.size()));
  for (std::size_t j = 0; j < kept_.size(); ++j) selected.col(static_cast<Eigen::Index>(j)) = scaled.col(kept_[j]);
  return learner_->predict(selected);
}

FittedPipeline fit_pipeline(const Configuration& config, const Dataset& train, std::size_t classes) {
  if (train.rows() == 0) throw DatasetError("empty training set");
  FittedPipeline fp;
  const Eigen::Index d = train.x.cols();
  const auto& scaler = label_of(config, "scaler");
  fp.shift_ = Eigen::RowVectorXd::Zero(d);
  fp.scale_ = Eigen::RowVectorXd::Ones(d);
  if (scaler == "standardize") {
    fp.shift_ = train.x.colwise().mean();
    const Eigen::RowVectorXd var = (train.x.rowwise() - fp.shift_).array().square().colwise().mean();
    for (Eigen::Index j = 0; j < d; ++j) fp.scale_(j) = var(j) > 1e-24 ? std::sqrt(var(j)) : 1.0;
  } else if (scaler == "minmax") {
    fp.shift_ = train.x.colwise().minCoeff();
    const Eigen::RowVectorXd range = train.x.colwise().maxCoeff() - fp.shift_;
    for (Eigen::Index j = 0; j < d; ++j) fp.scale_(j) = range(j) > 1e-12 ? range(j) : 1.0;
  }
  const Eigen::MatrixXd scaled = (train.x.rowwise() - fp.shift_).array().rowwise() / fp.scale_.array();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::size_t keep = order.size();
  if (label_of(config, "feature_selector") == "variance_top_p") {
    const Eigen::RowVectorXd var =
        (scaled.rowwise() - scaled.colwise().mean()).array().square().colwise().mean();
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return var(a) > var(b); });
    keep = static_cast<std::size_t>(std::ceil(real_of(config, "selector.p") * static_cast<double>(d) - 1e-9));
    keep = std::min(keep, order.size());
  }
  if (keep == 0) throw DatasetError("no feature survives selection");
  fp.kept_.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(fp.kept_.begin(), fp.kept_.end());
  Eigen::MatrixXd selected(scaled.rows(), static_cast<Eigen::Index>(keep));
  for (std::size_t j = 0; j < keep; ++j) selected.col(static_cast<Eigen::Index>(j)) = scaled.col(fp.kept_[j]);

  if (train.task == TaskKind::classification && classes == 0) classes = train.class_labels.size();
  if (train.task == TaskKind::regression) classes = 0;
  const auto& algo = label_of(config, "algo");
  if (algo == "knn") {
    fp.learner_ = std::make_shared<KnnLearner>(selected, train.y, classes, static_cast<std::size_t>(int_of(config, "knn.k")),
                                               label_of(config, "knn.weighting") == "distance",
                                               label_of(config, "knn.metric") == "manhattan");
  } else if (algo == "tree") {
    fp.learner_ = std::make_shared<TreeLearner>(selected, train.y, classes,
                                                static_cast<std::size_t>(int_of(config, "tree.max_depth")),
                                                static_cast<std::size_t>(int_of(config, "tree.min_split")),
                                                static_cast<std::size_t>(int_of(config, "tree.min_leaf")));
  } else if (algo == "linear") {
    fp.learner_ = std::make_shared<LinearLearner>(selected, train.y, classes, real_of(config, "linear.reg_strength"));
  } else {
    throw DomainError("unknown algorithm '" + algo + "'");
  }
  return fp;
}

Objective make_pipeline_objective(const Dataset& dataset, Metric metric, std::uint64_t split_seed) {
  if ((metric == Metric::balanced_accuracy) != (dataset.task == TaskKind::classification))
    throw ConfigError(std::string("metric ") + std::string(to_string(metric)) + " does not match the dataset task");
  auto state = std::make_shared<PipelineState>();
  state->splits = split_train_valid_test(dataset, split_seed);
  state->metric = metric;
  state->classes = dataset.class_count();
  state->train_order.resize(state->splits.train.rows());
  std::iota(state->train_order.begin(), state->train_order.end(), std::size_t{0});
  Rng rng(mix_seed(split_seed, 0xf1de));
  for (std::size_t i = state->train_order.size(); i > 1; --i)
    std::swap(state->train_order[i - 1], state->train_order[rng.index(i)]);

  Objective obj;
  obj.name = "pipeline";
  obj.space = pipeline_space();
  obj.loss_floor = 0.0;
  obj.eval_fn = [state](const Configuration& config, double fidelity, std::uint64_t) {
    Evaluation e;
    const Dataset* train = &state->splits.train;
    Dataset prefix;
    if (fidelity < 1.0) {
      auto n = static_cast<std::size_t>(std::ceil(fidelity * static_cast<double>(train->rows())));
      n = std::clamp<std::size_t>(n, 2, train->rows());
      std::vector<std::size_t> rows(state->train_order.begin(), state->train_order.begin() + static_cast<std::ptrdiff_t>(n));
      prefix = train->take(rows);
      train = &prefix;
    }
    try {
      const auto fitted = fit_pipeline(config, *train, state->classes);
      auto predictions = fitted.predict(state->splits.valid.x);
      e.loss = metric_loss(state->metric, score(state->metric, predictions, state->splits.valid.y));
      e.predictions = std::move(predictions);
    } catch (const DatasetError& err) {
      e.status = EvalStatus::failed;
      e.message = err.what();
    }
    return e;
  };
  return obj;
}

Predictions holdout_predictions(const Dataset& dataset, const Configuration& config, std::uint64_t split_seed) {
  const auto splits = split_train_valid_test(dataset, split_seed);
  const Dataset search = concat_rows(splits.train, splits.valid);
  return fit_pipeline(config, search, dataset.class_count()).predict(splits.test.x);
}

std::vector<double> holdout_labels(const Dataset& dataset, std::uint64_t split_seed) {
  return split_train_valid_test(dataset, split_seed).test.y;
}

std::vector<double> validation_labels(const Dataset& dataset, std::uint64_t split_seed) {
  return split_train_valid_test(dataset, split_seed).valid.y;
}

double holdout_score(const Dataset& dataset, Metric metric, const Configuration& config, std::uint64_t split_seed) {
  return score(metric, holdout_predictions(dataset, config, split_seed), holdout_labels(dataset, split_seed));
}

}  // namespace volcano
