#include "volcano/meta.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "volcano/errors.hpp"
#include "volcano/history.hpp"

namespace volcano {

using json = nlohmann::json;

std::vector<double> extract_dataset_features(const Dataset& dataset) {
  const auto rows = static_cast<double>(std::max<std::size_t>(dataset.rows(), 1));
  const std::size_t columns = dataset.column_kinds.empty() ? dataset.features() : dataset.column_kinds.size();
  const std::size_t categorical = static_cast<std::size_t>(
      std::count(dataset.column_kinds.begin(), dataset.column_kinds.end(), FeatureKind::categorical));

  double classes = 0.0;
  double ratio = 1.0;
  if (dataset.task == TaskKind::classification) {
    std::map<long, std::size_t> counts;
    for (double label : dataset.y) ++counts[std::lround(label)];
    classes = static_cast<double>(dataset.class_count());
    if (!counts.empty()) {
      std::size_t lo = std::numeric_limits<std::size_t>::max(), hi = 0;
      for (const auto& [label, n] : counts) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
      }
      ratio = static_cast<double>(hi) / static_cast<double>(lo);
    }
  }
  return {std::log10(rows), std::log10(static_cast<double>(std::max<std::size_t>(columns, 1))), classes, ratio,
          columns == 0 ? 0.0 : static_cast<double>(categorical) / static_cast<double>(columns)};
}

std::size_t ranking_loss(std::span<const double> predicted, std::span<const double> targets) {
  if (predicted.size() != targets.size()) throw MetaError("ranking_loss: size mismatch");
  std::size_t count = 0;
  const std::size_t n = targets.size();
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k)
      if ((predicted[j] < predicted[k]) != (targets[j] < targets[k])) ++count;
  return count;
}

std::size_t ranking_loss(const Surrogate& model, const Eigen::MatrixXd& inputs, std::span<const double> targets) {
  const auto preds = model.predict_batch(inputs);
  std::vector<double> means(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) means[i] = preds[i].mean;
  return ranking_loss(means, targets);
}

// ---------------------------------------------------------------------------
// RGPE

namespace {

Eigen::MatrixXd sampling_factor(const Eigen::MatrixXd& cov) {
  const Eigen::Index n = cov.rows();
  const double scale = std::max(1e-12, cov.diagonal().cwiseAbs().maxCoeff());
  for (double jitter = 1e-10; jitter <= 1e-2; jitter *= 10.0) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov + jitter * scale * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  // Fall back to independent marginals.
  return cov.diagonal().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace

std::vector<double> rgpe_weights(std::span<const GPModel* const> base, const GPModel& target,
                                 std::span<const double> targets, std::size_t samples, Rng& rng) {
  const std::size_t n = targets.size();
  if (n < kRgpeMinTargets)
    throw MetaError("rgpe weights need at least " + std::to_string(kRgpeMinTargets) + " target points, got " +
                    std::to_string(n));
  if (samples == 0) throw MetaError("rgpe weights need at least one sample");
  if (target.size() != n) throw MetaError("target model and target history differ in size");
  const std::size_t models = base.size() + 1;
  std::vector<double> weights(models, 0.0);
  if (base.empty()) {
    weights.back() = 1.0;
    return weights;
  }

  const Eigen::MatrixXd& x = target.inputs();
  std::vector<Eigen::VectorXd> means(base.size());
  std::vector<Eigen::MatrixXd> factors(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    Eigen::MatrixXd cov;
    base[i]->posterior(x, means[i], cov);
    factors[i] = sampling_factor(cov);
  }
  Eigen::VectorXd loo_mean, loo_var;
  target.leave_one_out(loo_mean, loo_var);
  const Eigen::VectorXd loo_sd = loo_var.cwiseMax(0.0).cwiseSqrt();

  std::vector<std::size_t> wins(models, 0);
  std::vector<double> draw(n);
  std::vector<std::size_t> losses(models);
  Eigen::VectorXd z(static_cast<Eigen::Index>(n));
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t i = 0; i < base.size(); ++i) {
      for (Eigen::Index r = 0; r < z.size(); ++r) z(r) = rng.normal();
      const Eigen::VectorXd f = means[i] + factors[i] * z;
      for (std::size_t r = 0; r < n; ++r) draw[r] = f(static_cast<Eigen::Index>(r));
      losses[i] = ranking_loss(draw, targets);
    }
    for (std::size_t r = 0; r < n; ++r) {
      const auto e = static_cast<Eigen::Index>(r);
      draw[r] = loo_mean(e) + loo_sd(e) * rng.normal();
    }
    losses.back() = ranking_loss(draw, targets);

    const std::size_t best = *std::min_element(losses.begin(), losses.end());
    std::vector<std::size_t> tied;
    for (std::size_t i = 0; i < models; ++i)
      if (losses[i] == best) tied.push_back(i);
    ++wins[tied[tied.size() == 1 ? 0 : rng.index(tied.size())]];
  }
  for (std::size_t i = 0; i < models; ++i) weights[i] = static_cast<double>(wins[i]) / static_cast<double>(samples);
  return weights;
}

RgpeEnsemble::RgpeEnsemble(std::vector<RgpeComponent> components, std::vector<double> weights)
    : components_(std::move(components)), weights_(std::move(weights)) {
  if (components_.empty()) throw MetaError("rgpe ensemble needs at least one model");
  if (weights_.size() != components_.size()) throw MetaError("rgpe ensemble needs one weight per model");
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw MetaError("rgpe weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw MetaError("rgpe weights must sum to 1");
  const std::size_t w = components_.front().model->width();
  for (const auto& c : components_) {
    if (!c.model || c.model->width() != w) throw MetaError("rgpe models must share one input width");
    if (!(c.scale > 0.0)) throw MetaError("rgpe component scale must be positive");
  }
}

std::size_t RgpeEnsemble::width() const { return components_.front().model->width(); }

std::vector<Prediction> RgpeEnsemble::predict_batch(const Eigen::MatrixXd& x) const {
  std::vector<Prediction> out(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < components_.size(); ++i) {
    if (weights_[i] == 0.0) continue;
    const auto& c = components_[i];
    const auto preds = c.model->predict_batch(x);
    for (std::size_t r = 0; r < out.size(); ++r) {
      out[r].mean += weights_[i] * (c.shift + c.scale * preds[r].mean);
      out[r].variance += weights_[i] * c.scale * c.scale * preds[r].variance;
    }
  }
  return out;
}

Prediction rgpe_predict(const RgpeEnsemble& ensemble, std::span<const double> x) { return ensemble.predict(x); }

// ---------------------------------------------------------------------------
// RankNet

RankNetModel::RankNetModel(std::size_t input_width, std::size_t hidden, Rng& rng)
    : inputs_(input_width), hidden_(hidden) {
  if (input_width == 0 || hidden == 0) throw MetaError("ranknet needs positive input and hidden widths");
  params_.resize(hidden * input_width + 2 * hidden + 1);
  for (double& p : params_) p = rng.uniform(-0.1, 0.1);
}

double RankNetModel::score(std::span<const double> input) const {
  if (input.size() != inputs_)
    throw MetaError("ranknet input width " + std::to_string(input.size()) + ", expected " + std::to_string(inputs_));
  const double* w1 = params_.data();
  const double* b1 = w1 + hidden_ * inputs_;
  const double* w2 = b1 + hidden_;
  double r = w2[hidden_];
  for (std::size_t h = 0; h < hidden_; ++h) {
    double a = b1[h];
    for (std::size_t i = 0; i < inputs_; ++i) a += w1[h * inputs_ + i] * input[i];
    r += w2[h] * std::tanh(a);
  }
  return r;
}

double RankNetModel::score_gradient(std::span<const double> input, std::vector<double>& gradient) const {
  if (input.size() != inputs_)
    throw MetaError("ranknet input width " + std::to_string(input.size()) + ", expected " + std::to_string(inputs_));
  gradient.assign(params_.size(), 0.0);
  const double* w1 = params_.data();
  const double* b1 = w1 + hidden_ * inputs_;
  const double* w2 = b1 + hidden_;
  double* g_w1 = gradient.data();
  double* g_b1 = g_w1 + hidden_ * inputs_;
  double* g_w2 = g_b1 + hidden_;
  double r = w2[hidden_];
  g_w2[hidden_] = 1.0;
  for (std::size_t h = 0; h < hidden_; ++h) {
    double a = b1[h];
    for (std::size_t i = 0; i < inputs_; ++i) a += w1[h * inputs_ + i] * input[i];
    const double t = std::tanh(a);
    r += w2[h] * t;
    g_w2[h] = t;
    const double da = w2[h] * (1.0 - t * t);
    g_b1[h] = da;
    for (std::size_t i = 0; i < inputs_; ++i) g_w1[h * inputs_ + i] = da * input[i];
  }
  return r;
}

json to_json(const RankNetModel& model) {
  return json{{"input_width", model.input_width()},
              {"hidden", model.hidden()},
              {"arms", model.arms()},
              {"parameters", model.parameters()}};
}

RankNetModel ranknet_from_json(const json& doc) {
  RankNetModel model;
  std::size_t inputs = 0, hidden = 0;
  std::vector<double> params;
  std::vector<std::string> arms;
  try {
    inputs = doc.at("input_width").get<std::size_t>();
    hidden = doc.at("hidden").get<std::size_t>();
    params = doc.at("parameters").get<std::vector<double>>();
    arms = doc.at("arms").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw MetaError(std::string("malformed ranker: ") + e.what());
  }
  if (params.size() != hidden * inputs + 2 * hidden + 1) throw MetaError("malformed ranker: parameter count");
  Rng unused(0);
  if (inputs > 0 && hidden > 0) model = RankNetModel(inputs, hidden, unused);
  model.parameters() = std::move(params);
  model.set_arms(std::move(arms));
  return model;
}

std::vector<double> arm_encoding(const std::vector<std::string>& vocabulary, const std::string& arm) {
  std::vector<double> out(vocabulary.size(), 0.0);
  const auto it = std::find(vocabulary.begin(), vocabulary.end(), arm);
  if (it != vocabulary.end()) out[static_cast<std::size_t>(it - vocabulary.begin())] = 1.0;
  return out;
}

namespace {

double logistic(double s) { return 1.0 / (1.0 + std::exp(-s)); }

std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Loss of one triple and its derivative with respect to s = r_better - r_worse.
std::pair<double, double> triple_loss(double s, const RankNetConfig& config) {
  if (!std::isfinite(s)) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  const double p = logistic(s);   // sigma(r_b - r_w)
  const double q = 1.0 - p;       // sigma(r_w - r_b)
  const double dp = p * q;        // d p / d s
  double loss = 0.0, grad = 0.0;
  if (config.margin_hi - p > 0.0) {
    loss += config.margin_hi - p;
    grad -= dp;
  }
  if (q - config.margin_lo > 0.0) {
    loss += q - config.margin_lo;
    grad -= dp;
  }
  return {loss, grad};
}

}  // namespace

double ranknet_loss(const RankNetModel& model, std::span<const RankTriple> triples, const RankNetConfig& config) {
  if (triples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& t : triples) {
    const double s = model.score(concat(t.dataset_features, t.better)) - model.score(concat(t.dataset_features, t.worse));
    total += triple_loss(s, config).first;
  }
  return total / static_cast<double>(triples.size());
}

std::vector<double> ranknet_gradient(const RankNetModel& model, std::span<const RankTriple> triples,
                                     const RankNetConfig& config) {
  std::vector<double> out(model.parameters().size(), 0.0);
  if (triples.empty()) return out;
  std::vector<double> gb, gw;
  for (const auto& t : triples) {
    const double rb = model.score_gradient(concat(t.dataset_features, t.better), gb);
    const double rw = model.score_gradient(concat(t.dataset_features, t.worse), gw);
    const double d = triple_loss(rb - rw, config).second;
    if (d == 0.0) continue;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += d * (gb[i] - gw[i]);
  }
  const double inv = 1.0 / static_cast<double>(triples.size());
  for (double& g : out) g *= inv;
  return out;
}

RankNetModel train_ranknet(std::span<const RankTriple> triples, const RankNetConfig& config, Rng& rng) {
  if (triples.empty()) throw MetaError("ranknet training needs at least one triple");
  const std::size_t hd = triples.front().dataset_features.size();
  const std::size_t ha = triples.front().better.size();
  for (const auto& t : triples) {
    if (t.dataset_features.size() != hd || t.better.size() != ha || t.worse.size() != ha)
      throw MetaError("ranknet triples must share feature widths");
    for (const auto* v : {&t.dataset_features, &t.better, &t.worse})
      for (double f : *v)
        if (!std::isfinite(f)) throw MetaError("ranknet triples must have finite features");
  }
  RankNetModel model(hd + ha, config.hidden, rng);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double loss = ranknet_loss(model, triples, config);
    if (!std::isfinite(loss)) throw MetaError("ranknet loss became non-finite at epoch " + std::to_string(epoch));
    const auto grad = ranknet_gradient(model, triples, config);
    auto& p = model.parameters();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= config.lr * grad[i];
  }
  return model;
}

double pairwise_accuracy(const RankNetModel& model, std::span<const RankTriple> triples) {
  if (triples.empty()) return 0.0;
  std::size_t right = 0;
  for (const auto& t : triples)
    if (model.score(concat(t.dataset_features, t.better)) > model.score(concat(t.dataset_features, t.worse))) ++right;
  return static_cast<double>(right) / static_cast<double>(triples.size());
}

std::vector<std::string> select_arms(const RankNetModel& model, std::span<const double> dataset_features,
                                     const std::vector<std::string>& arms, std::size_t k) {
  if (k == 0) throw MetaError("select_arms needs k >= 1");
  const std::vector<double> hd(dataset_features.begin(), dataset_features.end());
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < arms.size(); ++i)
    scored.emplace_back(model.score(concat(hd, arm_encoding(model.arms(), arms[i]))), i);
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(arms[scored[i].second]);
  return out;
}

// ---------------------------------------------------------------------------
// Store

namespace {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MetaError("cannot read '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw MetaError("malformed '" + path.string() + "': " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

}  // namespace

PriorStore load_store(const std::filesystem::path& root) {
  PriorStore store;
  if (!std::filesystem::exists(root)) return store;
  if (!std::filesystem::is_directory(root)) throw MetaError("store '" + root.string() + "' is not a directory");
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    const json meta = read_json_file(dir / "meta.json");
    MetaTask task;
    try {
      task.task_id = meta.at("task_id").get<std::string>();
      task.dataset_features = meta.value("dataset_features", std::vector<double>{});
      if (meta.contains("arm") && !meta.at("arm").is_null()) task.arm = meta.at("arm").get<std::string>();
    } catch (const json::exception& e) {
      throw MetaError("malformed '" + (dir / "meta.json").string() + "': " + e.what());
    }
    try {
      task.history = read_history(dir / "history.jsonl");
    } catch (const ConfigError& e) {
      throw MetaError(std::string("malformed store task: ") + e.what());
    }
    if (task.history.empty()) throw MetaError("store task '" + task.task_id + "' has an empty history");
    if (!store.tasks.empty() && task.dataset_features.size() != store.tasks.front().dataset_features.size())
      throw MetaError("store task '" + task.task_id + "' has a different dataset feature width");
    store.tasks.push_back(std::move(task));
  }
  if (std::filesystem::exists(root / "ranker.json")) store.ranker = ranknet_from_json(read_json_file(root / "ranker.json"));
  return store;
}

void save_task(const std::filesystem::path& root, const MetaTask& task) {
  if (task.task_id.empty() || task.task_id.find('/') != std::string::npos || task.task_id == "." ||
      task.task_id == "..")
    throw MetaError("invalid task id '" + task.task_id + "'");
  if (task.history.empty()) throw MetaError("task '" + task.task_id + "' has an empty history");
  const auto dir = root / task.task_id;
  std::filesystem::create_directories(dir);
  json meta{{"task_id", task.task_id}, {"dataset_features", task.dataset_features}};
  meta["arm"] = task.arm ? json(*task.arm) : json(nullptr);
  write_json_file(dir / "meta.json", meta);
  write_history(dir / "history.jsonl", task.history);
}

void save_ranker(const std::filesystem::path& root, const RankNetModel& model) {
  std::filesystem::create_directories(root);
  write_json_file(root / "ranker.json", to_json(model));
}

TripleSet build_triples(const std::vector<MetaTask>& tasks, const std::string& arm_variable) {
  TripleSet out;
  std::vector<std::map<std::string, double>> bests(tasks.size());
  std::set<std::string> vocabulary;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (const auto& rec : tasks[t].history) {
      const Observation& o = rec.observation;
      if (!o.ok()) continue;
      std::optional<std::string> arm = tasks[t].arm;
      const auto it = o.config.find(arm_variable);
      if (it != o.config.end()) arm = to_string(it->second);
      if (!arm) continue;
      auto [slot, inserted] = bests[t].emplace(*arm, *o.loss);
      if (!inserted) slot->second = std::min(slot->second, *o.loss);
      vocabulary.insert(*arm);
    }
  }
  out.vocabulary.assign(vocabulary.begin(), vocabulary.end());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (bests[t].size() < 2) {
      out.warnings.push_back("task '" + tasks[t].task_id + "' has fewer than two arms; no triples");
      continue;
    }
    for (const auto& [a, la] : bests[t])
      for (const auto& [b, lb] : bests[t])
        if (la < lb)
          out.triples.push_back(
              {tasks[t].dataset_features, arm_encoding(out.vocabulary, a), arm_encoding(out.vocabulary, b)});
  }
  return out;
}

std::string_view to_string(MetaMode mode) {
  return mode == MetaMode::rgpe_joint ? "rgpe_joint" : "ranknet_conditioning";
}

MetaMode meta_mode_from_string(std::string_view text) {
  if (text == "rgpe_joint" || text == "rgpe") return MetaMode::rgpe_joint;
  if (text == "ranknet_conditioning" || text == "ranknet") return MetaMode::ranknet_conditioning;
  throw ConfigError("unknown meta mode '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Attach

namespace {

struct PriorData {
  Eigen::MatrixXd x;
  std::vector<double> y;
};

// Observations of `task` consistent with `fixed`, projected onto `space`.
PriorData prior_data(const MetaTask& task, const SearchSpace& space, const Configuration& fixed) {
  std::vector<std::vector<double>> rows;
  PriorData out;
  for (const auto& rec : task.history) {
    const Observation& o = rec.observation;
    if (!o.ok() || o.fidelity != 1.0) continue;
    bool consistent = true;
    for (const auto& [k, v] : fixed) {
      const auto it = o.config.find(k);
      if (it == o.config.end() || it->second != v) {
        consistent = false;
        break;
      }
    }
    if (!consistent) continue;
    const Configuration part = project(o.config, space);
    if (!space.is_valid(part)) continue;
    rows.push_back(encode(space, part));
    out.y.push_back(*o.loss);
  }
  out.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(space.encoded_width()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) out.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return out;
}

std::pair<double, double> mean_and_scale(const std::vector<double>& y) {
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(y.size()));
  return {mean, sd < 1e-12 ? 1.0 : sd};
}

}  // namespace

SurrogateFactory make_rgpe_factory(std::vector<MetaTask> tasks, std::size_t samples) {
  struct State {
    std::vector<MetaTask> tasks;
    std::size_t samples;
    // Base models per fixed assignment, fitted on standardized targets.
    std::map<Configuration, std::vector<std::shared_ptr<const GPModel>>> cache;
  };
  auto state = std::make_shared<State>(State{std::move(tasks), samples, {}});
  return [state](const SurrogateRequest& req) -> std::unique_ptr<Surrogate> {
    auto [it, fresh] = state->cache.try_emplace(req.fixed);
    if (fresh) {
      for (const auto& task : state->tasks) {
        PriorData data = prior_data(task, req.space, req.fixed);
        if (data.y.empty()) continue;
        const auto [m, s] = mean_and_scale(data.y);
        for (double& v : data.y) v = (v - m) / s;
        it->second.push_back(std::make_shared<const GPModel>(GPModel::fit(data.x, data.y, req.noise_floor)));
      }
    }
    const auto& base = it->second;
    auto target = std::make_shared<const GPModel>(GPModel::fit(req.inputs, req.targets, req.noise_floor));
    if (base.empty()) return std::make_unique<GPModel>(*target);

    // Base models predict standardized losses; map them onto the target's scale.
    std::vector<RgpeComponent> components;
    for (const auto& b : base) components.push_back({b, target->target_mean(), target->target_scale()});
    components.push_back({target, 0.0, 1.0});

    std::vector<double> weights;
    if (req.targets.size() >= kRgpeMinTargets) {
      std::vector<const GPModel*> raw;
      for (const auto& b : base) raw.push_back(b.get());
      weights = rgpe_weights(raw, *target, req.targets, state->samples, req.rng);
    } else {
      weights.assign(components.size(), 1.0 / static_cast<double>(components.size()));
    }
    return std::make_unique<RgpeEnsemble>(std::move(components), std::move(weights));
  };
}

std::size_t attach_meta(Block& root, const PriorStore& store, const MetaAttachOptions& options) {
  if (store.tasks.empty()) return 0;
  std::size_t changed = 0;
  if (options.mode == MetaMode::rgpe_joint) {
    const Configuration pinned = root.fixed_all();
    for (const auto& task : store.tasks)
      for (const auto& rec : task.history) {
        Configuration free;
        bool fits = true;
        for (const auto& [k, v] : rec.observation.config) {
          if (root.space().contains(k))
            free.emplace(k, v);
          else if (!pinned.contains(k))
            fits = false;
        }
        if (!fits || !root.space().is_valid(free))
          throw MetaError("prior task '" + task.task_id + "' does not match the search space");
      }
    const SurrogateFactory factory = make_rgpe_factory(store.tasks, options.samples);
    visit_blocks(root, [&](Block& b) {
      if (auto* joint = dynamic_cast<JointBlock*>(&b)) {
        joint->set_surrogate_factory(factory);
        ++changed;
      }
    });
    return changed;
  }

  if (!store.ranker) throw MetaError("store has no trained ranker");
  const RankNetModel& ranker = *store.ranker;
  if (options.dataset_features.size() + ranker.arms().size() != ranker.input_width())
    throw MetaError("ranker expects " + std::to_string(ranker.input_width() - ranker.arms().size()) +
                    " dataset features, got " + std::to_string(options.dataset_features.size()));
  visit_blocks(root, [&](Block& b) {
    if (auto* cond = dynamic_cast<ConditioningBlock*>(&b)) {
      if (b.pull_count() > 0 || b.initialized()) throw MetaError("ranknet arm selection must precede the first pull");
      cond->restrict_arms(select_arms(ranker, options.dataset_features, cond->arm_values(), options.k));
      ++changed;
    }
  });
  return changed;
}

}  // namespace volcano
