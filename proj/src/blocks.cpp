#include "volcano/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "volcano/errors.hpp"

namespace volcano {

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::joint:
      return "joint";
    case BlockKind::conditioning:
      return "conditioning";
    case BlockKind::alternating:
      return "alternating";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// RunContext

RunContext::RunContext(Objective objective, Budget budget, std::uint64_t seed)
    : objective_(std::move(objective)), budget_(budget), seed_(seed), start_(std::chrono::steady_clock::now()) {
  if (!(budget_.amount > 0.0)) throw ConfigError("budget must be positive");
}

double RunContext::elapsed_seconds() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

double RunContext::used_units() const {
  if (budget_.kind == Budget::Kind::evaluations) return static_cast<double>(history_.size());
  return elapsed_seconds();
}

double RunContext::remaining_units() const { return budget_.amount - used_units(); }

std::size_t RunContext::evaluate(const Configuration& config, const std::vector<std::string>& block_path,
                                 double fidelity) {
  HistoryRecord rec;
  rec.block_path = block_path;
  Observation& o = rec.observation;
  o.iter = history_.size();
  o.config = config;
  o.fidelity = fidelity;
  const auto t0 = std::chrono::steady_clock::now();
  const Evaluation ev = objective_.evaluate(config, fidelity, mix_seed(seed_, o.iter));
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.status = ev.status;
  if (ev.status == EvalStatus::ok) o.loss = ev.loss;
  if (budget_.kind == Budget::Kind::seconds)
    o.cost_s = dt;
  else
    o.cost_s = objective_.cost_model ? objective_.cost_model(config) : 0.0;
  o.wall_time = std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
  history_.push_back(std::move(rec));
  if (hook_) hook_(history_.back(), ev);
  return history_.size() - 1;
}

// ---------------------------------------------------------------------------
// Block

std::unique_ptr<Surrogate> default_surrogate(const SurrogateRequest& request) {
  return std::make_unique<GPModel>(GPModel::fit(request.inputs, request.targets, request.noise_floor));
}

Block::Block(BlockKind kind, std::vector<std::string> path, SearchSpace space, Configuration fixed,
             SearchSpace context_space, Configuration context, BlockOptions options)
    : kind_(kind), path_(std::move(path)), space_(std::move(space)), fixed_(std::move(fixed)),
      context_space_(std::move(context_space)), context_(std::move(context)), options_(options) {
  if (options_.plays_per_round == 0) throw ConfigError("plays per round must be positive");
  if (options_.smoothing_window == 0 || options_.eui_window == 0) throw ConfigError("windows must be positive");
}

std::string Block::path_string() const {
  std::string out;
  for (const auto& p : path_) {
    if (!out.empty()) out += '/';
    out += p;
  }
  return out;
}

void Block::init(RunContext& ctx) {
  if (initialized_) return;
  initialized_ = true;
  rng_ = Rng(mix_seed(ctx.seed(), hash_string(path_string())));
  const std::size_t before = ctx.history().size();
  do_init(ctx);
  note_range(ctx, before);
}

void Block::pull(RunContext& ctx) {
  const std::size_t before = ctx.history().size();
  const double units = ctx.used_units();
  init(ctx);
  do_next(ctx);
  note_range(ctx, before);
  costs_.push_back(ctx.used_units() - units);
  curve_.push_back(best_reward_);
  pull_epochs_.push_back(epoch_);
}

void Block::note_range(const RunContext& ctx, std::size_t from) {
  const auto& h = ctx.history();
  for (std::size_t i = std::max(from, noted_until_); i < h.size(); ++i) {
    const auto reward = h[i].observation.reward();
    if (reward && *reward > best_reward_) {
      best_reward_ = *reward;
      best_ = i;
    }
  }
  noted_until_ = std::max(noted_until_, h.size());
}

double Block::best_reward() const { return best_reward_; }

std::pair<Configuration, double> Block::get_current_best(const RunContext& ctx) const {
  if (!best_) throw EmptyHistoryError("block '" + path_string() + "' has no successful evaluation");
  return {project(ctx.history().at(*best_).observation.config, space_), best_reward_};
}

BoundsEstimate Block::get_eu(double horizon, double reward_ceiling) const {
  BoundsEstimate b;
  b.horizon = horizon;
  const std::size_t n = curve_.size();
  if (n == 0 || !std::isfinite(curve_.back()))
    throw EmptyHistoryError("block '" + path_string() + "' has no successful evaluation");
  const double r = curve_.back();
  b.lower = r;
  if (n == 1) {
    b.upper = std::max(r, reward_ceiling);
    return b;
  }
  const std::size_t c = std::min(options_.smoothing_window, n - 1);
  const double prev = curve_[n - 1 - c];
  const double omega = std::isfinite(prev) ? (r - prev) / static_cast<double>(c)
                                           : std::numeric_limits<double>::infinity();
  if (omega <= 0.0) {
    b.upper = r;
    return b;
  }
  double mean_cost = 0.0;
  for (double cst : costs_) mean_cost += cst;
  mean_cost /= static_cast<double>(costs_.size());
  double pulls = 0.0;
  if (horizon > 0.0) pulls = mean_cost > 0.0 ? std::floor(horizon / mean_cost) : std::numeric_limits<double>::infinity();
  const double projected = pulls > 0.0 ? r + omega * pulls : r;
  b.upper = std::max(r, std::min(projected, reward_ceiling));
  return b;
}

EuiEstimate Block::get_eui() const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const std::size_t n = curve_.size();
  const std::size_t from = std::max<std::size_t>(1, n > options_.eui_window ? n - options_.eui_window : 0);
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t t = from; t < n; ++t) {
    if (pull_epochs_[t] != epoch_) continue;
    if (!std::isfinite(curve_[t - 1])) {
      if (std::isfinite(curve_[t])) return {inf};
      continue;
    }
    sum += std::max(0.0, curve_[t] - curve_[t - 1]);
    ++counted;
  }
  if (counted == 0) return {inf};
  return {sum / static_cast<double>(counted)};
}

void Block::check_context(const Configuration& vars) const {
  for (const auto& [k, v] : vars)
    if (!context_space_.contains(k)) throw NameError("'" + k + "' is not a context variable of block '" + path_string() + "'");
  context_space_.validate(vars);
}

bool Block::assign_context(const Configuration& vars) {
  check_context(vars);
  if (vars == context_) return false;
  context_ = vars;
  ++epoch_;
  return true;
}

void Block::set_var(const Configuration& vars) { assign_context(vars); }

namespace {

// Scores free-variable candidates with a model over (free, context) inputs by
// appending the current context encoding.
class SliceSurrogate final : public Surrogate {
 public:
  SliceSurrogate(GPModel model, Eigen::RowVectorXd context) : model_(std::move(model)), context_(std::move(context)) {}
  std::size_t width() const override { return model_.width() - static_cast<std::size_t>(context_.size()); }
  std::vector<Prediction> predict_batch(const Eigen::MatrixXd& x) const override {
    Eigen::MatrixXd full(x.rows(), x.cols() + context_.size());
    full.leftCols(x.cols()) = x;
    full.rightCols(context_.size()) = context_.replicate(x.rows(), 1);
    return model_.predict_batch(full);
  }

 private:
  GPModel model_;
  Eigen::RowVectorXd context_;
};

// Log transform anchored just below the loss floor (or the observed minimum).
// Near-optimal differences stay visible to the GP when a few bad
// configurations dominate the raw scale.
void warp_losses(std::vector<double>& y, std::optional<double> floor) {
  constexpr double kOffset = 0.01;
  const auto [lo_it, hi_it] = std::minmax_element(y.begin(), y.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi - lo <= 1e-12) return;
  const double base = floor ? std::min(*floor, lo) : lo;
  for (auto& v : y) v = std::log(v - base + kOffset * (hi - base));
}

}  // namespace

// ---------------------------------------------------------------------------
// JointBlock

JointBlock::JointBlock(std::vector<std::string> path, SearchSpace space, Configuration fixed, SearchSpace context_space,
                       Configuration context, BlockOptions options)
    : Block(BlockKind::joint, std::move(path), std::move(space), std::move(fixed), std::move(context_space),
            std::move(context), options) {}

void JointBlock::do_init(RunContext&) {
  queue_.clear();
  if (space_.empty()) {
    queue_.push_back({});
    return;
  }
  queue_.push_back(space_.defaults());
  for (std::size_t i = 1; i < options_.initial_design; ++i) queue_.push_back(sample_one(space_, rng_));
}

void JointBlock::set_var(const Configuration& vars) {
  if (!assign_context(vars)) return;
  ++context_changes_;
  fresh_.clear();
  scanned_ = 0;
}

void JointBlock::refresh(const RunContext& ctx) {
  const auto& h = ctx.history();
  const Configuration pinned = fixed_all();
  for (; scanned_ < h.size(); ++scanned_) {
    const Observation& o = h[scanned_].observation;
    if (o.fidelity != 1.0) continue;
    bool consistent = true;
    for (const auto& [k, v] : pinned) {
      auto it = o.config.find(k);
      if (it == o.config.end() || it->second != v) {
        consistent = false;
        break;
      }
    }
    if (!consistent) continue;
    Configuration free;
    for (const auto& [k, v] : o.config) {
      if (pinned.contains(k)) continue;
      if (!space_.contains(k)) {
        consistent = false;
        break;
      }
      free.emplace(k, v);
    }
    if (!consistent || !space_.is_valid(free)) continue;
    Observation copy = o;
    copy.config = std::move(free);
    fresh_.push_back(std::move(copy));
  }
}

const std::vector<Observation>& JointBlock::fresh_observations(const RunContext& ctx) {
  refresh(ctx);
  return fresh_;
}

Configuration JointBlock::propose(RunContext& ctx) {
  refresh(ctx);
  std::set<Configuration> seen;
  for (const auto& o : fresh_) seen.insert(o.config);
  while (!queue_.empty()) {
    Configuration c = std::move(queue_.front());
    queue_.erase(queue_.begin());
    if (space_.empty() || !seen.contains(c)) return c;
  }
  if (space_.empty()) return {};

  auto random_unseen = [&]() {
    Configuration c = sample_one(space_, rng_);
    for (int tries = 0; tries < 100 && seen.contains(c); ++tries) c = sample_one(space_, rng_);
    return c;
  };

  // Alternating children model the loss over (free, context) so that
  // observations from earlier slices still inform the current one.
  const bool sliced = !factory_ && !context_space_.empty();
  const SearchSpace inputs_space = sliced ? SearchSpace::concat(space_, context_space_, "slice") : space_;
  std::vector<Configuration> inputs;
  std::vector<double> y;
  if (sliced) {
    for (const auto& rec : ctx.history()) {
      const Observation& o = rec.observation;
      if (!o.ok() || o.fidelity != 1.0) continue;
      bool consistent = true;
      for (const auto& [k, v] : fixed_) {
        auto it = o.config.find(k);
        if (it == o.config.end() || it->second != v) {
          consistent = false;
          break;
        }
      }
      if (!consistent) continue;
      Configuration part = project(o.config, inputs_space);
      if (part.size() + fixed_.size() != o.config.size() || !inputs_space.is_valid(part)) continue;
      inputs.push_back(std::move(part));
      y.push_back(*o.loss);
    }
  } else {
    for (const auto& o : fresh_) {
      if (!o.ok()) continue;
      inputs.push_back(o.config);
      y.push_back(*o.loss);
    }
  }

  if (y.empty()) {
    // No usable data: start from the best assignment found under an earlier
    // context.
    const auto& h = ctx.history();
    std::optional<Configuration> anchor;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t idx : own_) {
      const auto r = h[idx].observation.reward();
      if (r && *r > best) {
        best = *r;
        anchor = project(h[idx].observation.config, space_);
      }
    }
    if (anchor && !seen.contains(*anchor)) return *anchor;
    return random_unseen();
  }

  Eigen::MatrixXd x(static_cast<Eigen::Index>(inputs.size()), static_cast<Eigen::Index>(inputs_space.encoded_width()));
  std::vector<double> row(inputs_space.encoded_width());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    encode_into(inputs_space, inputs[i], row);
    for (std::size_t j = 0; j < row.size(); ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }

  std::unique_ptr<Surrogate> model;
  try {
    if (factory_) {
      const Configuration pinned = fixed_all();
      SurrogateRequest req{space_, pinned, x, y, options_.noise_floor, rng_};
      model = factory_(req);
    } else {
      warp_losses(y, ctx.objective().loss_floor);
      GPModel gp = GPModel::fit(x, y, options_.noise_floor);
      if (sliced) {
        const auto enc = encode(context_space_, context_);
        model = std::make_unique<SliceSurrogate>(std::move(gp), Eigen::Map<const Eigen::RowVectorXd>(
                                                                    enc.data(), static_cast<Eigen::Index>(enc.size())));
      } else {
        model = std::make_unique<GPModel>(std::move(gp));
      }
    }
  } catch (const FitError&) {
    return random_unseen();
  }
  return suggest(space_, *model, fresh_, rng_);
}

void JointBlock::do_next(RunContext& ctx) {
  if (ctx.exhausted()) return;
  const Configuration candidate = propose(ctx);
  const Configuration full = merge(fixed_all(), candidate);
  own_.push_back(ctx.evaluate(full, path_));
}

// ---------------------------------------------------------------------------
// ConditioningBlock

ConditioningBlock::ConditioningBlock(std::vector<std::string> path, SearchSpace space, Configuration fixed,
                                     SearchSpace context_space, Configuration context, BlockOptions options,
                                     std::string variable, PlanNode child_template)
    : Block(BlockKind::conditioning, std::move(path), std::move(space), std::move(fixed), std::move(context_space),
            std::move(context), options),
      variable_(std::move(variable)), template_(std::move(child_template)) {
  const VariableSpec* var = space_.find(variable_);
  if (var == nullptr) throw DirectiveError("conditioning variable '" + variable_ + "' is not a free variable");
  if (!var->is_categorical()) throw DirectiveError("conditioning variable '" + variable_ + "' is not categorical");
  if (var->condition) throw DirectiveError("conditioning variable '" + variable_ + "' is conditional");
  for (const auto& v : std::get<CatDomain>(var->domain).choices) {
    values_.push_back(v);
    children_.push_back(make_child(v));
    active_.push_back(true);
  }
}

std::unique_ptr<Block> ConditioningBlock::make_child(const std::string& value) const {
  const Configuration pin{{variable_, Value{value}}};
  SubProblem sub = substitute(space_, pin);
  auto path = path_;
  path.push_back(variable_ + "=" + value);
  return make_block(template_, std::move(path), std::move(sub.space), merge(fixed_, pin), context_space_, context_,
                    options_);
}

std::vector<Block*> ConditioningBlock::children() {
  std::vector<Block*> out;
  for (auto& c : children_) out.push_back(c.get());
  return out;
}

std::size_t ConditioningBlock::active_count() const {
  return static_cast<std::size_t>(std::count(active_.begin(), active_.end(), true));
}

void ConditioningBlock::do_next(RunContext& ctx) {
  for (std::size_t round = 0; round < options_.plays_per_round; ++round) {
    for (std::size_t i = 0; i < children_.size(); ++i) {
      if (!active_[i]) continue;
      if (ctx.exhausted()) return;
      children_[i]->pull(ctx);
    }
  }

  const double horizon = std::max(0.0, ctx.remaining_units());
  const double ceiling = ctx.objective().reward_ceiling();
  std::vector<std::size_t> index;
  std::vector<BoundsEstimate> bounds;
  std::vector<bool> eligible;
  for (std::size_t i = 0; i < children_.size(); ++i) {
    if (!active_[i]) continue;
    const Block& c = *children_[i];
    const bool sampled = c.pull_count() >= options_.plays_per_round;
    if (!c.best_record()) {
      // An arm whose every evaluation failed has no bounds; after L pulls it
      // is treated as dominated by any arm with a result.
      if (!sampled) continue;
      index.push_back(i);
      bounds.push_back({-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), horizon});
      eligible.push_back(true);
      continue;
    }
    index.push_back(i);
    bounds.push_back(c.get_eu(horizon, ceiling));
    eligible.push_back(sampled);
  }
  if (bounds.size() < 2) return;
  const auto keep = eliminate_dominated(bounds, eligible);
  for (std::size_t k = 0; k < index.size(); ++k)
    if (!keep[k]) active_[index[k]] = false;
}

void ConditioningBlock::set_var(const Configuration& vars) {
  if (!assign_context(vars)) return;
  for (auto& c : children_) c->set_var(vars);
}

void ConditioningBlock::extend_arms(const std::vector<std::string>& new_values, const RunContext& ctx) {
  if (new_values.empty()) return;
  const SearchSpace& root = ctx.objective().space;
  const VariableSpec* var = root.find(variable_);
  if (var == nullptr || !var->is_categorical())
    throw DirectiveError("objective does not declare categorical '" + variable_ + "'");
  const auto& choices = std::get<CatDomain>(var->domain).choices;
  std::set<std::string> seen(values_.begin(), values_.end());
  for (const auto& v : new_values) {
    if (!seen.insert(v).second) throw DirectiveError("duplicate arm value '" + v + "'");
    if (std::find(choices.begin(), choices.end(), v) == choices.end())
      throw DirectiveError("arm value '" + v + "' is not declared for '" + variable_ + "'");
  }
  std::vector<std::string> names = space_.names();
  for (const auto& spec : root.variables()) {
    if (spec.condition && spec.condition->parent == variable_ &&
        std::find(new_values.begin(), new_values.end(), spec.condition->equals) != new_values.end())
      names.push_back(spec.name);
  }
  space_ = root.restrict_to(names, space_.name());
  for (const auto& v : new_values) {
    values_.push_back(v);
    children_.push_back(make_child(v));
    active_.push_back(true);
  }
}

void ConditioningBlock::restrict_arms(const std::vector<std::string>& keep) {
  for (const auto& c : children_)
    if (c->pull_count() > 0) throw DirectiveError("arms can only be restricted before the first pull");
  if (keep.empty()) throw DirectiveError("at least one arm must be kept");
  std::vector<std::string> values;
  std::vector<std::unique_ptr<Block>> children;
  for (const auto& v : keep) {
    auto it = std::find(values_.begin(), values_.end(), v);
    if (it == values_.end()) throw NameError("unknown arm '" + v + "'");
    const auto i = static_cast<std::size_t>(it - values_.begin());
    if (!children_[i]) throw DirectiveError("duplicate arm value '" + v + "'");
    values.push_back(v);
    children.push_back(std::move(children_[i]));
  }
  values_ = std::move(values);
  children_ = std::move(children);
  active_.assign(children_.size(), true);
}

// ---------------------------------------------------------------------------
// AlternatingBlock

AlternatingBlock::AlternatingBlock(std::vector<std::string> path, SearchSpace space, Configuration fixed,
                                   SearchSpace context_space, Configuration context, BlockOptions options,
                                   SearchSpace first, SearchSpace second, const PlanNode& first_template,
                                   const PlanNode& second_template)
    : Block(BlockKind::alternating, std::move(path), std::move(space), std::move(fixed), std::move(context_space),
            std::move(context), options),
      first_space_(std::move(first)), second_space_(std::move(second)) {
  first_values_ = first_space_.defaults();
  second_values_ = second_space_.defaults();
  auto p1 = path_;
  p1.push_back("first");
  auto p2 = path_;
  p2.push_back("second");
  first_ = make_block(first_template, std::move(p1), first_space_, fixed_,
                      SearchSpace::concat(context_space_, second_space_, "context"), merge(context_, second_values_),
                      options_);
  second_ = make_block(second_template, std::move(p2), second_space_, fixed_,
                       SearchSpace::concat(context_space_, first_space_, "context"), merge(context_, first_values_),
                       options_);
}

void AlternatingBlock::inject_into_first(const RunContext& ctx) {
  if (!second_->best_record()) return;
  second_values_ = project(second_->get_current_best(ctx).first, second_space_);
  first_->set_var(merge(context_, second_values_));
}

void AlternatingBlock::inject_into_second(const RunContext& ctx) {
  if (!first_->best_record()) return;
  first_values_ = project(first_->get_current_best(ctx).first, first_space_);
  second_->set_var(merge(context_, first_values_));
}

void AlternatingBlock::do_init(RunContext& ctx) {
  for (std::size_t i = 0; i < options_.plays_per_round; ++i) {
    if (ctx.exhausted()) return;
    first_->pull(ctx);
    inject_into_second(ctx);
    if (ctx.exhausted()) return;
    second_->pull(ctx);
    inject_into_first(ctx);
  }
}

EuiEstimate AlternatingBlock::arbitration_eui(const RunContext& ctx, const Block& child, const Block& partner,
                                             const SearchSpace& partner_space) const {
  // A pending injection moves the child to a new slice where its past
  // improvements say nothing.
  if (partner.best_record()) {
    const Configuration next = merge(context_, project(partner.get_current_best(ctx).first, partner_space));
    if (next != child.context()) return {std::numeric_limits<double>::infinity()};
  }
  return child.get_eui();
}

void AlternatingBlock::do_next(RunContext& ctx) {
  if (ctx.exhausted()) return;
  const EuiEstimate d1 = arbitration_eui(ctx, *first_, *second_, second_space_);
  const EuiEstimate d2 = arbitration_eui(ctx, *second_, *first_, first_space_);
  last_choice_ = choose_first(d1, d2) ? 0 : 1;
  if (last_choice_ == 0) {
    inject_into_first(ctx);
    first_->pull(ctx);
  } else {
    inject_into_second(ctx);
    second_->pull(ctx);
  }
}

void AlternatingBlock::set_var(const Configuration& vars) {
  if (!assign_context(vars)) return;
  first_->set_var(merge(context_, second_values_));
  second_->set_var(merge(context_, first_values_));
}

// ---------------------------------------------------------------------------

std::vector<bool> eliminate_dominated(const std::vector<BoundsEstimate>& bounds) {
  return eliminate_dominated(bounds, std::vector<bool>(bounds.size(), true));
}

std::vector<bool> eliminate_dominated(const std::vector<BoundsEstimate>& bounds, const std::vector<bool>& eligible) {
  if (eligible.size() != bounds.size()) throw ConfigError("eligibility mask size mismatch");
  double best_lower = -std::numeric_limits<double>::infinity();
  for (const auto& b : bounds) best_lower = std::max(best_lower, b.lower);
  std::vector<bool> active(bounds.size(), true);
  for (std::size_t i = 0; i < bounds.size(); ++i)
    if (eligible[i] && bounds[i].upper < best_lower) active[i] = false;
  return active;
}

std::pair<SearchSpace, SearchSpace> partition_space(const SearchSpace& space,
                                                    const std::vector<std::string>& first_side) {
  const std::set<std::string> labels(first_side.begin(), first_side.end());
  std::vector<std::string> a, b;
  for (const auto& var : space.variables()) {
    const bool first = labels.contains(var.name) || labels.contains(std::string(to_string(space.group_of(var))));
    (first ? a : b).push_back(var.name);
  }
  for (const auto& var : space.variables()) {
    if (!var.condition) continue;
    const bool in_a = std::find(a.begin(), a.end(), var.name) != a.end();
    const bool parent_in_a = std::find(a.begin(), a.end(), var.condition->parent) != a.end();
    if (in_a != parent_in_a)
      throw DirectiveError("conditional variable '" + var.name + "' is split from its parent '" +
                           var.condition->parent + "'");
  }
  return {space.restrict_to(a, space.name() + ".first"), space.restrict_to(b, space.name() + ".second")};
}

std::unique_ptr<Block> make_block(const PlanNode& node, std::vector<std::string> path, SearchSpace space,
                                  Configuration fixed, SearchSpace context_space, Configuration context,
                                  const BlockOptions& options) {
  switch (node.kind) {
    case BlockKind::joint:
      if (!node.children.empty()) throw PlanError("joint block cannot have children");
      return std::make_unique<JointBlock>(std::move(path), std::move(space), std::move(fixed),
                                          std::move(context_space), std::move(context), options);
    case BlockKind::conditioning:
      if (node.children.size() != 1) throw PlanError("conditioning block needs exactly one child template");
      return std::make_unique<ConditioningBlock>(std::move(path), std::move(space), std::move(fixed),
                                                 std::move(context_space), std::move(context), options, node.variable,
                                                 node.children.front());
    case BlockKind::alternating: {
      if (node.children.size() != 2) throw PlanError("alternating block needs exactly two child templates");
      auto [first, second] = partition_space(space, node.first_side);
      // One empty side leaves nothing to alternate over.
      if (first.empty() || second.empty()) {
        const PlanNode& only = first.empty() ? node.children[1] : node.children[0];
        return make_block(only, std::move(path), std::move(space), std::move(fixed), std::move(context_space),
                          std::move(context), options);
      }
      return std::make_unique<AlternatingBlock>(std::move(path), std::move(space), std::move(fixed),
                                                std::move(context_space), std::move(context), options,
                                                std::move(first), std::move(second), node.children[0],
                                                node.children[1]);
    }
  }
  throw PlanError("unknown block kind");
}

void visit_blocks(Block& root, const std::function<void(Block&)>& fn) {
  fn(root);
  for (Block* c : root.children()) visit_blocks(*c, fn);
}

}  // namespace volcano
