#include "volcano/plan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "volcano/errors.hpp"

namespace volcano {

std::string_view to_string(PlanShape shape) {
  switch (shape) {
    case PlanShape::J:
      return "J";
    case PlanShape::C:
      return "C";
    case PlanShape::A:
      return "A";
    case PlanShape::AC:
      return "AC";
    case PlanShape::CA:
      return "CA";
    case PlanShape::custom:
      return "custom";
  }
  return "?";
}

PlanShape plan_shape_from_string(std::string_view text) {
  for (auto s : {PlanShape::J, PlanShape::C, PlanShape::A, PlanShape::AC, PlanShape::CA, PlanShape::custom})
    if (text == to_string(s)) return s;
  throw PlanError("unknown plan shape '" + std::string(text) + "'");
}

namespace {

BlockKind block_kind_from_string(const std::string& text) {
  if (text == "joint") return BlockKind::joint;
  if (text == "conditioning") return BlockKind::conditioning;
  if (text == "alternating") return BlockKind::alternating;
  throw PlanError("unknown block kind '" + text + "'");
}

PlanNode joint() { return PlanNode{BlockKind::joint, {}, {}, {}}; }

PlanNode conditioning(const std::string& var, PlanNode child) {
  return PlanNode{BlockKind::conditioning, var, {}, {std::move(child)}};
}

PlanNode alternating(const std::vector<std::string>& first, PlanNode a, PlanNode b) {
  return PlanNode{BlockKind::alternating, {}, first, {std::move(a), std::move(b)}};
}

}  // namespace

PlanNode plan_node_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("kind") || !doc["kind"].is_string())
    throw PlanError("plan node needs a string 'kind'");
  PlanNode node;
  node.kind = block_kind_from_string(doc["kind"].get<std::string>());
  if (doc.contains("variable")) node.variable = doc["variable"].get<std::string>();
  if (doc.contains("first_side")) node.first_side = doc["first_side"].get<std::vector<std::string>>();
  if (doc.contains("children")) {
    if (!doc["children"].is_array()) throw PlanError("plan node 'children' must be an array");
    for (const auto& c : doc["children"]) node.children.push_back(plan_node_from_json(c));
  }
  return node;
}

nlohmann::json to_json(const PlanNode& node) {
  nlohmann::json j{{"kind", std::string(to_string(node.kind))}};
  if (!node.variable.empty()) j["variable"] = node.variable;
  if (!node.first_side.empty()) j["first_side"] = node.first_side;
  if (!node.children.empty()) {
    j["children"] = nlohmann::json::array();
    for (const auto& c : node.children) j["children"].push_back(to_json(c));
  }
  return j;
}

PlanSpec plan_spec_from_json(const nlohmann::json& doc) {
  PlanSpec spec;
  try {
    if (doc.is_string()) {
      spec.shape = plan_shape_from_string(doc.get<std::string>());
      return spec;
    }
    if (!doc.is_object()) throw PlanError("plan must be a shape name or an object");
    spec.shape = plan_shape_from_string(doc.value("shape", std::string("J")));
    if (doc.contains("variable")) spec.variable = doc["variable"].get<std::string>();
    if (doc.contains("first_side")) spec.first_side = doc["first_side"].get<std::vector<std::string>>();
    if (spec.shape == PlanShape::custom) {
      if (!doc.contains("tree")) throw PlanError("custom plan needs a 'tree'");
      spec.tree = plan_node_from_json(doc["tree"]);
    }
  } catch (const nlohmann::json::exception& e) {
    throw PlanError(std::string("malformed plan: ") + e.what());
  }
  return spec;
}

nlohmann::json to_json(const PlanSpec& spec) {
  nlohmann::json j{{"shape", std::string(to_string(spec.shape))}, {"first_side", spec.first_side}};
  if (!spec.variable.empty()) j["variable"] = spec.variable;
  if (spec.tree) j["tree"] = to_json(*spec.tree);
  return j;
}

PlanNode plan_tree(const PlanSpec& spec, const SearchSpace& space) {
  if (spec.shape == PlanShape::custom) {
    if (!spec.tree) throw PlanError("custom plan needs a tree");
    return *spec.tree;
  }
  std::string var = spec.variable;
  const bool needs_var = spec.shape == PlanShape::C || spec.shape == PlanShape::AC || spec.shape == PlanShape::CA;
  if (needs_var && var.empty()) {
    if (!space.algorithm_variable())
      throw PlanError(std::string("plan ") + std::string(to_string(spec.shape)) +
                      " needs a conditioning variable and the space declares no algorithm variable");
    var = *space.algorithm_variable();
  }
  switch (spec.shape) {
    case PlanShape::J:
      return joint();
    case PlanShape::C:
      return conditioning(var, joint());
    case PlanShape::A:
      return alternating(spec.first_side, joint(), joint());
    case PlanShape::AC:
      return alternating(spec.first_side, joint(), conditioning(var, joint()));
    case PlanShape::CA:
      return conditioning(var, alternating(spec.first_side, joint(), joint()));
    case PlanShape::custom:
      break;
  }
  throw PlanError("unknown plan shape");
}

void validate_plan(const PlanNode& node, const SearchSpace& space) {
  switch (node.kind) {
    case BlockKind::joint:
      if (!node.children.empty()) throw PlanError("joint block must be a leaf");
      return;
    case BlockKind::conditioning: {
      if (node.children.empty()) throw PlanError("leaf-must-be-joint: conditioning block without a child template");
      if (node.children.size() != 1) throw PlanError("conditioning block takes exactly one child template");
      const VariableSpec* var = space.find(node.variable);
      if (var == nullptr) throw PlanError("conditioning variable '" + node.variable + "' is not in the space");
      if (!var->is_categorical()) throw PlanError("conditioning variable '" + node.variable + "' is not categorical");
      if (var->condition) throw PlanError("conditioning variable '" + node.variable + "' is conditional");
      validate_plan(node.children.front(), space);
      return;
    }
    case BlockKind::alternating:
      if (node.children.empty()) throw PlanError("leaf-must-be-joint: alternating block without children");
      if (node.children.size() != 2) throw PlanError("alternating block takes exactly two child templates");
      if (node.first_side.empty()) throw PlanError("alternating block needs a first-side partition");
      for (const auto& c : node.children) validate_plan(c, space);
      return;
  }
}

std::unique_ptr<Block> build_plan(const PlanSpec& spec, const Objective& objective, const BlockOptions& options) {
  const PlanNode tree = plan_tree(spec, objective.space);
  validate_plan(tree, objective.space);
  try {
    return make_block(tree, {"root"}, objective.space, {}, SearchSpace("context", {}), {}, options);
  } catch (const DirectiveError& e) {
    throw PlanError(e.what());
  } catch (const NameError& e) {
    throw PlanError(e.what());
  }
}

RunResult assemble_result(const RunContext& ctx, std::optional<std::size_t> best_index) {
  RunResult out;
  out.history = ctx.history();
  out.evaluations = out.history.size();
  out.wall_seconds = ctx.elapsed_seconds();
  if (!best_index) {
    std::size_t failed = 0;
    for (const auto& r : out.history)
      if (!r.observation.ok()) ++failed;
    throw RunError("no successful evaluation: " + std::to_string(failed) + " of " +
                   std::to_string(out.history.size()) + " evaluations failed");
  }
  const Observation& best = out.history.at(*best_index).observation;
  out.best_config = best.config;
  out.best_loss = *best.loss;
  out.best_reward = -*best.loss;
  return out;
}

RunResult run(Block& root, RunContext& ctx) {
  root.init(ctx);
  while (!ctx.exhausted()) {
    const std::size_t before = ctx.history().size();
    root.pull(ctx);
    if (ctx.history().size() == before && !ctx.exhausted()) throw RunError("plan made no progress");
  }
  return assemble_result(ctx, root.best_record());
}

RunResult run_plan(const PlanSpec& spec, const Objective& objective, Budget budget, std::uint64_t seed,
                   const BlockOptions& options) {
  auto root = build_plan(spec, objective, options);
  RunContext ctx(objective, budget, seed);
  return run(*root, ctx);
}

Enumeration enumerate_plans(const Objective& objective) {
  const SearchSpace& space = objective.space;
  if (space.empty()) throw PlanError("cannot enumerate plans over an empty space");
  Enumeration out;
  const auto& algo = space.algorithm_variable();
  const VariableSpec* var = algo ? space.find(*algo) : nullptr;
  if (var == nullptr || !var->is_categorical() || var->condition) {
    out.warnings.push_back("space has no categorical algorithm variable; only plans J and A apply");
    out.plans.push_back(PlanSpec{PlanShape::J, {}, {"feature"}, {}});
    out.plans.push_back(PlanSpec{PlanShape::A, {}, {"feature"}, {}});
    return out;
  }
  for (auto s : {PlanShape::J, PlanShape::C, PlanShape::A, PlanShape::AC, PlanShape::CA})
    out.plans.push_back(PlanSpec{s, *algo, {"feature"}, {}});
  return out;
}

RunResult run_progressive(const Objective& objective, Budget budget, std::uint64_t seed,
                          const ProgressiveOptions& options) {
  return run_progressive(objective, budget, seed, options, nullptr);
}

RunResult run_progressive(const Objective& objective, Budget budget, std::uint64_t seed,
                          const ProgressiveOptions& options, ProgressiveTrace* trace) {
  const auto& fr = options.stage_fractions;
  if (fr[0] <= 0 || fr[1] <= 0 || fr[2] <= 0 || std::abs(fr[0] + fr[1] + fr[2] - 1.0) > 1e-9)
    throw ConfigError("stage fractions must be three positive numbers summing to 1");
  const SearchSpace& space = objective.space;
  const auto& algo = space.algorithm_variable();
  const VariableSpec* var = algo ? space.find(*algo) : nullptr;
  if (var == nullptr || !var->is_categorical()) throw PlanError("progressive plan needs a categorical algorithm variable");
  const auto& values = std::get<CatDomain>(var->domain).choices;
  const std::size_t m = values.size();

  RunContext ctx(objective, budget, seed);
  const bool by_count = budget.kind == Budget::Kind::evaluations;
  const double end1 = budget.amount * fr[0];
  const double end2 = budget.amount * (fr[0] + fr[1]);
  std::size_t rounds = 0;
  if (by_count) {
    rounds = static_cast<std::size_t>(std::floor(end1 + 1e-9)) / m;
    if (rounds == 0)
      throw PlanError("screening budget " + std::to_string(static_cast<std::size_t>(end1)) +
                      " is smaller than the number of algorithms (" + std::to_string(m) + ")");
  }

  // Stage 1: every algorithm at defaults, round-robin.
  std::vector<double> sum(m, 0.0);
  std::vector<std::size_t> ok_count(m, 0), count(m, 0);
  const std::vector<std::string> screen_path{"root", "screen"};
  for (std::size_t r = 0;; ++r) {
    if (by_count ? r >= rounds : (r > 0 && ctx.used_units() >= end1)) break;
    for (std::size_t i = 0; i < m && !ctx.exhausted(); ++i) {
      const auto idx = ctx.evaluate(space.resolve({{*algo, Value{values[i]}}}), screen_path);
      ++count[i];
      const auto& o = ctx.history()[idx].observation;
      if (o.ok()) {
        sum[i] += *o.loss;
        ++ok_count[i];
      }
    }
    if (ctx.exhausted()) break;
  }
  std::vector<double> means(m, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < m; ++i)
    if (ok_count[i] > 0) means[i] = sum[i] / static_cast<double>(ok_count[i]);
  const std::size_t winner = static_cast<std::size_t>(std::min_element(means.begin(), means.end()) - means.begin());
  const std::string chosen = values[winner];
  if (trace) *trace = ProgressiveTrace{chosen, count, means};

  const Configuration pin{{*algo, Value{chosen}}};
  const SubProblem sub = substitute(space, pin);
  auto [features, hypers] = partition_space(sub.space, {"feature"});
  const SearchSpace empty_ctx("context", {});

  auto best_with_winner = [&]() {
    std::optional<std::size_t> best;
    const auto& h = ctx.history();
    for (std::size_t i = 0; i < h.size(); ++i) {
      const auto& o = h[i].observation;
      if (!o.ok() || o.config.at(*algo) != Value{chosen}) continue;
      if (!best || *o.loss < *h[*best].observation.loss) best = i;
    }
    return best;
  };

  // Stage 2: features, hyperparameters at defaults.
  {
    JointBlock block({"root", "features"}, features, merge(pin, hypers.defaults()), empty_ctx, {}, options.blocks);
    block.init(ctx);
    while (!ctx.exhausted() && ctx.used_units() < end2 - 1e-9) block.pull(ctx);
  }
  // Stage 3: hyperparameters, best features fixed.
  Configuration best_features = features.defaults();
  if (auto b = best_with_winner()) best_features = project(ctx.history()[*b].observation.config, features);
  {
    JointBlock block({"root", "hyper"}, hypers, merge(pin, best_features), empty_ctx, {}, options.blocks);
    block.init(ctx);
    while (!ctx.exhausted()) block.pull(ctx);
  }
  return assemble_result(ctx, best_with_winner());
}

}  // namespace volcano
