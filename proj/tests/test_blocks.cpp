#include <doctest.h>

#include <cmath>
#include <limits>
#include <memory>

#include "support.hpp"
#include "volcano/errors.hpp"
#include "volcano/pipeline.hpp"
#include "volcano/plan.hpp"

using namespace volcano;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Returns the listed losses in call order, whatever the configuration.
Objective scripted(std::vector<double> losses) {
  Objective obj;
  obj.name = "scripted";
  obj.space = SearchSpace("s", {VariableSpec{"x", RealDomain{0, 1}, 0.5, {}, {}}});
  auto next = std::make_shared<std::size_t>(0);
  obj.eval_fn = [losses = std::move(losses), next](const Configuration&, double, std::uint64_t) {
    Evaluation e;
    e.loss = losses.at((*next)++ % losses.size());
    return e;
  };
  obj.loss_floor = 0.0;
  return obj;
}

std::unique_ptr<Block> joint_over(const SearchSpace& space, BlockOptions options = {}) {
  return make_block(PlanNode{}, {"root"}, space, {}, {}, {}, options);
}

PlanNode conditioning_on(std::string variable) {
  PlanNode n;
  n.kind = BlockKind::conditioning;
  n.variable = std::move(variable);
  n.children = {PlanNode{}};
  return n;
}

}  // namespace

TEST_CASE("eliminate_dominated") {
  CHECK(eliminate_dominated({{0.8, 0.9, 0}, {0.5, 0.7, 0}, {0.75, 0.95, 0}}) == std::vector<bool>{true, false, true});
  CHECK(eliminate_dominated({{0.5, 0.7, 0}, {0.5, 0.7, 0}}) == std::vector<bool>{true, true});
  CHECK(eliminate_dominated({{0.1, 0.2, 0}}) == std::vector<bool>{true});
  CHECK(eliminate_dominated({{0.8, 0.9, 0}, {0.5, 0.7, 0}}, {true, false}) == std::vector<bool>{true, true});
}

TEST_CASE("eliminate_dominated keeps the max-lower child") {
  Rng rng(6);
  for (int t = 0; t < 2000; ++t) {
    std::vector<BoundsEstimate> b(1 + rng.index(6));
    for (auto& x : b) {
      x.lower = rng.uniform(-1, 0);
      x.upper = x.lower + rng.uniform(0, 0.5);
    }
    const auto keep = eliminate_dominated(b);
    std::size_t best = 0;
    for (std::size_t i = 1; i < b.size(); ++i)
      if (b[i].lower > b[best].lower) best = i;
    REQUIRE(keep[best]);
    for (std::size_t i = 0; i < b.size(); ++i) {
      bool dominated = false;
      for (std::size_t j = 0; j < b.size(); ++j) dominated = dominated || (j != i && b[i].upper < b[j].lower);
      REQUIRE(keep[i] == !dominated);
    }
  }
}

TEST_CASE("get_eu") {
  BlockOptions opts;
  opts.smoothing_window = 2;
  const auto obj = scripted({1.0, 0.6, 0.5});
  auto b = joint_over(obj.space, opts);
  RunContext ctx(obj, Budget::evaluations(10), 0);
  b->pull(ctx);
  const auto first = b->get_eu(4, 0.0);
  CHECK(first.lower == doctest::Approx(-1.0));
  CHECK(first.upper == 0.0);
  b->pull(ctx);
  b->pull(ctx);
  const auto e = b->get_eu(4, 0.0);
  CHECK(e.lower == doctest::Approx(-0.5));
  CHECK(e.upper == doctest::Approx(0.0));
  const auto small = b->get_eu(1, 0.0);
  CHECK(small.upper == doctest::Approx(-0.25));
  double last = -kInf;
  for (double k = 0; k < 10; k += 0.5) {
    const double u = b->get_eu(k, 0.0).upper;
    REQUIRE(u >= last);
    last = u;
  }
}

TEST_CASE("get_eu: flat curve") {
  const auto obj = scripted({0.4, 0.9, 0.7, 0.8});
  auto b = joint_over(obj.space);
  RunContext ctx(obj, Budget::evaluations(10), 0);
  for (int i = 0; i < 4; ++i) b->pull(ctx);
  const auto e = b->get_eu(100, 0.0);
  CHECK(e.lower == doctest::Approx(-0.4));
  CHECK(e.upper == doctest::Approx(-0.4));
}

TEST_CASE("get_eui") {
  {
    const auto obj = scripted({1.0, 0.9, 0.95, 0.85});
    auto b = joint_over(obj.space);
    RunContext ctx(obj, Budget::evaluations(10), 0);
    CHECK(b->get_eui().value == kInf);
    for (int i = 0; i < 4; ++i) b->pull(ctx);
    CHECK(b->get_eui().value == doctest::Approx(0.05));
  }
  {
    const auto obj = scripted({1.0, 1.0, 1.0});
    auto b = joint_over(obj.space);
    RunContext ctx(obj, Budget::evaluations(10), 0);
    for (int i = 0; i < 3; ++i) b->pull(ctx);
    CHECK(b->get_eui().value == 0.0);
  }
  {
    std::vector<double> losses{10.0, 5.0};
    for (int i = 1; i <= 8; ++i) losses.push_back(5.0 - 0.2 * i);
    const auto obj = scripted(losses);
    auto b = joint_over(obj.space);
    RunContext ctx(obj, Budget::evaluations(20), 0);
    for (int i = 0; i < 10; ++i) b->pull(ctx);
    CHECK(b->get_eui().value == doctest::Approx(0.2));
  }
}

TEST_CASE("alternating tie goes to the first child") {
  CHECK(AlternatingBlock::choose_first({0.1}, {0.1}));
  CHECK_FALSE(AlternatingBlock::choose_first({0.1}, {0.2}));
}

TEST_CASE("get_current_best") {
  const auto obj = scripted({0.5, 0.2, 0.9, 0.2});
  auto b = joint_over(obj.space);
  RunContext ctx(obj, Budget::evaluations(10), 0);
  CHECK_THROWS_AS(b->get_current_best(ctx), EmptyHistoryError);
  for (int i = 0; i < 4; ++i) b->pull(ctx);
  const auto [config, reward] = b->get_current_best(ctx);
  CHECK(reward == doctest::Approx(-0.2));
  CHECK(config == ctx.history()[1].observation.config);
}

TEST_CASE("joint block") {
  const SearchSpace s("q", {VariableSpec{"x", RealDomain{-1, 1}, 0.0, {}, {}}});
  Objective obj;
  obj.name = "q";
  obj.space = s;
  obj.eval_fn = [](const Configuration& c, double, std::uint64_t) {
    const double x = std::get<double>(c.at("x"));
    return Evaluation{EvalStatus::ok, (x - 0.3) * (x - 0.3), {}, {}};
  };
  auto b = joint_over(s);
  RunContext ctx(obj, Budget::evaluations(20), 0);
  b->init(ctx);
  auto& jb = dynamic_cast<JointBlock&>(*b);
  CHECK(jb.queued() == 3);
  for (int i = 0; i < 3; ++i) b->pull(ctx);
  CHECK(ctx.history().front().observation.config == s.defaults());
  const auto before = ctx.history().size();
  b->pull(ctx);
  CHECK(ctx.history().size() == before + 1);
}

TEST_CASE("joint block over an empty free space") {
  const auto s = volcano::testing::knn_tree_space();
  auto sub = substitute(s, {{"algo", std::string("tree")}, {"depth", std::int64_t{2}}, {"x", 0.0}});
  auto b = make_block(PlanNode{}, {"leaf"}, sub.space, sub.fixed, {}, {}, {});
  Objective obj;
  obj.space = s;
  obj.eval_fn = [](const Configuration&, double, std::uint64_t) { return Evaluation{EvalStatus::ok, 1.0, {}, {}}; };
  RunContext ctx(obj, Budget::evaluations(5), 0);
  b->init(ctx);
  CHECK(dynamic_cast<JointBlock&>(*b).queued() == 1);
  b->pull(ctx);
  CHECK(ctx.history().size() == 1);
}

TEST_CASE("conditioning block construction") {
  const auto space = pipeline_space();
  auto b = make_block(conditioning_on("algo"), {"root"}, space, {}, {}, {}, {});
  auto& cb = dynamic_cast<ConditioningBlock&>(*b);
  CHECK(cb.child_count() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(cb.child(i).pull_count() == 0);
  CHECK_THROWS_AS(make_block(conditioning_on("selector.p"), {"root"}, space, {}, {}, {}, {}), DirectiveError);
  CHECK_THROWS_AS(make_block(conditioning_on("nope"), {"root"}, space, {}, {}, {}, {}), Error);
}

TEST_CASE("conditioning best carries the arm value") {
  ConditionalQuadraticParams p;
  p.arms = {"a1", "a2", "a3"};
  p.offsets = {1.0, 0.0, 2.0};
  p.optima = {{0, 0}, {1, 1}, {2, 2}};
  const auto obj = make_conditional_quadratic(p);
  auto root = build_plan(PlanSpec{PlanShape::C}, obj);
  RunContext ctx(obj, Budget::evaluations(60), 3);
  const auto result = run(*root, ctx);
  CHECK(std::get<std::string>(result.best_config.at("arm")) == "a2");
  CHECK(obj.space.is_valid(result.best_config));
}

TEST_CASE("alternating warm-up") {
  const auto obj = make_benchmark("separable_quadratic");
  auto root = build_plan(PlanSpec{PlanShape::A}, obj);
  RunContext ctx(obj, Budget::evaluations(100), 0);
  root->init(ctx);
  auto& ab = dynamic_cast<AlternatingBlock&>(*root);
  CHECK(dynamic_cast<JointBlock&>(ab.first()).own_records().size() == 5);
  CHECK(dynamic_cast<JointBlock&>(ab.second()).own_records().size() == 5);
  CHECK(ctx.history().size() == 10);
  CHECK(ctx.history()[0].block_path.back() == "first");
  CHECK(ctx.history()[1].block_path.back() == "second");
  // the best config always satisfies the composite space
  for (int i = 0; i < 20; ++i) {
    root->pull(ctx);
    REQUIRE(obj.space.is_valid(root->get_current_best(ctx).first));
  }
}

TEST_CASE("set_var") {
  const auto obj = make_benchmark("separable_quadratic");
  auto root = build_plan(PlanSpec{PlanShape::A}, obj);
  RunContext ctx(obj, Budget::evaluations(100), 0);
  root->init(ctx);
  auto& ab = dynamic_cast<AlternatingBlock&>(*root);
  Block& second = ab.second();
  const auto ctx_vars = second.context();
  const auto epoch = second.context_epoch();
  second.set_var(ctx_vars);
  CHECK(second.context_epoch() == epoch);

  Configuration moved = ctx_vars;
  moved.begin()->second = 4.0;
  second.set_var(moved);
  CHECK(second.context_epoch() == epoch + 1);
  second.pull(ctx);
  const auto& last = ctx.history().back().observation.config;
  CHECK(last.at(moved.begin()->first) == Value{4.0});

  CHECK_THROWS(second.set_var({{"not_a_context_var", 1.0}}));
}

TEST_CASE("reward curve is monotone") {
  const auto obj = make_benchmark("conditional_quadratic_3_noisy");
  auto root = build_plan(PlanSpec{PlanShape::CA}, obj);
  RunContext ctx(obj, Budget::evaluations(120), 2);
  run(*root, ctx);
  visit_blocks(*root, [](Block& b) {
    const auto& c = b.reward_curve();
    for (std::size_t i = 1; i < c.size(); ++i) REQUIRE(c[i] >= c[i - 1]);
  });
  auto& cb = dynamic_cast<ConditioningBlock&>(*root);
  CHECK(cb.active_count() >= 1);
}

TEST_CASE("extend_arms") {
  ConditionalQuadraticParams p;
  p.arms = {"a1", "a2"};
  p.offsets = {0.0, 1.0};
  p.optima = {{0, 0}, {0, 0}};
  const auto obj = make_conditional_quadratic(p);
  auto root = build_plan(PlanSpec{PlanShape::C}, obj);
  RunContext ctx(obj, Budget::evaluations(100), 0);
  root->pull(ctx);
  auto& cb = dynamic_cast<ConditioningBlock&>(*root);
  cb.extend_arms({}, ctx);
  CHECK(cb.child_count() == 2);
  CHECK_THROWS_AS(cb.extend_arms({"a1"}, ctx), DirectiveError);
  CHECK_THROWS_AS(cb.extend_arms({"a9"}, ctx), DirectiveError);

  auto q = p;
  q.arms.push_back("a3");
  q.offsets.push_back(0.5);
  q.optima.push_back({0, 0});
  ctx.set_objective(make_conditional_quadratic(q));
  cb.extend_arms({"a3"}, ctx);
  CHECK(cb.child_count() == 3);
  CHECK(cb.active()[2]);
  root->pull(ctx);
  CHECK(cb.child(2).pull_count() == 5);
}

TEST_CASE("budget exhaustion mid-round") {
  const auto obj = make_benchmark("conditional_quadratic_3");
  auto root = build_plan(PlanSpec{PlanShape::C}, obj);
  RunContext ctx(obj, Budget::evaluations(7), 0);
  const auto r = run(*root, ctx);
  CHECK(r.evaluations == 7);
  CHECK(dynamic_cast<ConditioningBlock&>(*root).active_count() == 3);
}
