#include <doctest.h>

#include <algorithm>

#include "support.hpp"
#include "volcano/errors.hpp"
#include "volcano/pipeline.hpp"
#include "volcano/plan.hpp"

using namespace volcano;

namespace {

Objective moons_objective() {
  return make_pipeline_objective(load_dataset(volcano::testing::data_path("toy_moons.csv")), Metric::balanced_accuracy);
}

std::size_t count_kind(Block& root, BlockKind kind) {
  std::size_t n = 0;
  visit_blocks(root, [&](Block& b) { n += b.kind() == kind; });
  return n;
}

std::size_t depth(Block& b) {
  std::size_t d = 0;
  for (Block* c : b.children()) d = std::max(d, depth(*c));
  return d + 1;
}

void check_best_matches_history(const RunResult& r) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& rec : r.history)
    if (rec.observation.ok()) best = std::min(best, *rec.observation.loss);
  CHECK(r.best_loss == best);
}

}  // namespace

TEST_CASE("plan shapes on the pipeline space") {
  const auto obj = moons_objective();
  auto ca = build_plan(PlanSpec{PlanShape::CA}, obj);
  CHECK(ca->kind() == BlockKind::conditioning);
  CHECK(ca->children().size() == 3);
  for (Block* c : ca->children()) CHECK(c->kind() == BlockKind::alternating);
  CHECK(count_kind(*ca, BlockKind::joint) == 6);

  auto j = build_plan(PlanSpec{PlanShape::J}, obj);
  CHECK(depth(*j) == 1);

  auto ac = build_plan(PlanSpec{PlanShape::AC}, obj);
  CHECK(ac->kind() == BlockKind::alternating);
  CHECK(count_kind(*ac, BlockKind::conditioning) == 1);
  auto& alt = dynamic_cast<AlternatingBlock&>(*ac);
  CHECK(alt.second().kind() == BlockKind::conditioning);
  CHECK(alt.second_space().contains("algo"));
  CHECK_FALSE(alt.first_space().contains("algo"));

  auto a = build_plan(PlanSpec{PlanShape::A}, obj);
  CHECK(count_kind(*a, BlockKind::joint) == 2);
  auto c = build_plan(PlanSpec{PlanShape::C}, obj);
  CHECK(count_kind(*c, BlockKind::joint) == 3);
}

TEST_CASE("leaves must be joint") {
  const auto obj = moons_objective();
  PlanSpec spec;
  spec.shape = PlanShape::custom;
  spec.tree = plan_node_from_json(nlohmann::json::parse(
      R"({"kind": "conditioning", "variable": "algo", "children": [{"kind": "conditioning", "variable": "scaler"}]})"));
  CHECK_THROWS_WITH_AS(build_plan(spec, obj), doctest::Contains("leaf"), PlanError);

  spec.tree = plan_node_from_json(nlohmann::json::parse(
      R"({"kind": "alternating", "first_side": ["feature"], "children": [{"kind": "joint"}]})"));
  CHECK_THROWS_AS(build_plan(spec, obj), PlanError);

  spec.tree = plan_node_from_json(nlohmann::json::parse(
      R"({"kind": "conditioning", "variable": "algo", "children": [{"kind": "joint"}]})"));
  CHECK(build_plan(spec, obj)->children().size() == 3);
}

TEST_CASE("plan spec json") {
  CHECK(plan_spec_from_json("CA").shape == PlanShape::CA);
  CHECK_THROWS(plan_spec_from_json("ZZ"));
  PlanSpec spec;
  spec.shape = PlanShape::AC;
  spec.variable = "algo";
  const auto back = plan_spec_from_json(to_json(spec));
  CHECK(back.shape == PlanShape::AC);
  CHECK(back.variable == "algo");
  CHECK(back.first_side == spec.first_side);
}

TEST_CASE("enumerate_plans") {
  const auto obj = moons_objective();
  const auto en = enumerate_plans(obj);
  REQUIRE(en.plans.size() == 5);
  const std::vector<PlanShape> order{PlanShape::J, PlanShape::C, PlanShape::A, PlanShape::AC, PlanShape::CA};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(en.plans[i].shape == order[i]);
    CHECK_NOTHROW(build_plan(en.plans[i], obj));
  }
  CHECK(en.warnings.empty());

  const auto sep = make_benchmark("separable_quadratic");
  const auto two = enumerate_plans(sep);
  REQUIRE(two.plans.size() == 2);
  CHECK(two.plans[0].shape == PlanShape::J);
  CHECK(two.plans[1].shape == PlanShape::A);
  CHECK_FALSE(two.warnings.empty());
}

TEST_CASE("run: budget, replay, best") {
  const auto obj = make_benchmark("conditional_quadratic_3");
  const auto r = run_plan(PlanSpec{PlanShape::J}, obj, Budget::evaluations(10), 4);
  CHECK(r.history.size() == 10);
  CHECK(r.evaluations == 10);
  check_best_matches_history(r);

  for (auto shape : {PlanShape::C, PlanShape::A, PlanShape::AC, PlanShape::CA}) {
    const auto a = run_plan(PlanSpec{shape}, obj, Budget::evaluations(57), 9);
    const auto b = run_plan(PlanSpec{shape}, obj, Budget::evaluations(57), 9);
    CHECK(a.history.size() == 57);
    check_best_matches_history(a);
    CHECK(a.best_config == b.best_config);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
      REQUIRE(a.history[i].observation.config == b.history[i].observation.config);
      REQUIRE(a.history[i].observation.loss == b.history[i].observation.loss);
    }
  }
}

TEST_CASE("run: nothing succeeds") {
  Objective obj;
  obj.name = "broken";
  obj.space = SearchSpace("b", {VariableSpec{"x", RealDomain{0, 1}, 0.5, {}, {}}});
  obj.eval_fn = [](const Configuration&, double, std::uint64_t) -> Evaluation { throw std::runtime_error("boom"); };
  CHECK_THROWS_AS(run_plan(PlanSpec{PlanShape::J}, obj, Budget::evaluations(4), 0), RunError);
}

TEST_CASE("run: seconds budget") {
  const auto obj = make_benchmark("branin");
  const auto r = run_plan(PlanSpec{PlanShape::J}, obj, Budget::seconds(0.3), 0);
  CHECK(r.evaluations > 0);
  CHECK(r.wall_seconds >= 0.3);
}

TEST_CASE("progressive") {
  const auto obj = make_benchmark("conditional_quadratic_adversarial");
  ProgressiveTrace trace;
  const auto r = run_progressive(obj, Budget::evaluations(20), 0, {}, &trace);
  CHECK(trace.screening_counts == std::vector<std::size_t>{2, 2, 2});
  CHECK(r.history.size() == 20);
  CHECK(std::get<std::string>(r.best_config.at("arm")) == trace.algorithm);
  // defaults favour a2 on this benchmark
  CHECK(trace.algorithm == "a2");
  CHECK_THROWS_AS(run_progressive(obj, Budget::evaluations(5), 0), PlanError);
  ProgressiveOptions bad;
  bad.stage_fractions = {0.5, 0.5, 0.5};
  CHECK_THROWS(run_progressive(obj, Budget::evaluations(50), 0, bad));
}
