#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "volcano/errors.hpp"
#include "volcano/objective.hpp"
#include "volcano/pipeline.hpp"

using namespace volcano;
using volcano::testing::knn_tree_space;

TEST_CASE("parse: conditional variable") {
  const auto s = parse_space(R"({"name": "s", "variables": [
    {"name": "algo", "type": "cat", "choices": ["knn", "tree"], "default": "knn"},
    {"name": "k", "type": "int", "lo": 1, "hi": 25, "default": 5, "condition": {"parent": "algo", "equals": "knn"}}]})");
  CHECK(s.size() == 2);
  REQUIRE(s.at("k").condition);
  CHECK(s.at("k").condition->parent == "algo");
  CHECK(s.at("k").condition->equals == "knn");
}

TEST_CASE("parse: errors") {
  CHECK_THROWS_WITH_AS(parse_space(R"({"name": "s", "variables": [
    {"name": "x", "type": "real", "lo": 1, "hi": 1, "default": 1}]})"),
                       doctest::Contains("empty real domain"), Error);
  CHECK_THROWS_AS(parse_space(R"({"name": "s", "variables": [
    {"name": "x", "type": "real", "lo": 0, "hi": 1, "default": 0, "log": true}]})"),
                  Error);
  // depth 3 chain
  CHECK_THROWS_AS(parse_space(R"({"name": "s", "variables": [
    {"name": "a", "type": "cat", "choices": ["p", "q"], "default": "p"},
    {"name": "b", "type": "cat", "choices": ["r", "t"], "default": "r", "condition": {"parent": "a", "equals": "p"}},
    {"name": "c", "type": "int", "lo": 0, "hi": 3, "default": 0, "condition": {"parent": "b", "equals": "r"}}]})"),
                  StructureError);
  // missing field is reported with a line number
  CHECK_THROWS_WITH_AS(parse_space("{\"name\": \"s\",\n \"variables\": [\n {\"name\": \"x\", \"type\": \"real\"}]}"),
                       doctest::Contains("line 3"), ParseError);
}

TEST_CASE("bundled pipeline_small space") {
  const auto s = load_space(volcano::testing::space_path("pipeline_small.json"));
  CHECK(s.size() == 11);
  CHECK(s.algorithm_variable() == std::optional<std::string>("algo"));
  CHECK(s == pipeline_space());
}

TEST_CASE("substitute drops non-matching conditionals") {
  const auto s = knn_tree_space();
  const auto sub = substitute(s, {{"algo", std::string("knn")}});
  CHECK(sub.space.names() == std::vector<std::string>{"k", "x"});
  CHECK_FALSE(sub.space.at("k").condition);

  const auto all = substitute(s, {{"algo", std::string("tree")}, {"depth", std::int64_t{3}}, {"x", 0.5}});
  CHECK(all.space.empty());
  const Configuration full = all.complete({}, s);
  CHECK(s.is_valid(full));

  CHECK_THROWS_AS(substitute(s, {{"nope", 1.0}}), NameError);
  CHECK_THROWS_AS(substitute(s, {{"x", 3.0}}), DomainError);
}

TEST_CASE("substitute: f_g equals parent at the merged point") {
  const SearchSpace s("sq", {VariableSpec{"x", RealDomain{-1, 1}, 0.0, {}, {}},
                             VariableSpec{"y", RealDomain{-1, 1}, 0.0, {}, {}}});
  auto f = [](const Configuration& c) {
    const double x = std::get<double>(c.at("x")), y = std::get<double>(c.at("y"));
    return x * x + y * y;
  };
  const auto sub = substitute(s, {{"x", 0.5}});
  for (double y : {-1.0, 0.0, 1.0}) {
    const Configuration full = sub.complete({{"y", y}}, s);
    CHECK(f(full) == doctest::Approx(0.25 + y * y));
  }
}

TEST_CASE("substitution composes") {
  const auto s = pipeline_space();
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const Configuration c = sample_one(s, rng);
    Configuration c1, c2;
    for (const auto& [name, value] : c) {
      const double u = rng.uniform();
      if (u < 0.3)
        c1.emplace(name, value);
      else if (u < 0.6)
        c2.emplace(name, value);
    }
    const auto once = substitute(s, merge(c1, c2));
    const auto first = substitute(s, c1);
    Configuration rest;
    for (const auto& [name, value] : c2)
      if (first.space.contains(name)) rest.emplace(name, value);
    const auto twice = substitute(first.space, rest);
    REQUIRE(twice.space == once.space);
  }
}

TEST_CASE("sample") {
  const auto s = pipeline_space();
  Rng a(7), b(7);
  CHECK(sample(s, a, 0).empty());
  const auto x = sample(s, a, 50);
  const auto y = sample(s, b, 50);
  CHECK(x == y);
  for (const auto& c : x) CHECK(s.is_valid(c));

  const SearchSpace logs("l", {VariableSpec{"r", RealDomain{1, 100, true}, 10.0, {}, {}}});
  Rng r(3);
  double sum = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) sum += std::log(std::get<double>(sample_one(logs, r).at("r")));
  const double expected = (std::log(1.0) + std::log(100.0)) / 2.0;
  CHECK(std::abs(sum / n - expected) <= 0.05 * expected);
}

TEST_CASE("encode") {
  const SearchSpace s("e", {VariableSpec{"r", RealDomain{0, 10}, 0.0, {}, {}},
                            VariableSpec{"c", CatDomain{{"a", "b", "c"}}, std::string("a"), {}, {}}});
  CHECK(encode(s, {{"r", 5.0}, {"c", std::string("b")}}) == std::vector<double>{0.5, 0.0, 1.0, 0.0});

  const auto kt = knn_tree_space();
  const auto width = kt.encoded_width();
  Configuration p{{"algo", std::string("tree")}, {"depth", std::int64_t{3}}, {"x", 0.1}};
  const auto e = encode(kt, p);
  CHECK(e.size() == width);
  // k is inactive, so its coordinate is the default's
  CHECK(e == encode(kt, kt.resolve(p)));
  const auto back = decode(kt, e);
  CHECK(back.at("algo") == p.at("algo"));
  CHECK(back.at("depth") == p.at("depth"));
  CHECK_FALSE(back.contains("k"));
  CHECK(std::get<double>(back.at("x")) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("encode is injective on active values") {
  const auto s = pipeline_space();
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const auto a = sample_one(s, rng);
    const auto b = sample_one(s, rng);
    if (a == b) continue;
    const auto ea = encode(s, a), eb = encode(s, b);
    double diff = 0.0;
    for (std::size_t j = 0; j < ea.size(); ++j) diff = std::max(diff, std::abs(ea[j] - eb[j]));
    REQUIRE(diff > 1e-12);
  }
}

TEST_CASE("neighbors") {
  const auto s = knn_tree_space();
  Rng rng(9);
  const Configuration c{{"algo", std::string("knn")}, {"k", std::int64_t{5}}, {"x", 0.0}};
  CHECK(neighbors(s, c, rng, 0).empty());
  bool saw_switch = false;
  for (int i = 0; i < 1000; ++i) {
    for (const auto& n : neighbors(s, c, rng, 1)) {
      REQUIRE(s.is_valid(n));
      if (std::get<std::string>(n.at("algo")) == "tree") {
        saw_switch = true;
        CHECK_FALSE(n.contains("k"));
        CHECK(n.at("depth") == Value{std::int64_t{4}});
      }
    }
  }
  CHECK(saw_switch);
}

TEST_CASE("sample and neighbors satisfy invariants") {
  const auto s = pipeline_space();
  Rng rng(21);
  for (int i = 0; i < 5000; ++i) {
    const auto c = sample_one(s, rng);
    REQUIRE(s.is_valid(c));
    for (const auto& n : neighbors(s, c, rng, 1)) REQUIRE(s.is_valid(n));
  }
}

TEST_CASE("configuration json round trip") {
  const Configuration c{{"a", std::string("x")}, {"i", std::int64_t{-3}}, {"r", 0.1}};
  CHECK(configuration_from_json(to_json(c)) == c);
}
