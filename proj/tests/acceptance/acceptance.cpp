// Prints one PASS/FAIL line per acceptance criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>

#include "volcano/cli.hpp"
#include "volcano/ensemble.hpp"
#include "volcano/history.hpp"
#include "volcano/meta.hpp"
#include "volcano/pipeline.hpp"
#include "volcano/plan.hpp"

using namespace volcano;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double best_within(const std::vector<HistoryRecord>& h, std::size_t k) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < std::min(k, h.size()); ++i)
    if (h[i].observation.ok()) best = std::min(best, *h[i].observation.loss);
  return best;
}

// 1-based index of the first evaluation reaching `threshold`, size + 1 if none.
double first_hit(const std::vector<HistoryRecord>& h, double threshold) {
  for (std::size_t i = 0; i < h.size(); ++i)
    if (h[i].observation.ok() && *h[i].observation.loss <= threshold) return static_cast<double>(i + 1);
  return static_cast<double>(h.size() + 1);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome subgoal_algebra() {
  const auto space = pipeline_space();
  const auto quad = make_benchmark("conditional_quadratic_3");
  Rng rng(101);
  std::size_t bad_compose = 0, bad_equiv = 0;
  const int cases = 10000;
  for (int t = 0; t < cases; ++t) {
    const bool pipeline = t % 2 == 0;
    const SearchSpace& s = pipeline ? space : quad.space;
    const Configuration c = sample_one(s, rng);
    Configuration c1, c2, rest;
    for (const auto& [name, value] : c) {
      const double u = rng.uniform();
      (u < 0.35 ? c1 : u < 0.7 ? c2 : rest).emplace(name, value);
    }
    // composition: fixing c1 then c2 equals fixing both at once
    const auto once = substitute(s, merge(c1, c2));
    const auto first = substitute(s, c1);
    const auto twice = substitute(first.space, project(c2, first.space));
    if (!(twice.space == once.space)) ++bad_compose;

    // parent equivalence: the subgoal completed with the free part is the parent point
    const auto sub = substitute(s, merge(c1, c2));
    const Configuration full = sub.complete(project(c, sub.space), s);
    if (full != c) ++bad_equiv;
    if (!pipeline) {
      const auto a = quad.evaluate(full, 1.0, 0), b = quad.evaluate(c, 1.0, 0);
      if (a.loss != b.loss) ++bad_equiv;
    }
  }
  return {bad_compose == 0 && bad_equiv == 0,
          fmt("%d cases, %zu composition and %zu equivalence mismatches", cases, bad_compose, bad_equiv)};
}

Outcome surrogate_correctness() {
  Rng rng(202);
  double worst_interp = 0.0, worst_far = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int n = 5 + static_cast<int>(rng.index(25)), d = 1 + static_cast<int>(rng.index(4));
    Eigen::MatrixXd x(n, d);
    std::vector<double> y;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) x(i, j) = rng.uniform();
      y.push_back(std::sin(5 * x(i, 0)) + (d > 1 ? x(i, 1) * x(i, 1) : 0.0));
    }
    const auto gp = GPModel::fit(x, y, 1e-6);
    for (int i = 0; i < n; ++i) {
      std::vector<double> row;
      for (int j = 0; j < d; ++j) row.push_back(x(i, j));
      worst_interp = std::max(worst_interp, std::abs(gp.predict(row).mean - y[i]));
    }
    const std::vector<double> far(static_cast<std::size_t>(d), 100.0);
    worst_far = std::max(worst_far, std::abs(gp.predict(far).variance / gp.prior_variance() - 1.0));
  }

  double worst_ei = 0.0;
  const int draws = 1000000;
  for (const auto& [mean, sd, best] : std::vector<std::tuple<double, double, double>>{
           {1.0, 1.0, 1.0}, {0.5, 0.3, 0.2}, {-1.0, 2.0, 0.0}, {0.0, 0.1, 0.3}}) {
    double sum = 0.0;
    for (int i = 0; i < draws; ++i) sum += std::max(0.0, best - rng.normal(mean, sd));
    worst_ei = std::max(worst_ei, std::abs(sum / draws - expected_improvement({mean, sd * sd}, best)));
  }
  return {worst_interp <= 1e-3 && worst_far <= 0.01 && worst_ei <= 1e-2,
          fmt("interpolation error %.2e, far-field variance error %.2e, EI Monte-Carlo error %.2e", worst_interp,
              worst_far, worst_ei)};
}

Outcome elimination_soundness() {
  const auto obj = make_benchmark("conditional_quadratic_3");
  int failures = 0, single = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto root = build_plan(PlanSpec{PlanShape::C}, obj);
    RunContext ctx(obj, Budget::evaluations(1000), s);
    auto& cb = dynamic_cast<ConditioningBlock&>(*root);
    bool lost = false;
    for (int round = 0; round < 30; ++round) {
      root->pull(ctx);
      lost = lost || !cb.active()[0];
    }
    failures += lost;
    single += cb.active_count() <= 1;
  }
  return {failures == 0 && single >= 18, fmt("optimal arm eliminated in %d/20 seeds, <= 1 arm active in %d/20", failures, single)};
}

Outcome alternating() {
  const auto obj = make_benchmark("separable_quadratic");
  int solved = 0;
  std::vector<double> alt20, alt40, alt60, rnd20, rnd40, rnd60;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto r = run_plan(PlanSpec{PlanShape::A}, obj, Budget::evaluations(60), s);
    solved += r.best_loss <= 1e-2;
    alt20.push_back(best_within(r.history, 20));
    alt40.push_back(best_within(r.history, 40));
    alt60.push_back(r.best_loss);

    Rng rng(mix_seed(s, 0xbadc0de));
    double best = std::numeric_limits<double>::infinity();
    for (int i = 1; i <= 60; ++i) {
      best = std::min(best, obj.evaluate(sample_one(obj.space, rng), 1.0, s).loss);
      if (i == 20) rnd20.push_back(best);
      if (i == 40) rnd40.push_back(best);
    }
    rnd60.push_back(best);
  }
  const bool beats = median(alt20) <= median(rnd20) && median(alt40) <= median(rnd40) && median(alt60) <= median(rnd60);
  return {solved >= 9 && beats,
          fmt("%d/10 seeds <= 1e-2; median best at 20/40/60 evals %.3g/%.3g/%.3g vs random %.3g/%.3g/%.3g", solved,
              median(alt20), median(alt40), median(alt60), median(rnd20), median(rnd40), median(rnd60))};
}

Outcome plan_ca() {
  const auto obj = make_benchmark("conditional_quadratic_3");
  int hits = 0;
  for (std::uint64_t s = 0; s < 20; ++s) hits += run_plan(PlanSpec{PlanShape::CA}, obj, Budget::evaluations(200), s).best_loss <= 1e-2;
  return {hits >= 18, fmt("%d/20 seeds within 1e-2 of the optimum", hits)};
}

Outcome plan_comparison() {
  const auto report = cmd_compare_plans(synthetic_suite(), CompareOptions{});
  auto rank_of = [&](const std::string& plan) {
    const auto it = std::find(report.plans.begin(), report.plans.end(), plan);
    return report.average_rank.at(static_cast<std::size_t>(it - report.plans.begin()));
  };
  std::string ranks;
  for (std::size_t i = 0; i < report.plans.size(); ++i) ranks += fmt(" %s=%.2f", report.plans[i].c_str(), report.average_rank[i]);
  return {rank_of("CA") <= rank_of("J"), fmt("%zu tasks, average ranks:%s", report.tasks.size(), ranks.c_str())};
}

Outcome progressive_vs_bandit() {
  const auto obj = make_benchmark("conditional_quadratic_adversarial");
  int wins = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const double bandit = run_plan(PlanSpec{PlanShape::CA}, obj, Budget::evaluations(150), s).best_loss;
    const double progressive = run_progressive(obj, Budget::evaluations(150), s).best_loss;
    wins += bandit <= progressive;
  }
  return {wins >= 8, fmt("bandit CA <= progressive in %d/10 seeds at 150 evaluations", wins)};
}

Outcome continue_tuning() {
  ConditionalQuadraticParams p;
  p.arms = {"a1", "a2", "a3", "a4"};
  p.offsets = {0.5, 1.5, 2.5, 3.5};
  p.optima = {{1, -1}, {0, 0}, {-2, 2}, {2, 2}};
  const auto obj = make_conditional_quadratic(p, "continue_tuning");
  auto root = build_plan(PlanSpec{PlanShape::C}, obj);
  RunContext ctx(obj, Budget::evaluations(400), 0);
  auto& cb = dynamic_cast<ConditioningBlock&>(*root);
  while (cb.active_count() > 1 && !ctx.exhausted()) root->pull(ctx);
  const bool one_survivor = cb.active_count() == 1 && cb.active()[0];

  std::vector<std::size_t> frozen;
  for (std::size_t i = 1; i < 4; ++i) frozen.push_back(cb.child(i).pull_count());

  auto q = p;
  q.arms.insert(q.arms.end(), {"b1", "b2", "b3"});
  q.offsets.insert(q.offsets.end(), {0.0, 1.0, 2.0});
  q.optima.insert(q.optima.end(), {{-1, 1}, {1, 1}, {0, -2}});
  ctx.set_objective(make_conditional_quadratic(q, "continue_tuning"));
  cb.extend_arms({"b1", "b2", "b3"}, ctx);
  const std::size_t before = ctx.history().size();
  for (int round = 0; round < 40 && !ctx.exhausted(); ++round) root->pull(ctx);

  bool untouched = true;
  for (std::size_t i = 1; i < 4; ++i) untouched = untouched && cb.child(i).pull_count() == frozen[i - 1];
  std::size_t old_arm_evals = 0;
  for (std::size_t i = before; i < ctx.history().size(); ++i) {
    const auto& arm = std::get<std::string>(ctx.history()[i].observation.config.at("arm"));
    old_arm_evals += arm == "a2" || arm == "a3" || arm == "a4";
  }
  const auto [best, reward] = root->get_current_best(ctx);
  const std::string best_arm = std::get<std::string>(best.at("arm"));
  return {one_survivor && untouched && old_arm_evals == 0 && best_arm == "b1" && -reward < 0.5,
          fmt("1 survivor + 3 added; best arm %s loss %.3g; %zu evaluations of eliminated arms after extension",
              best_arm.c_str(), -reward, old_arm_evals)};
}

Outcome ranking_loss_oracle() {
  Rng rng(909);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng.index(15);
    std::vector<double> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform() < 0.5 ? static_cast<double>(rng.index(4)) : rng.normal();
      y[i] = rng.uniform() < 0.5 ? static_cast<double>(rng.index(4)) : rng.normal();
    }
    std::size_t brute = 0;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) brute += (p[j] < p[k]) != (y[j] < y[k]);
    mismatches += ranking_loss(p, y) != brute;
  }
  return {mismatches == 0, fmt("%d/1000 instances disagree with the brute-force counter", mismatches)};
}

Outcome rgpe_warm_start() {
  const auto obj = make_benchmark("branin_shifted");
  const std::size_t budget = 60;
  PriorStore store;
  MetaTask prior;
  prior.task_id = "prior";
  prior.history = run_plan(PlanSpec{PlanShape::J}, obj, Budget::evaluations(budget), 1000).history;
  store.tasks.push_back(prior);

  std::vector<double> vanilla, warm;
  for (std::uint64_t s = 0; s < 10; ++s) {
    vanilla.push_back(first_hit(run_plan(PlanSpec{PlanShape::J}, obj, Budget::evaluations(budget), s).history, 0.05));
    auto root = build_plan(PlanSpec{PlanShape::J}, obj);
    attach_meta(*root, store, {});
    RunContext ctx(obj, Budget::evaluations(budget), s);
    warm.push_back(first_hit(run(*root, ctx).history, 0.05));
  }
  const double reduction = 1.0 - median(warm) / median(vanilla);

  // identical prior task against an unrelated one at n_T = 10, S = 100
  auto f = [](double a, double b) { return std::sin(3 * a) + (b - 0.4) * (b - 0.4); };
  Rng rng(1010);
  Eigen::MatrixXd tx(10, 2), bx(60, 2);
  std::vector<double> ty, by, noise;
  for (int i = 0; i < 10; ++i) {
    tx(i, 0) = rng.uniform();
    tx(i, 1) = rng.uniform();
    ty.push_back(f(tx(i, 0), tx(i, 1)));
  }
  for (int i = 0; i < 60; ++i) {
    bx(i, 0) = rng.uniform();
    bx(i, 1) = rng.uniform();
    by.push_back(f(bx(i, 0), bx(i, 1)));
    noise.push_back(rng.normal());
  }
  const auto target = GPModel::fit(tx, ty, 1e-6);
  const auto identical = GPModel::fit(bx, by, 1e-6);
  const auto unrelated = GPModel::fit(bx, noise, 1e-6);
  const std::vector<const GPModel*> base{&identical, &unrelated};
  const double weight = rgpe_weights(base, target, ty, 100, rng)[0];

  return {reduction >= 0.25 && weight >= 0.6,
          fmt("median evaluations to loss <= 0.05: %.1f warm vs %.1f vanilla (%.0f%% fewer); identical-task weight %.2f",
              median(warm), median(vanilla), 100 * reduction, weight)};
}

Outcome ranknet() {
  Rng rng(1111);
  const std::vector<std::string> arms{"a", "b", "c", "d"};
  std::vector<RankTriple> small;
  for (int i = 0; i < 12; ++i) {
    RankTriple t;
    for (int j = 0; j < 3; ++j) t.dataset_features.push_back(rng.normal());
    t.better = arm_encoding(arms, arms[rng.index(4)]);
    t.worse = arm_encoding(arms, arms[rng.index(4)]);
    small.push_back(t);
  }
  const RankNetConfig cfg;
  double worst = 0.0;
  for (int point = 0; point < 10; ++point) {
    RankNetModel m(7, 8, rng);
    for (double& p : m.parameters()) p = rng.uniform(-1.0, 1.0);
    const auto g = ranknet_gradient(m, small, cfg);
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
      RankNetModel plus = m, minus = m;
      plus.parameters()[i] += 1e-5;
      minus.parameters()[i] -= 1e-5;
      const double fd = (ranknet_loss(plus, small, cfg) - ranknet_loss(minus, small, cfg)) / 2e-5;
      worst = std::max(worst, std::abs(fd - g[i]) / std::max(1.0, std::abs(fd)));
    }
  }

  // linear rule over dataset features and arm one-hot
  std::vector<double> w;
  for (int i = 0; i < 9; ++i) w.push_back(rng.normal());
  auto corpus = [&](int n) {
    std::vector<RankTriple> out;
    while (static_cast<int>(out.size()) < n) {
      std::vector<double> d;
      for (int i = 0; i < 5; ++i) d.push_back(rng.normal());
      const std::size_t a = rng.index(4), b = rng.index(4);
      if (a == b) continue;
      auto score = [&](const std::vector<double>& e) {
        double s = 0.0;
        for (int i = 0; i < 5; ++i) s += w[i] * d[i];
        for (int i = 0; i < 4; ++i) s += w[5 + i] * e[i];
        return s;
      };
      const auto ea = arm_encoding(arms, arms[a]), eb = arm_encoding(arms, arms[b]);
      out.push_back(score(ea) > score(eb) ? RankTriple{d, ea, eb} : RankTriple{d, eb, ea});
    }
    return out;
  };
  const auto train = corpus(500), test = corpus(200);
  const double accuracy = pairwise_accuracy(train_ranknet(train, {}, rng), test);
  return {worst <= 1e-4 && accuracy >= 0.9,
          fmt("worst gradient relative error %.2e over 10 points; held-out pairwise accuracy %.3f", worst, accuracy)};
}

Outcome ensemble_selection() {
  Rng rng(1212);
  int worse = 0;
  for (int t = 0; t < 1000; ++t) {
    const bool regression = rng.uniform() < 0.3;
    const std::size_t rows = 5 + rng.index(30), cols = regression ? 1 : 2 + rng.index(3);
    std::vector<double> labels;
    for (std::size_t r = 0; r < rows; ++r) labels.push_back(regression ? rng.normal() : static_cast<double>(rng.index(cols)));
    const Metric metric = regression ? Metric::mse : Metric::balanced_accuracy;
    ModelPool pool(10);
    double best = -std::numeric_limits<double>::infinity();
    const std::size_t entries = 1 + rng.index(8);
    for (std::size_t e = 0; e < entries; ++e) {
      Predictions p{rows, cols, {}};
      for (std::size_t i = 0; i < rows * cols; ++i) p.values.push_back(regression ? rng.normal() : rng.uniform());
      const double value = score(metric, p, labels);
      best = std::max(best, regression ? -value : value);
      pool.record("m", {{"x", static_cast<double>(e)}}, p, 0.0);
    }
    const auto sel = ensemble_select(pool, 1 + rng.index(60), metric, labels);
    worse += (regression ? -sel.validation_score : sel.validation_score) < best - 1e-12;
  }

  const std::vector<double> labels{0, 0, 1, 1};
  const Predictions a{4, 2, {0.9, 0.1, 0.4, 0.6, 0.1, 0.9, 0.6, 0.4}};
  const Predictions b{4, 2, {0.4, 0.6, 0.9, 0.1, 0.6, 0.4, 0.1, 0.9}};
  ModelPool pool;
  pool.record("a", {{"x", 1.0}}, a, 0.5);
  pool.record("b", {{"x", 2.0}}, b, 0.5);
  const double single = std::max(score(Metric::balanced_accuracy, a, labels), score(Metric::balanced_accuracy, b, labels));
  const double combined = ensemble_select(pool, kDefaultEnsembleSize, Metric::balanced_accuracy, labels).validation_score;

  ModelPool one;
  one.record("a", {{"x", 1.0}}, a, 0.5);
  const auto size = ensemble_select(one, kDefaultEnsembleSize, Metric::balanced_accuracy, labels).size;

  return {worse == 0 && combined > single && kDefaultEnsembleSize == 50 && size == 50,
          fmt("%d/1000 pools worse than their best entry; complementary pair %.2f vs best single %.2f; default size %zu",
              worse, combined, single, size)};
}

Outcome pipeline_sanity() {
  const auto dataset = load_dataset(std::string(VOLCANO_SOURCE_DIR) + "/data/toy_separable.csv");
  const auto obj = make_pipeline_objective(dataset, Metric::balanced_accuracy);
  const auto r = run_plan(PlanSpec{PlanShape::CA}, obj, Budget::evaluations(100), 0);
  const double ba = holdout_score(dataset, Metric::balanced_accuracy, r.best_config);
  return {ba >= 0.9, fmt("held-out balanced accuracy %.3f after 100 evaluations (validation loss %.3f)", ba, r.best_loss)};
}

Outcome determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "volcano_acceptance";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  RunConfig cfg;
  cfg.source.benchmark = "conditional_quadratic_3";
  cfg.plan = PlanSpec{PlanShape::CA};
  cfg.budget = Budget::evaluations(100);
  cfg.seed = 7;
  cfg.out = (dir / "a.jsonl").string();
  const auto first = cmd_run(cfg);
  cfg.out = (dir / "b.jsonl").string();
  cmd_run(cfg);
  const bool identical = slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl");

  std::size_t lossy = 0;
  const auto back = read_history(dir / "a.jsonl");
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto& x = back[i].observation;
    const auto& y = first.result.history[i].observation;
    lossy += !(back[i].block_path == first.result.history[i].block_path && x.iter == y.iter && x.config == y.config &&
               x.loss == y.loss && x.cost_s == y.cost_s && x.fidelity == y.fidelity && x.status == y.status);
  }
  lossy += back.size() != first.result.history.size();
  std::filesystem::remove_all(dir);
  return {identical && lossy == 0,
          fmt("repeat run %s; %zu/%zu records changed by the JSONL round trip", identical ? "byte-identical" : "differs",
              lossy, first.result.history.size())};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;  // 0: no limit
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "subgoal algebra", 10, subgoal_algebra},
      {2, "surrogate correctness", 60, surrogate_correctness},
      {3, "elimination soundness", 120, elimination_soundness},
      {4, "alternating optimization", 60, alternating},
      {5, "plan CA end-to-end", 180, plan_ca},
      {6, "plan comparison", 900, plan_comparison},
      {7, "progressive vs bandit", 300, progressive_vs_bandit},
      {8, "continue tuning", 60, continue_tuning},
      {9, "ranking loss", 0, ranking_loss_oracle},
      {10, "RGPE warm start", 300, rgpe_warm_start},
      {11, "RankNet", 120, ranknet},
      {12, "ensemble selection", 0, ensemble_selection},
      {13, "pipeline objective sanity", 120, pipeline_sanity},
      {14, "determinism and persistence", 0, determinism},
  };
  // optional list of criterion ids to run
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.check();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.limit_s == 0 || secs < c.limit_s;
    const bool pass = out.pass && in_time;
    failed += !pass;
    std::string timing = fmt("%.1fs", secs);
    if (c.limit_s > 0) timing += fmt(" / limit %.0fs", c.limit_s);
    std::printf("%s %2d %s: %s [%s]\n", pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  return failed;
}
