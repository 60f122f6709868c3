#include "volcano/objective.hpp"

#include <unistd.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sys/wait.h>

#include "volcano/errors.hpp"

namespace volcano {

std::string_view to_string(EvalStatus status) {
  switch (status) {
    case EvalStatus::ok: return "ok";
    case EvalStatus::failed: return "failed";
    case EvalStatus::timeout: return "timeout";
  }
  return "failed";
}

EvalStatus eval_status_from_string(std::string_view text) {
  if (text == "ok") return EvalStatus::ok;
  if (text == "failed") return EvalStatus::failed;
  if (text == "timeout") return EvalStatus::timeout;
  throw ParseError("unknown status '" + std::string(text) + "'");
}

std::vector<double> Predictions::labels() const {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (cols == 1) {
      out[r] = at(r, 0);
      continue;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (at(r, c) > at(r, best)) best = c;
    out[r] = static_cast<double>(best);
  }
  return out;
}

Evaluation Objective::evaluate(const Configuration& config, double fidelity, std::uint64_t seed) const {
  space.validate(config);
  Evaluation result;
  try {
    result = eval_fn(config, fidelity, seed);
  } catch (const std::exception& e) {
    result.status = EvalStatus::failed;
    result.message = e.what();
  }
  if (result.status == EvalStatus::ok && !std::isfinite(result.loss)) {
    result.status = EvalStatus::failed;
    result.message = "non-finite loss";
  }
  return result;
}

// ---------------------------------------------------------------------------
// Metrics

std::string_view to_string(Metric metric) {
  return metric == Metric::balanced_accuracy ? "balanced_accuracy" : "mse";
}

Metric metric_from_string(std::string_view text) {
  if (text == "balanced_accuracy") return Metric::balanced_accuracy;
  if (text == "mse") return Metric::mse;
  throw ConfigError("unknown metric '" + std::string(text) + "' (expected balanced_accuracy or mse)");
}

double score(Metric metric, std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.empty() || labels.empty()) throw DomainError("score: empty inputs");
  if (predictions.size() != labels.size()) throw DomainError("score: length mismatch");
  if (metric == Metric::mse) {
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const double r = predictions[i] - labels[i];
      total += r * r;
    }
    return total / static_cast<double>(labels.size());
  }
  std::map<double, std::pair<std::size_t, std::size_t>> per_class;  // label -> (hits, count)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& [hits, count] = per_class[labels[i]];
    ++count;
    if (predictions[i] == labels[i]) ++hits;
  }
  double total = 0.0;
  for (const auto& [label, hc] : per_class)
    total += static_cast<double>(hc.first) / static_cast<double>(hc.second);
  return total / static_cast<double>(per_class.size());
}

double score(Metric metric, const Predictions& predictions, std::span<const double> labels) {
  if (predictions.rows == 0 || labels.empty()) throw DomainError("score: empty inputs");
  if (metric == Metric::balanced_accuracy) {
    if (predictions.cols < 2) throw DomainError("score: balanced_accuracy needs class probabilities");
    for (double label : labels)
      if (label < 0 || label >= static_cast<double>(predictions.cols))
        throw DomainError("score: class " + std::to_string(static_cast<long>(label)) +
                          " is outside the prediction domain");
  } else if (predictions.cols != 1) {
    throw DomainError("score: mse needs one prediction column");
  }
  const auto predicted = predictions.labels();
  return score(metric, predicted, labels);
}

double metric_loss(Metric metric, double metric_value) {
  return metric == Metric::balanced_accuracy ? 1.0 - metric_value : metric_value;
}

// ---------------------------------------------------------------------------
// Synthetic benchmarks

Objective make_conditional_quadratic(const ConditionalQuadraticParams& p, std::string name) {
  const std::size_t k = p.arms.size();
  if (k == 0) throw DomainError("conditional_quadratic: no arms");
  if (p.offsets.size() != k || p.optima.size() != k)
    throw DomainError("conditional_quadratic: offsets/optima must match the arm count");
  if (std::set<std::string>(p.arms.begin(), p.arms.end()).size() != k)
    throw DomainError("conditional_quadratic: duplicate arm names");
  if (!(p.noise_sigma >= 0.0)) throw DomainError("conditional_quadratic: noise sigma must be >= 0");

  std::vector<VariableSpec> vars;
  vars.push_back({"arm", CatDomain{p.arms}, p.arms.front(), std::nullopt, VarGroup::algorithm});
  vars.push_back({"u", RealDomain{p.lo, p.hi, false}, 0.0, std::nullopt, VarGroup::feature});
  vars.push_back({"v", RealDomain{p.lo, p.hi, false}, 0.0, std::nullopt, VarGroup::hyper});
  Objective obj;
  obj.name = name;
  obj.space = SearchSpace(std::move(name), std::move(vars), "arm");
  obj.eval_fn = [p](const Configuration& c, double, std::uint64_t seed) {
    const auto& arm = std::get<std::string>(c.at("arm"));
    const auto i = static_cast<std::size_t>(std::find(p.arms.begin(), p.arms.end(), arm) - p.arms.begin());
    const double u = std::get<double>(c.at("u"));
    const double v = std::get<double>(c.at("v"));
    const double du = u - p.optima[i].first;
    const double dv = v - p.optima[i].second;
    Evaluation e;
    e.loss = p.offsets[i] + du * du + dv * dv;
    if (p.noise_sigma > 0.0) {
      Rng rng(seed);
      e.loss += p.noise_sigma * rng.normal();
    }
    return e;
  };
  const bool nonneg = p.noise_sigma == 0.0 &&
                      std::all_of(p.offsets.begin(), p.offsets.end(), [](double b) { return b >= 0.0; });
  if (nonneg) obj.loss_floor = 0.0;
  return obj;
}

double branin(double x1, double x2) {
  constexpr double pi = std::numbers::pi;
  const double a = 1.0;
  const double b = 5.1 / (4.0 * pi * pi);
  const double c = 5.0 / pi;
  const double r = 6.0;
  const double s = 10.0;
  const double t = 1.0 / (8.0 * pi);
  const double q = x2 - b * x1 * x1 + c * x1 - r;
  return a * q * q + s * (1.0 - t) * std::cos(x1) + s;
}

Objective make_branin(double shift) {
  std::vector<VariableSpec> vars;
  vars.push_back({"x1", RealDomain{-5.0, 10.0, false}, 2.5, std::nullopt, VarGroup::feature});
  vars.push_back({"x2", RealDomain{0.0, 15.0, false}, 7.5, std::nullopt, VarGroup::hyper});
  Objective obj;
  obj.name = shift == 0.0 ? "branin" : "branin_shifted";
  obj.space = SearchSpace(obj.name, std::move(vars));
  obj.eval_fn = [shift](const Configuration& c, double, std::uint64_t) {
    Evaluation e;
    e.loss = branin(std::get<double>(c.at("x1")), std::get<double>(c.at("x2"))) + shift;
    return e;
  };
  if (0.397887 + shift >= 0.0) obj.loss_floor = 0.0;
  return obj;
}

Objective make_separable_quadratic(const SeparableQuadraticParams& p, std::string name) {
  if (p.y_optimum.empty() || p.z_optimum.empty())
    throw DomainError("separable_quadratic: both variable groups must be non-empty");
  std::vector<VariableSpec> vars;
  for (std::size_t i = 0; i < p.y_optimum.size(); ++i)
    vars.push_back({"y" + std::to_string(i + 1), RealDomain{p.lo, p.hi, false}, 0.0, std::nullopt,
                    VarGroup::feature});
  for (std::size_t i = 0; i < p.z_optimum.size(); ++i)
    vars.push_back({"z" + std::to_string(i + 1), RealDomain{p.lo, p.hi, false}, 0.0, std::nullopt,
                    VarGroup::hyper});
  Objective obj;
  obj.name = name;
  obj.space = SearchSpace(std::move(name), std::move(vars));
  obj.eval_fn = [p](const Configuration& c, double, std::uint64_t) {
    Evaluation e;
    e.loss = 0.0;
    for (std::size_t i = 0; i < p.y_optimum.size(); ++i) {
      const double d = std::get<double>(c.at("y" + std::to_string(i + 1))) - p.y_optimum[i];
      e.loss += d * d;
    }
    for (std::size_t i = 0; i < p.z_optimum.size(); ++i) {
      const double d = std::get<double>(c.at("z" + std::to_string(i + 1))) - p.z_optimum[i];
      e.loss += d * d;
    }
    return e;
  };
  obj.loss_floor = 0.0;
  return obj;
}

Objective make_synthetic_objective(SyntheticKind kind, const SyntheticParams& params) {
  switch (kind) {
    case SyntheticKind::conditional_quadratic: return make_conditional_quadratic(params.conditional);
    case SyntheticKind::branin: return make_branin(params.branin_shift);
    case SyntheticKind::separable_quadratic: return make_separable_quadratic(params.separable);
  }
  throw DomainError("unknown synthetic kind");
}

namespace {

ConditionalQuadraticParams spread_arms(std::size_t k, double gap, std::size_t best_index, double noise) {
  ConditionalQuadraticParams p;
  for (std::size_t i = 0; i < k; ++i) {
    p.arms.push_back("a" + std::to_string(i + 1));
    // Offsets grow with distance from the best arm, in steps of `gap`.
    const auto rank = static_cast<double>(i >= best_index ? i - best_index : k - best_index + i);
    p.offsets.push_back(gap * rank);
    const double t = static_cast<double>(i);
    p.optima.emplace_back(3.5 * std::sin(1.3 * t + 0.5), 3.5 * std::cos(0.7 * t + 1.1));
  }
  p.noise_sigma = noise;
  return p;
}

}  // namespace

std::vector<std::string> benchmark_names() {
  return {"conditional_quadratic_3",     "conditional_quadratic_3_noisy", "conditional_quadratic_4_wide",
          "conditional_quadratic_5",     "conditional_quadratic_8",       "conditional_quadratic_adversarial",
          "conditional_quadratic_6",     "branin",                        "branin_shifted",
          "separable_quadratic"};
}

std::vector<std::string> synthetic_suite() {
  return {"conditional_quadratic_3", "conditional_quadratic_3_noisy", "conditional_quadratic_4_wide",
          "conditional_quadratic_5", "conditional_quadratic_8",       "conditional_quadratic_adversarial"};
}

Objective make_benchmark(const std::string& name) {
  if (name == "conditional_quadratic_3") {
    ConditionalQuadraticParams p;
    p.arms = {"a1", "a2", "a3"};
    p.offsets = {0.0, 0.5, 1.0};
    p.optima = {{1.5, -2.0}, {-1.0, 2.5}, {3.0, 0.5}};
    return make_conditional_quadratic(p, name);
  }
  if (name == "conditional_quadratic_3_noisy") {
    ConditionalQuadraticParams p;
    p.arms = {"a1", "a2", "a3"};
    p.offsets = {0.5, 0.0, 1.0};
    p.optima = {{-2.0, 1.0}, {2.0, 2.0}, {0.5, -3.0}};
    p.noise_sigma = 0.05;
    return make_conditional_quadratic(p, name);
  }
  if (name == "conditional_quadratic_4_wide") {
    ConditionalQuadraticParams p = spread_arms(4, 1.0, 2, 0.0);
    p.lo = -10.0;
    p.hi = 10.0;
    for (auto& [u, v] : p.optima) {
      u *= 2.0;
      v *= 2.0;
    }
    return make_conditional_quadratic(p, name);
  }
  if (name == "conditional_quadratic_5") return make_conditional_quadratic(spread_arms(5, 0.3, 3, 0.0), name);
  if (name == "conditional_quadratic_8") return make_conditional_quadratic(spread_arms(8, 0.25, 5, 0.0), name);
  if (name == "conditional_quadratic_6") {
    // Arms a4..a6 are meant to be added later; a5 beats every original arm.
    ConditionalQuadraticParams p;
    p.arms = {"a1", "a2", "a3", "a4", "a5", "a6"};
    p.offsets = {0.5, 1.0, 1.5, 2.0, 0.0, 2.5};
    p.optima = {{1.5, -2.0}, {-1.0, 2.5}, {3.0, 0.5}, {-3.0, -1.0}, {0.5, 1.5}, {2.0, 3.0}};
    return make_conditional_quadratic(p, name);
  }
  if (name == "conditional_quadratic_adversarial") {
    // At the defaults (u, v) = (0, 0) arm a2 looks best, yet a1 holds the optimum.
    ConditionalQuadraticParams p;
    p.arms = {"a1", "a2", "a3"};
    p.offsets = {0.0, 1.0, 2.0};
    p.optima = {{4.0, 4.0}, {0.5, -0.5}, {-4.0, -4.0}};
    return make_conditional_quadratic(p, name);
  }
  if (name == "branin") return make_branin(0.0);
  if (name == "branin_shifted") return make_branin(-0.397887);
  if (name == "separable_quadratic") {
    SeparableQuadraticParams p;
    p.y_optimum = {1.0, -2.0};
    p.z_optimum = {-1.5, 2.5};
    return make_separable_quadratic(p, name);
  }
  throw ConfigError("unknown benchmark '" + name + "'");
}

// ---------------------------------------------------------------------------
// External command objective

Objective make_command_objective(SearchSpace space, std::string command) {
  Objective obj;
  obj.name = "command";
  obj.space = std::move(space);
  obj.eval_fn = [command](const Configuration& config, double fidelity, std::uint64_t seed) {
    Evaluation e;
    std::string path = (std::filesystem::temp_directory_path() / "volcano_cfg_XXXXXX").string();
    const int fd = ::mkstemp(path.data());
    if (fd < 0) {
      e.status = EvalStatus::failed;
      e.message = "cannot create temporary file";
      return e;
    }
    nlohmann::json payload = to_json(config);
    const std::string text = payload.dump() + "\n";
    const bool written = ::write(fd, text.data(), text.size()) == static_cast<ssize_t>(text.size());
    ::close(fd);
    if (!written) {
      std::filesystem::remove(path);
      e.status = EvalStatus::failed;
      e.message = "cannot write configuration";
      return e;
    }
    // The subshell makes the redirect cover compound templates.
    const std::string full = "export VOLCANO_FIDELITY=" + std::to_string(fidelity) +
                             " VOLCANO_SEED=" + std::to_string(seed) + "; (" + command + "\n) < '" + path + "'";
    FILE* pipe = ::popen(full.c_str(), "r");
    if (pipe == nullptr) {
      std::filesystem::remove(path);
      e.status = EvalStatus::failed;
      e.message = "cannot start command";
      return e;
    }
    std::string output;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) output.append(buf.data(), n);
    const int status = ::pclose(pipe);
    std::filesystem::remove(path);
    if (status != 0) {
      e.status = EvalStatus::failed;
      e.message = "command exited with status " + std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : status);
      return e;
    }
    try {
      // The last non-empty line carries the result.
      auto end = output.find_last_not_of(" \n\r\t");
      auto begin = output.rfind('\n', end == std::string::npos ? 0 : end);
      const auto line = output.substr(begin == std::string::npos ? 0 : begin + 1);
      const auto j = nlohmann::json::parse(line);
      e.loss = j.at("loss").get<double>();
    } catch (const std::exception& ex) {
      e.status = EvalStatus::failed;
      e.message = std::string("unparseable command output: ") + ex.what();
    }
    return e;
  };
  return obj;
}

}  // namespace volcano
