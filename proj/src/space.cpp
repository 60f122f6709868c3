#include "volcano/space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "volcano/errors.hpp"

namespace volcano {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Values

std::string to_string(const Value& value) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return v;
        } else if constexpr (std::is_same_v<T, double>) {
          std::ostringstream out;
          out.precision(17);
          out << v;
          return out.str();
        } else {
          return std::to_string(v);
        }
      },
      value);
}

json to_json(const Value& value) {
  return std::visit([](const auto& v) { return json(v); }, value);
}

Value value_from_json(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) return j.get<double>();
  throw ParseError("value must be a number or string, got " + j.dump());
}

json to_json(const Configuration& config) {
  json out = json::object();
  for (const auto& [name, value] : config) out[name] = to_json(value);
  return out;
}

Configuration configuration_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("configuration must be a JSON object");
  Configuration config;
  for (const auto& [name, value] : j.items()) config.emplace(name, value_from_json(value));
  return config;
}

std::string_view to_string(VarGroup group) {
  switch (group) {
    case VarGroup::feature: return "feature";
    case VarGroup::algorithm: return "algorithm";
    case VarGroup::hyper: return "hyper";
    case VarGroup::unspecified: break;
  }
  return "unspecified";
}

VarGroup var_group_from_string(std::string_view text) {
  if (text == "feature") return VarGroup::feature;
  if (text == "algorithm") return VarGroup::algorithm;
  if (text == "hyper") return VarGroup::hyper;
  throw ParseError("unknown variable group '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// VariableSpec

namespace {

double as_number(const Value& value) {
  if (const auto* d = std::get_if<double>(&value)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&value)) return static_cast<double>(*i);
  return std::numeric_limits<double>::quiet_NaN();
}

double normalize(const RealDomain& d, double x) {
  if (d.log_scale) return (std::log(x) - std::log(d.lo)) / (std::log(d.hi) - std::log(d.lo));
  return (x - d.lo) / (d.hi - d.lo);
}

double denormalize(const RealDomain& d, double t) {
  t = std::clamp(t, 0.0, 1.0);
  if (d.log_scale) {
    const double x = std::exp(std::log(d.lo) + t * (std::log(d.hi) - std::log(d.lo)));
    return std::clamp(x, d.lo, d.hi);
  }
  return std::clamp(d.lo + t * (d.hi - d.lo), d.lo, d.hi);
}

}  // namespace

bool VariableSpec::contains(const Value& value) const {
  return std::visit(
      [&](const auto& dom) -> bool {
        using D = std::decay_t<decltype(dom)>;
        if constexpr (std::is_same_v<D, RealDomain>) {
          if (std::holds_alternative<std::string>(value)) return false;
          const double x = as_number(value);
          return std::isfinite(x) && x >= dom.lo && x <= dom.hi;
        } else if constexpr (std::is_same_v<D, IntDomain>) {
          const auto* i = std::get_if<std::int64_t>(&value);
          return i != nullptr && *i >= dom.lo && *i <= dom.hi;
        } else {
          const auto* s = std::get_if<std::string>(&value);
          return s != nullptr &&
                 std::find(dom.choices.begin(), dom.choices.end(), *s) != dom.choices.end();
        }
      },
      domain);
}

std::size_t VariableSpec::encoded_width() const {
  if (const auto* c = std::get_if<CatDomain>(&domain)) return c->choices.size();
  return 1;
}

// ---------------------------------------------------------------------------
// SearchSpace

SearchSpace::SearchSpace(std::string name, std::vector<VariableSpec> variables,
                         std::optional<std::string> algorithm_variable)
    : name_(std::move(name)), variables_(std::move(variables)), algorithm_(std::move(algorithm_variable)) {
  std::set<std::string> seen;
  for (auto& var : variables_) {
    if (var.name.empty()) throw StructureError("variable with empty name");
    if (!seen.insert(var.name).second) throw StructureError("duplicate variable '" + var.name + "'");
    std::visit(
        [&](auto& dom) {
          using D = std::decay_t<decltype(dom)>;
          if constexpr (std::is_same_v<D, RealDomain>) {
            if (!(std::isfinite(dom.lo) && std::isfinite(dom.hi)))
              throw DomainError("variable '" + var.name + "': non-finite bounds");
            if (!(dom.lo < dom.hi)) throw DomainError("variable '" + var.name + "': empty real domain");
            if (dom.log_scale && dom.lo <= 0.0)
              throw DomainError("variable '" + var.name + "': log scale requires lo > 0");
            // Integral defaults written without a decimal point are still reals.
            if (const auto* i = std::get_if<std::int64_t>(&var.default_value))
              var.default_value = static_cast<double>(*i);
          } else if constexpr (std::is_same_v<D, IntDomain>) {
            if (dom.lo > dom.hi) throw DomainError("variable '" + var.name + "': empty integer domain");
          } else {
            if (dom.choices.empty()) throw DomainError("variable '" + var.name + "': no categorical choices");
            std::set<std::string> distinct(dom.choices.begin(), dom.choices.end());
            if (distinct.size() != dom.choices.size())
              throw DomainError("variable '" + var.name + "': duplicate categorical choices");
          }
        },
        var.domain);
    if (!var.contains(var.default_value))
      throw DomainError("variable '" + var.name + "': default " + to_string(var.default_value) +
                        " outside domain");
  }
  for (const auto& var : variables_) {
    if (!var.condition) continue;
    const VariableSpec* parent = find(var.condition->parent);
    if (parent == nullptr)
      throw StructureError("variable '" + var.name + "': condition references unknown variable '" +
                           var.condition->parent + "'");
    if (parent->name == var.name) throw StructureError("variable '" + var.name + "': conditions on itself");
    if (!parent->is_categorical())
      throw StructureError("variable '" + var.name + "': condition parent '" + parent->name +
                           "' is not categorical");
    if (!parent->contains(var.condition->equals))
      throw StructureError("variable '" + var.name + "': condition value '" + var.condition->equals +
                           "' is not a choice of '" + parent->name + "'");
    if (parent->condition)
      throw StructureError("variable '" + var.name + "': conditional nesting deeper than 2 (parent '" +
                           parent->name + "' is itself conditional)");
  }
  if (algorithm_) {
    const VariableSpec* algo = find(*algorithm_);
    if (algo == nullptr) throw StructureError("algorithm variable '" + *algorithm_ + "' not declared");
    if (!algo->is_categorical() || algo->condition)
      throw StructureError("algorithm variable '" + *algorithm_ + "' must be unconditional categorical");
  }
}

const VariableSpec* SearchSpace::find(std::string_view name) const {
  for (const auto& var : variables_)
    if (var.name == name) return &var;
  return nullptr;
}

const VariableSpec& SearchSpace::at(std::string_view name) const {
  if (const auto* var = find(name)) return *var;
  throw NameError("unknown variable '" + std::string(name) + "' in space '" + name_ + "'");
}

std::vector<std::string> SearchSpace::names() const {
  std::vector<std::string> out;
  out.reserve(variables_.size());
  for (const auto& var : variables_) out.push_back(var.name);
  return out;
}

VarGroup SearchSpace::group_of(const VariableSpec& var) const {
  if (var.group != VarGroup::unspecified) return var.group;
  if (algorithm_) {
    if (var.name == *algorithm_) return VarGroup::algorithm;
    if (var.condition && var.condition->parent == *algorithm_) return VarGroup::hyper;
  }
  if (var.condition) {
    if (const auto* parent = find(var.condition->parent); parent != nullptr && parent != &var)
      return group_of(*parent) == VarGroup::algorithm ? VarGroup::hyper : group_of(*parent);
  }
  return VarGroup::feature;
}

std::size_t SearchSpace::encoded_width() const {
  std::size_t width = 0;
  for (const auto& var : variables_) width += var.encoded_width();
  return width;
}

bool SearchSpace::is_active(const VariableSpec& var, const Configuration& config) const {
  if (!var.condition) return true;
  auto it = config.find(var.condition->parent);
  if (it == config.end()) return false;
  const auto* label = std::get_if<std::string>(&it->second);
  return label != nullptr && *label == var.condition->equals;
}

bool SearchSpace::is_valid(const Configuration& config) const {
  try {
    validate(config);
    return true;
  } catch (const Error&) {
    return false;
  }
}

void SearchSpace::validate(const Configuration& config) const {
  for (const auto& [name, value] : config) {
    const VariableSpec* var = find(name);
    if (var == nullptr) throw NameError("configuration assigns unknown variable '" + name + "'");
    if (!is_active(*var, config)) throw DomainError("configuration assigns inactive variable '" + name + "'");
    if (!var->contains(value))
      throw DomainError("value " + to_string(value) + " outside the domain of '" + name + "'");
  }
  for (const auto& var : variables_) {
    if (is_active(var, config) && !config.contains(var.name))
      throw DomainError("active variable '" + var.name + "' is unassigned");
  }
}

Configuration SearchSpace::defaults() const { return resolve({}); }

Configuration SearchSpace::resolve(const Configuration& partial) const {
  Configuration out;
  // Unconditional variables first: conditions only reference those.
  for (const auto& var : variables_) {
    if (var.condition) continue;
    auto it = partial.find(var.name);
    out[var.name] = (it != partial.end() && var.contains(it->second)) ? it->second : var.default_value;
  }
  for (const auto& var : variables_) {
    if (!var.condition || !is_active(var, out)) continue;
    auto it = partial.find(var.name);
    out[var.name] = (it != partial.end() && var.contains(it->second)) ? it->second : var.default_value;
  }
  return out;
}

SearchSpace SearchSpace::restrict_to(std::span<const std::string> names, std::string name) const {
  std::vector<VariableSpec> kept;
  const std::set<std::string> wanted(names.begin(), names.end());
  for (const auto& var : variables_) {
    if (!wanted.contains(var.name)) continue;
    VariableSpec copy = var;
    copy.group = group_of(var);
    if (copy.condition && !wanted.contains(copy.condition->parent)) copy.condition.reset();
    kept.push_back(std::move(copy));
  }
  std::optional<std::string> algo;
  if (algorithm_ && wanted.contains(*algorithm_)) algo = algorithm_;
  return SearchSpace(std::move(name), std::move(kept), std::move(algo));
}

SearchSpace SearchSpace::concat(const SearchSpace& a, const SearchSpace& b, std::string name) {
  std::vector<VariableSpec> vars;
  for (const auto& var : a.variables_) {
    VariableSpec copy = var;
    copy.group = a.group_of(var);
    vars.push_back(std::move(copy));
  }
  for (const auto& var : b.variables_) {
    VariableSpec copy = var;
    copy.group = b.group_of(var);
    vars.push_back(std::move(copy));
  }
  auto algo = a.algorithm_ ? a.algorithm_ : b.algorithm_;
  return SearchSpace(std::move(name), std::move(vars), std::move(algo));
}

namespace {

bool same_domain(const Domain& a, const Domain& b) {
  if (a.index() != b.index()) return false;
  if (const auto* ra = std::get_if<RealDomain>(&a)) {
    const auto& rb = std::get<RealDomain>(b);
    return ra->lo == rb.lo && ra->hi == rb.hi && ra->log_scale == rb.log_scale;
  }
  if (const auto* ia = std::get_if<IntDomain>(&a)) {
    const auto& ib = std::get<IntDomain>(b);
    return ia->lo == ib.lo && ia->hi == ib.hi;
  }
  return std::get<CatDomain>(a).choices == std::get<CatDomain>(b).choices;
}

}  // namespace

bool operator==(const SearchSpace& a, const SearchSpace& b) {
  if (a.name_ != b.name_ || a.algorithm_ != b.algorithm_ || a.variables_.size() != b.variables_.size())
    return false;
  for (std::size_t i = 0; i < a.variables_.size(); ++i) {
    const auto& x = a.variables_[i];
    const auto& y = b.variables_[i];
    if (x.name != y.name || !same_domain(x.domain, y.domain) || x.default_value != y.default_value ||
        x.condition != y.condition || a.group_of(x) != b.group_of(y))
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + offset, '\n'));
}

// Best-effort source line for variable `index` (named `name` when known).
std::size_t line_of_variable(std::string_view text, std::size_t index, const std::string& name) {
  if (text.empty()) return 0;
  if (!name.empty()) {
    const std::string needle = "\"" + name + "\"";
    if (auto pos = text.find(needle); pos != std::string_view::npos) return line_of_offset(text, pos);
  }
  auto pos = text.find("\"variables\"");
  if (pos == std::string_view::npos) return 0;
  pos = text.find('[', pos);
  std::size_t seen = 0;
  int depth = 0;
  for (std::size_t i = pos + 1; i < text.size(); ++i) {
    if (text[i] == '{') {
      if (depth == 0) {
        if (seen == index) return line_of_offset(text, i);
        ++seen;
      }
      ++depth;
    } else if (text[i] == '}') {
      --depth;
    }
  }
  return line_of_offset(text, pos);
}

SearchSpace parse_space_impl(const json& doc, std::string_view text) {
  auto fail = [&](std::size_t index, const std::string& var, const std::string& field, const std::string& what) {
    std::ostringstream msg;
    msg << "space schema error";
    if (auto line = line_of_variable(text, index, var); line > 0) msg << " at line " << line;
    msg << ": field '" << field << "'";
    if (!var.empty()) msg << " of variable '" << var << "'";
    msg << ": " << what;
    throw ParseError(msg.str());
  };
  if (!doc.is_object()) throw ParseError("space schema error at line 1: document must be an object");
  if (!doc.contains("name") || !doc["name"].is_string())
    throw ParseError("space schema error at line 1: field 'name' missing or not a string");
  if (!doc.contains("variables") || !doc["variables"].is_array())
    throw ParseError("space schema error at line 1: field 'variables' missing or not an array");

  std::vector<VariableSpec> vars;
  std::size_t index = 0;
  for (const auto& entry : doc["variables"]) {
    std::string vname;
    if (!entry.is_object()) fail(index, "", "variables", "entry must be an object");
    if (!entry.contains("name") || !entry["name"].is_string()) fail(index, "", "name", "missing or not a string");
    vname = entry["name"].get<std::string>();
    if (!entry.contains("type") || !entry["type"].is_string()) fail(index, vname, "type", "missing or not a string");
    const auto type = entry["type"].get<std::string>();
    VariableSpec var;
    var.name = vname;
    auto number = [&](const char* field) -> double {
      if (!entry.contains(field) || !entry[field].is_number()) fail(index, vname, field, "missing or not a number");
      return entry[field].get<double>();
    };
    if (type == "real") {
      RealDomain dom{number("lo"), number("hi"), false};
      if (entry.contains("log")) {
        if (!entry["log"].is_boolean()) fail(index, vname, "log", "must be a boolean");
        dom.log_scale = entry["log"].get<bool>();
      }
      if (!(dom.lo < dom.hi)) fail(index, vname, "lo/hi", "empty real domain");
      var.domain = dom;
    } else if (type == "int") {
      auto integer = [&](const char* field) -> std::int64_t {
        if (!entry.contains(field) || !entry[field].is_number_integer())
          fail(index, vname, field, "missing or not an integer");
        return entry[field].get<std::int64_t>();
      };
      IntDomain dom{integer("lo"), integer("hi")};
      if (dom.lo > dom.hi) fail(index, vname, "lo/hi", "empty integer domain");
      var.domain = dom;
    } else if (type == "cat") {
      if (!entry.contains("choices") || !entry["choices"].is_array() || entry["choices"].empty())
        fail(index, vname, "choices", "missing or empty");
      CatDomain dom;
      for (const auto& c : entry["choices"]) {
        if (!c.is_string()) fail(index, vname, "choices", "labels must be strings");
        dom.choices.push_back(c.get<std::string>());
      }
      var.domain = dom;
    } else {
      fail(index, vname, "type", "must be one of real|int|cat, got '" + type + "'");
    }
    if (!entry.contains("default")) fail(index, vname, "default", "missing");
    try {
      var.default_value = value_from_json(entry["default"]);
    } catch (const ParseError& e) {
      fail(index, vname, "default", e.what());
    }
    if (std::holds_alternative<RealDomain>(var.domain) && std::holds_alternative<std::int64_t>(var.default_value))
      var.default_value = static_cast<double>(std::get<std::int64_t>(var.default_value));
    if (entry.contains("condition")) {
      const auto& cond = entry["condition"];
      if (!cond.is_object() || !cond.contains("parent") || !cond["parent"].is_string() ||
          !cond.contains("equals") || !cond["equals"].is_string())
        fail(index, vname, "condition", "must be {parent: string, equals: string}");
      var.condition = Condition{cond["parent"].get<std::string>(), cond["equals"].get<std::string>()};
    }
    if (entry.contains("group")) {
      if (!entry["group"].is_string()) fail(index, vname, "group", "must be a string");
      try {
        var.group = var_group_from_string(entry["group"].get<std::string>());
      } catch (const ParseError& e) {
        fail(index, vname, "group", e.what());
      }
    }
    vars.push_back(std::move(var));
    ++index;
  }
  std::optional<std::string> algo;
  if (doc.contains("algorithm")) {
    if (!doc["algorithm"].is_string()) throw ParseError("space schema error: field 'algorithm' must be a string");
    algo = doc["algorithm"].get<std::string>();
  }
  try {
    return SearchSpace(doc["name"].get<std::string>(), std::move(vars), std::move(algo));
  } catch (const DomainError& e) {
    throw ParseError(std::string("space schema error: ") + e.what());
  }
}

}  // namespace

SearchSpace parse_space(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("space document is not valid JSON at line " +
                     std::to_string(line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1)) + ": " + e.what());
  }
  return parse_space_impl(doc, text);
}

SearchSpace parse_space_json(const json& doc) { return parse_space_impl(doc, {}); }

SearchSpace load_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read space file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_space(buffer.str());
}

json space_to_json(const SearchSpace& space) {
  json vars = json::array();
  for (const auto& var : space.variables()) {
    json entry;
    entry["name"] = var.name;
    std::visit(
        [&](const auto& dom) {
          using D = std::decay_t<decltype(dom)>;
          if constexpr (std::is_same_v<D, RealDomain>) {
            entry["type"] = "real";
            entry["lo"] = dom.lo;
            entry["hi"] = dom.hi;
            if (dom.log_scale) entry["log"] = true;
          } else if constexpr (std::is_same_v<D, IntDomain>) {
            entry["type"] = "int";
            entry["lo"] = dom.lo;
            entry["hi"] = dom.hi;
          } else {
            entry["type"] = "cat";
            entry["choices"] = dom.choices;
          }
        },
        var.domain);
    entry["default"] = to_json(var.default_value);
    if (var.condition) entry["condition"] = {{"parent", var.condition->parent}, {"equals", var.condition->equals}};
    if (var.group != VarGroup::unspecified) entry["group"] = std::string(to_string(var.group));
    vars.push_back(std::move(entry));
  }
  json doc{{"name", space.name()}, {"variables", std::move(vars)}};
  if (space.algorithm_variable()) doc["algorithm"] = *space.algorithm_variable();
  return doc;
}

// ---------------------------------------------------------------------------
// Substitution

Configuration merge(const Configuration& a, const Configuration& b) {
  Configuration out = a;
  for (const auto& [k, v] : b) out[k] = v;
  return out;
}

Configuration project(const Configuration& config, const SearchSpace& space) {
  Configuration out;
  for (const auto& [k, v] : config)
    if (space.contains(k)) out.emplace(k, v);
  return out;
}

Configuration SubProblem::complete(const Configuration& free_assignment, const SearchSpace& parent) const {
  Configuration merged = merge(fixed, free_assignment);
  Configuration out;
  for (const auto& [k, v] : merged) {
    const VariableSpec* var = parent.find(k);
    if (var == nullptr || parent.is_active(*var, merged)) out.emplace(k, v);
  }
  return out;
}

SubProblem substitute(const SearchSpace& space, const Configuration& fixed) {
  for (const auto& [name, value] : fixed) {
    const VariableSpec& var = space.at(name);
    if (!var.contains(value))
      throw DomainError("fixed value " + to_string(value) + " outside the domain of '" + name + "'");
  }
  std::vector<VariableSpec> free_vars;
  for (const auto& var : space.variables()) {
    if (fixed.contains(var.name)) continue;
    VariableSpec copy = var;
    copy.group = space.group_of(var);
    if (copy.condition) {
      auto it = fixed.find(copy.condition->parent);
      if (it != fixed.end()) {
        const auto* label = std::get_if<std::string>(&it->second);
        if (label == nullptr || *label != copy.condition->equals) continue;  // dropped: can never be active
        copy.condition.reset();
      }
    }
    free_vars.push_back(std::move(copy));
  }
  std::optional<std::string> algo;
  if (space.algorithm_variable() && !fixed.contains(*space.algorithm_variable())) algo = space.algorithm_variable();
  return SubProblem{SearchSpace(space.name(), std::move(free_vars), std::move(algo)), fixed};
}

// ---------------------------------------------------------------------------
// Sampling and encoding

namespace {

Value sample_value(const VariableSpec& var, Rng& rng) {
  return std::visit(
      [&](const auto& dom) -> Value {
        using D = std::decay_t<decltype(dom)>;
        if constexpr (std::is_same_v<D, RealDomain>) {
          return denormalize(dom, rng.uniform());
        } else if constexpr (std::is_same_v<D, IntDomain>) {
          return rng.integer(dom.lo, dom.hi);
        } else {
          return dom.choices[rng.index(dom.choices.size())];
        }
      },
      var.domain);
}

}  // namespace

Configuration sample_one(const SearchSpace& space, Rng& rng) {
  Configuration out;
  for (const auto& var : space.variables())
    if (!var.condition) out[var.name] = sample_value(var, rng);
  for (const auto& var : space.variables())
    if (var.condition && space.is_active(var, out)) out[var.name] = sample_value(var, rng);
  return out;
}

std::vector<Configuration> sample(const SearchSpace& space, Rng& rng, std::size_t n) {
  std::vector<Configuration> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_one(space, rng));
  return out;
}

void encode_into(const SearchSpace& space, const Configuration& config, std::span<double> out) {
  std::size_t pos = 0;
  for (const auto& var : space.variables()) {
    auto it = config.find(var.name);
    const Value& value = (it != config.end() && space.is_active(var, config)) ? it->second : var.default_value;
    std::visit(
        [&](const auto& dom) {
          using D = std::decay_t<decltype(dom)>;
          if constexpr (std::is_same_v<D, RealDomain>) {
            out[pos++] = normalize(dom, as_number(value));
          } else if constexpr (std::is_same_v<D, IntDomain>) {
            out[pos++] = dom.hi == dom.lo ? 0.0
                                          : (as_number(value) - static_cast<double>(dom.lo)) /
                                                static_cast<double>(dom.hi - dom.lo);
          } else {
            const auto& label = std::get<std::string>(value);
            for (const auto& choice : dom.choices) out[pos++] = choice == label ? 1.0 : 0.0;
          }
        },
        var.domain);
  }
}

std::vector<double> encode(const SearchSpace& space, const Configuration& config) {
  std::vector<double> out(space.encoded_width());
  encode_into(space, config, out);
  return out;
}

Configuration decode(const SearchSpace& space, std::span<const double> encoded) {
  Configuration raw;
  std::size_t pos = 0;
  for (const auto& var : space.variables()) {
    std::visit(
        [&](const auto& dom) {
          using D = std::decay_t<decltype(dom)>;
          if constexpr (std::is_same_v<D, RealDomain>) {
            raw[var.name] = denormalize(dom, encoded[pos++]);
          } else if constexpr (std::is_same_v<D, IntDomain>) {
            const double t = std::clamp(encoded[pos++], 0.0, 1.0);
            const auto v = static_cast<std::int64_t>(
                std::llround(static_cast<double>(dom.lo) + t * static_cast<double>(dom.hi - dom.lo)));
            raw[var.name] = std::clamp(v, dom.lo, dom.hi);
          } else {
            std::size_t best = 0;
            for (std::size_t c = 1; c < dom.choices.size(); ++c)
              if (encoded[pos + c] > encoded[pos + best]) best = c;
            raw[var.name] = dom.choices[best];
            pos += dom.choices.size();
          }
        },
        var.domain);
  }
  return space.resolve(raw);
}

std::vector<Configuration> neighbors(const SearchSpace& space, const Configuration& config, Rng& rng,
                                     std::size_t k) {
  constexpr double kStep = 0.2;
  std::vector<Configuration> out;
  out.reserve(k);
  std::vector<const VariableSpec*> active;
  for (const auto& var : space.variables())
    if (space.is_active(var, config)) active.push_back(&var);
  for (std::size_t n = 0; n < k; ++n) {
    Configuration next = config;
    if (!active.empty()) {
      const VariableSpec& var = *active[rng.index(active.size())];
      std::visit(
          [&](const auto& dom) {
            using D = std::decay_t<decltype(dom)>;
            if constexpr (std::is_same_v<D, RealDomain>) {
              const double t = normalize(dom, as_number(config.at(var.name))) + kStep * rng.normal();
              next[var.name] = denormalize(dom, t);
            } else if constexpr (std::is_same_v<D, IntDomain>) {
              if (dom.lo == dom.hi) return;
              const double width = static_cast<double>(dom.hi - dom.lo);
              const double t = (as_number(config.at(var.name)) - static_cast<double>(dom.lo)) / width +
                               kStep * rng.normal();
              const auto v = static_cast<std::int64_t>(
                  std::llround(static_cast<double>(dom.lo) + std::clamp(t, 0.0, 1.0) * width));
              next[var.name] = std::clamp(v, dom.lo, dom.hi);
            } else {
              if (dom.choices.size() < 2) return;
              const auto& current = std::get<std::string>(config.at(var.name));
              const auto cur = static_cast<std::size_t>(
                  std::find(dom.choices.begin(), dom.choices.end(), current) - dom.choices.begin());
              // Uniform over the other labels.
              std::size_t pick = rng.index(dom.choices.size() - 1);
              if (pick >= cur) ++pick;
              next[var.name] = dom.choices[pick];
            }
          },
          var.domain);
    }
    out.push_back(space.resolve(next));
  }
  return out;
}

}  // namespace volcano
