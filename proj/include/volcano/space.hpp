#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "volcano/rng.hpp"

namespace volcano {

// A variable's value: integer, real or categorical label.
using Value = std::variant<std::int64_t, double, std::string>;

// Assignment of variable name to value. Ordered so that serialization and
// iteration are deterministic.
using Configuration = std::map<std::string, Value>;

std::string to_string(const Value& value);
nlohmann::json to_json(const Value& value);
Value value_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Configuration& config);
Configuration configuration_from_json(const nlohmann::json& j);

struct RealDomain {
  double lo = 0.0;
  double hi = 1.0;
  bool log_scale = false;
};

struct IntDomain {
  std::int64_t lo = 0;
  std::int64_t hi = 1;
};

struct CatDomain {
  std::vector<std::string> choices;
};

using Domain = std::variant<RealDomain, IntDomain, CatDomain>;

// Activation condition: the variable exists only while `parent` equals `equals`.
struct Condition {
  std::string parent;
  std::string equals;

  friend bool operator==(const Condition&, const Condition&) = default;
};

// Role of a variable when a plan splits the space into feature-engineering
// and algorithm-hyperparameter halves.
enum class VarGroup { unspecified, feature, algorithm, hyper };

std::string_view to_string(VarGroup group);
VarGroup var_group_from_string(std::string_view text);

struct VariableSpec {
  std::string name;
  Domain domain;
  Value default_value;
  std::optional<Condition> condition;
  VarGroup group = VarGroup::unspecified;

  bool is_categorical() const { return std::holds_alternative<CatDomain>(domain); }
  bool contains(const Value& value) const;
  std::size_t encoded_width() const;
};

class SearchSpace {
 public:
  SearchSpace() = default;
  // Validates every invariant; throws StructureError or DomainError.
  SearchSpace(std::string name, std::vector<VariableSpec> variables,
              std::optional<std::string> algorithm_variable = std::nullopt);

  const std::string& name() const { return name_; }
  std::span<const VariableSpec> variables() const { return variables_; }
  std::size_t size() const { return variables_.size(); }
  bool empty() const { return variables_.empty(); }

  const VariableSpec* find(std::string_view name) const;
  // Throws NameError when absent.
  const VariableSpec& at(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }
  std::vector<std::string> names() const;

  const std::optional<std::string>& algorithm_variable() const { return algorithm_; }

  // Explicit group, else derived: the algorithm variable, its dependents
  // (hyper), everything else (feature).
  VarGroup group_of(const VariableSpec& var) const;

  std::size_t encoded_width() const;

  // Whether `var` is active under the (possibly partial) assignment.
  bool is_active(const VariableSpec& var, const Configuration& config) const;

  // Exactly the active variables assigned, all values in-domain.
  bool is_valid(const Configuration& config) const;
  // Throws DomainError describing the first violation.
  void validate(const Configuration& config) const;

  Configuration defaults() const;

  // Keeps the active variables of `partial`, fills missing active ones with
  // defaults and drops everything else.
  Configuration resolve(const Configuration& partial) const;

  // Subset of the variables, preserving order. Conditions whose parent is not
  // kept are dropped. Groups are frozen to their resolved values.
  SearchSpace restrict_to(std::span<const std::string> names, std::string name) const;

  // Union of two spaces with disjoint variable names.
  static SearchSpace concat(const SearchSpace& a, const SearchSpace& b, std::string name);

  friend bool operator==(const SearchSpace& a, const SearchSpace& b);

 private:
  std::string name_;
  std::vector<VariableSpec> variables_;
  std::optional<std::string> algorithm_;
};

SearchSpace parse_space(std::string_view text);
SearchSpace parse_space_json(const nlohmann::json& doc);
SearchSpace load_space(const std::string& path);
nlohmann::json space_to_json(const SearchSpace& space);

// Subgoal: fixed part plus the space over the remaining variables.
struct SubProblem {
  SearchSpace space;
  Configuration fixed;

  // fixed ∪ free, with variables made inactive by the merge removed.
  Configuration complete(const Configuration& free_assignment, const SearchSpace& parent) const;
};

SubProblem substitute(const SearchSpace& space, const Configuration& fixed);

Configuration merge(const Configuration& a, const Configuration& b);

// Entries of `config` whose names are variables of `space`.
Configuration project(const Configuration& config, const SearchSpace& space);

Configuration sample_one(const SearchSpace& space, Rng& rng);
std::vector<Configuration> sample(const SearchSpace& space, Rng& rng, std::size_t n);

// Fixed-width numeric encoding: numerics min-max scaled to [0, 1] (after log
// when log-scaled), categoricals one-hot, inactive variables imputed with the
// encoding of their default.
std::vector<double> encode(const SearchSpace& space, const Configuration& config);
void encode_into(const SearchSpace& space, const Configuration& config, std::span<double> out);

// Inverse of encode for active variables; integers round to nearest,
// categoricals take the arg-max coordinate.
Configuration decode(const SearchSpace& space, std::span<const double> encoded);

std::vector<Configuration> neighbors(const SearchSpace& space, const Configuration& config, Rng& rng,
                                     std::size_t k);

}  // namespace volcano
