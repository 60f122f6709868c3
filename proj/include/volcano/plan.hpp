#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "volcano/blocks.hpp"

namespace volcano {

enum class PlanShape { J, C, A, AC, CA, custom };

std::string_view to_string(PlanShape shape);
PlanShape plan_shape_from_string(std::string_view text);

struct PlanSpec {
  PlanShape shape = PlanShape::J;
  // Conditioning variable; empty means the space's algorithm variable.
  std::string variable;
  // Labels/names forming the first alternating side.
  std::vector<std::string> first_side{"feature"};
  std::optional<PlanNode> tree;  // shape == custom
};

PlanSpec plan_spec_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const PlanSpec& spec);
PlanNode plan_node_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const PlanNode& node);

// The block tree a spec describes over `space`. Throws PlanError.
PlanNode plan_tree(const PlanSpec& spec, const SearchSpace& space);

// Structural checks: leaf-must-be-joint, child counts, conditioning variables.
// Throws PlanError naming the violated rule.
void validate_plan(const PlanNode& node, const SearchSpace& space);

// Root block over the objective's whole space; not yet initialized.
std::unique_ptr<Block> build_plan(const PlanSpec& spec, const Objective& objective, const BlockOptions& options = {});

struct RunResult {
  Configuration best_config;
  double best_loss = 0.0;
  double best_reward = 0.0;
  std::vector<HistoryRecord> history;
  double wall_seconds = 0.0;
  std::size_t evaluations = 0;
};

// Calls do_next on the root until the budget is spent. Throws RunError when
// nothing succeeded.
RunResult run(Block& root, RunContext& ctx);

RunResult run_plan(const PlanSpec& spec, const Objective& objective, Budget budget, std::uint64_t seed,
                   const BlockOptions& options = {});

struct Enumeration {
  std::vector<PlanSpec> plans;
  std::vector<std::string> warnings;
};

// J, C, A, AC, CA; only J and A when there is no categorical algorithm variable.
Enumeration enumerate_plans(const Objective& objective);

struct ProgressiveOptions {
  std::array<double, 3> stage_fractions{0.3, 0.35, 0.35};
  BlockOptions blocks;
};

// Top-down: screen algorithms at defaults, then tune features, then the
// winning algorithm's hyperparameters.
RunResult run_progressive(const Objective& objective, Budget budget, std::uint64_t seed,
                          const ProgressiveOptions& options = {});

// Winner of the screening stage, exposed for inspection.
struct ProgressiveTrace {
  std::string algorithm;
  std::vector<std::size_t> screening_counts;  // evaluations per algorithm value
  std::vector<double> screening_means;
};

RunResult run_progressive(const Objective& objective, Budget budget, std::uint64_t seed,
                          const ProgressiveOptions& options, ProgressiveTrace* trace);

RunResult assemble_result(const RunContext& ctx, std::optional<std::size_t> best_index);

}  // namespace volcano
