#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "volcano/objective.hpp"
#include "volcano/rng.hpp"
#include "volcano/space.hpp"
#include "volcano/surrogate.hpp"

namespace volcano {

enum class BlockKind { joint, conditioning, alternating };

std::string_view to_string(BlockKind kind);

// Decomposition directive for one node of a block tree. `variable` names the
// conditioning variable; `first_side` lists group labels (feature, algorithm,
// hyper) and/or variable names that make up the first alternating side.
struct PlanNode {
  BlockKind kind = BlockKind::joint;
  std::string variable;
  std::vector<std::string> first_side;
  std::vector<PlanNode> children;  // conditioning: 1 template; alternating: 2
};

struct Budget {
  enum class Kind { evaluations, seconds };
  Kind kind = Kind::evaluations;
  double amount = 0.0;

  static Budget evaluations(std::size_t n) { return {Kind::evaluations, static_cast<double>(n)}; }
  static Budget seconds(double s) { return {Kind::seconds, s}; }
};

struct HistoryRecord {
  std::vector<std::string> block_path;
  Observation observation;
};

using EvaluationHook = std::function<void(const HistoryRecord&, const Evaluation&)>;

// Shared state of one optimization run: the objective, the budget and the
// flattened evaluation log.
class RunContext {
 public:
  RunContext(Objective objective, Budget budget, std::uint64_t seed);

  const Objective& objective() const { return objective_; }
  // Swaps in an objective whose space extends the current one (continue tuning).
  void set_objective(Objective objective) { objective_ = std::move(objective); }

  const Budget& budget() const { return budget_; }
  std::uint64_t seed() const { return seed_; }

  // Budget units consumed so far: evaluations, or wall seconds since start.
  double used_units() const;
  double remaining_units() const;
  bool exhausted() const { return remaining_units() <= 0.0; }
  double elapsed_seconds() const;

  // Evaluates a full configuration, appends it to the history and returns its index.
  std::size_t evaluate(const Configuration& config, const std::vector<std::string>& block_path,
                       double fidelity = 1.0);

  const std::vector<HistoryRecord>& history() const { return history_; }

  void set_evaluation_hook(EvaluationHook hook) { hook_ = std::move(hook); }

 private:
  Objective objective_;
  Budget budget_;
  std::uint64_t seed_;
  std::chrono::steady_clock::time_point start_;
  std::vector<HistoryRecord> history_;
  EvaluationHook hook_;
};

struct BlockOptions {
  std::size_t plays_per_round = 5;   // L
  std::size_t smoothing_window = 3;  // C
  std::size_t eui_window = 8;        // W
  std::size_t initial_design = 3;
  double noise_floor = 1e-6;
};

struct BoundsEstimate {
  double lower = 0.0;
  double upper = 0.0;
  double horizon = 0.0;
};

struct EuiEstimate {
  double value = 0.0;
};

// Inputs handed to a surrogate factory when a joint block refits.
struct SurrogateRequest {
  const SearchSpace& space;
  const Configuration& fixed;  // every non-free variable, context included
  const Eigen::MatrixXd& inputs;
  const std::vector<double>& targets;
  double noise_floor;
  Rng& rng;
};

using SurrogateFactory = std::function<std::unique_ptr<Surrogate>(const SurrogateRequest&)>;

std::unique_ptr<Surrogate> default_surrogate(const SurrogateRequest& request);

class Block {
 public:
  virtual ~Block() = default;

  BlockKind kind() const { return kind_; }
  const std::vector<std::string>& path() const { return path_; }
  std::string path_string() const;

  // Free variables of this block's subgoal.
  const SearchSpace& space() const { return space_; }
  // Values fixed by ancestor conditioning blocks.
  const Configuration& fixed() const { return fixed_; }
  // Values injected from outside via set_var.
  const Configuration& context() const { return context_; }
  const SearchSpace& context_space() const { return context_space_; }
  Configuration fixed_all() const { return merge(fixed_, context_); }

  bool initialized() const { return initialized_; }
  // Idempotent. Evaluations made here count against the budget.
  void init(RunContext& ctx);
  // One do_next as seen by a parent: initializes on first use, then records
  // pull cost and the best-so-far reward.
  void pull(RunContext& ctx);
  virtual void do_next(RunContext& ctx) = 0;

  // Best observation in this subtree, projected onto the free variables.
  // Throws EmptyHistoryError when no evaluation succeeded.
  std::pair<Configuration, double> get_current_best(const RunContext& ctx) const;
  std::optional<std::size_t> best_record() const { return best_; }
  double best_reward() const;

  BoundsEstimate get_eu(double horizon, double reward_ceiling) const;
  // Mean clamped improvement over the last W pulls made under the current
  // context; +inf when there is none.
  EuiEstimate get_eui() const;

  // `vars` must be a valid configuration of context_space().
  virtual void set_var(const Configuration& vars);

  std::size_t pull_count() const { return curve_.size(); }
  // Incremented whenever set_var changes the context.
  std::size_t context_epoch() const { return epoch_; }
  const std::vector<double>& reward_curve() const { return curve_; }
  const std::vector<double>& pull_costs() const { return costs_; }
  const BlockOptions& options() const { return options_; }

  virtual std::vector<Block*> children() { return {}; }

 protected:
  Block(BlockKind kind, std::vector<std::string> path, SearchSpace space, Configuration fixed,
        SearchSpace context_space, Configuration context, BlockOptions options);

  virtual void do_init(RunContext&) {}
  void note_range(const RunContext& ctx, std::size_t from);
  void check_context(const Configuration& vars) const;
  // Stores `vars`; returns false when nothing changed.
  bool assign_context(const Configuration& vars);

  BlockKind kind_;
  std::vector<std::string> path_;
  SearchSpace space_;
  Configuration fixed_;
  SearchSpace context_space_;
  Configuration context_;
  BlockOptions options_;
  Rng rng_;

 private:
  bool initialized_ = false;
  std::optional<std::size_t> best_;
  double best_reward_ = -std::numeric_limits<double>::infinity();
  std::size_t noted_until_ = 0;
  std::vector<double> curve_;
  std::vector<double> costs_;
  std::vector<std::size_t> pull_epochs_;
  std::size_t epoch_ = 0;
};

// Bayesian optimization over the block's free variables.
class JointBlock final : public Block {
 public:
  JointBlock(std::vector<std::string> path, SearchSpace space, Configuration fixed, SearchSpace context_space,
             Configuration context, BlockOptions options);

  void do_next(RunContext& ctx) override;
  void set_var(const Configuration& vars) override;

  void set_surrogate_factory(SurrogateFactory factory) { factory_ = std::move(factory); }
  bool has_custom_surrogate() const { return static_cast<bool>(factory_); }

  // Indices of the history records evaluated by this block.
  const std::vector<std::size_t>& own_records() const { return own_; }
  // Observations usable under the current context (free-variable projections),
  // including ones made elsewhere in the run with the same fixed values.
  const std::vector<Observation>& fresh_observations(const RunContext& ctx);
  std::size_t queued() const { return queue_.size(); }
  std::size_t context_changes() const { return context_changes_; }

 protected:
  void do_init(RunContext& ctx) override;

 private:
  void refresh(const RunContext& ctx);
  Configuration propose(RunContext& ctx);

  std::vector<Configuration> queue_;
  std::vector<std::size_t> own_;
  std::vector<Observation> fresh_;
  std::size_t scanned_ = 0;
  std::size_t context_changes_ = 0;
  SurrogateFactory factory_;
};

// Bandit over the values of one categorical variable, one child per value.
class ConditioningBlock final : public Block {
 public:
  ConditioningBlock(std::vector<std::string> path, SearchSpace space, Configuration fixed, SearchSpace context_space,
                    Configuration context, BlockOptions options, std::string variable, PlanNode child_template);

  void do_next(RunContext& ctx) override;
  void set_var(const Configuration& vars) override;
  std::vector<Block*> children() override;

  const std::string& variable() const { return variable_; }
  const std::vector<std::string>& arm_values() const { return values_; }
  const std::vector<bool>& active() const { return active_; }
  std::size_t active_count() const;
  Block& child(std::size_t i) { return *children_.at(i); }
  const Block& child(std::size_t i) const { return *children_.at(i); }
  std::size_t child_count() const { return children_.size(); }

  // Continue tuning: appends one active child per new value. The context's
  // objective must already declare the values. Throws DirectiveError on
  // duplicates or undeclared values.
  void extend_arms(const std::vector<std::string>& new_values, const RunContext& ctx);

  // Keeps only the listed values (in the listed order). Allowed before the
  // first pull only.
  void restrict_arms(const std::vector<std::string>& keep);

 private:
  std::unique_ptr<Block> make_child(const std::string& value) const;

  std::string variable_;
  PlanNode template_;
  std::vector<std::string> values_;
  std::vector<std::unique_ptr<Block>> children_;
  std::vector<bool> active_;
};

// Two children over a partition of the free variables, optimized alternately.
class AlternatingBlock final : public Block {
 public:
  AlternatingBlock(std::vector<std::string> path, SearchSpace space, Configuration fixed, SearchSpace context_space,
                   Configuration context, BlockOptions options, SearchSpace first, SearchSpace second,
                   const PlanNode& first_template, const PlanNode& second_template);

  void do_next(RunContext& ctx) override;
  void set_var(const Configuration& vars) override;
  std::vector<Block*> children() override { return {first_.get(), second_.get()}; }

  Block& first() { return *first_; }
  Block& second() { return *second_; }
  const SearchSpace& first_space() const { return first_space_; }
  const SearchSpace& second_space() const { return second_space_; }
  // Which child the last do_next pulled (0 or 1).
  int last_choice() const { return last_choice_; }

  // Arbitration between the two sides: true selects the first child.
  static bool choose_first(EuiEstimate first, EuiEstimate second) { return first.value >= second.value; }

 protected:
  void do_init(RunContext& ctx) override;

 private:
  EuiEstimate arbitration_eui(const RunContext& ctx, const Block& child, const Block& partner,
                              const SearchSpace& partner_space) const;
  void inject_into_first(const RunContext& ctx);
  void inject_into_second(const RunContext& ctx);

  SearchSpace first_space_;
  SearchSpace second_space_;
  Configuration first_values_;   // current side-1 values handed to the second child
  Configuration second_values_;  // current side-2 values handed to the first child
  std::unique_ptr<Block> first_;
  std::unique_ptr<Block> second_;
  int last_choice_ = -1;
};

// Child i deactivated iff some j != i has u_i < l_j. `eligible[i] == false`
// exempts child i from deactivation (it may still dominate others).
std::vector<bool> eliminate_dominated(const std::vector<BoundsEstimate>& bounds);
std::vector<bool> eliminate_dominated(const std::vector<BoundsEstimate>& bounds, const std::vector<bool>& eligible);

// Splits `space` per an alternating directive. Throws DirectiveError when a
// conditional variable lands on a different side than its parent.
std::pair<SearchSpace, SearchSpace> partition_space(const SearchSpace& space, const std::vector<std::string>& first_side);

// Builds the block for `node` over `space` (free variables), with the given
// fixed values and context. Throws DirectiveError / PlanError.
std::unique_ptr<Block> make_block(const PlanNode& node, std::vector<std::string> path, SearchSpace space,
                                  Configuration fixed, SearchSpace context_space, Configuration context,
                                  const BlockOptions& options);

// Depth-first visit of a block tree.
void visit_blocks(Block& root, const std::function<void(Block&)>& fn);

}  // namespace volcano
