#pragma once

// Five-phase search orchestrator: Selection -> Simulation -> [Refinement] ->
// Expansion -> Backpropagation over the plan tree, plus the action-space and
// best-first variants used as experiment baselines.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "planmcts/dual_gate.hpp"
#include "planmcts/plan_tree.hpp"
#include "planmcts/policies.hpp"
#include "planmcts/trace.hpp"
#include "planmcts/webworld.hpp"

namespace planmcts {

enum class SearchSpace { Plan, Action };
enum class SelectionRule { Uct, BestFirst };
enum class RewardMode { Dual, MicroOnly, MacroOnly };
enum class RefineMode { Structural, Disabled, ReflectionOnly };

struct SearchConfig {
  int budget = 10;
  int max_depth = 5;
  int branch_width = 3;
  double c = 0.5;
  int max_atomic_steps = 8;
  int refine_retries = 1;
  int macro_samples = 3;
  MacroScale macro_scale;

  SearchSpace space = SearchSpace::Plan;
  SelectionRule selection = SelectionRule::Uct;
  RewardMode reward_mode = RewardMode::Dual;
  RefineMode refine_mode = RefineMode::Structural;

  // Stop at the first verified terminal (default) or keep searching and
  // return the best-reward terminal.
  bool exhaust_budget = false;
  // Context-pollution baseline: render every earlier atomic action into the
  // operator context instead of the plan-level history alone.
  bool full_history_context = false;
  int policy_retries = 1;

  void validate() const;
};

struct EpisodeResult {
  bool success = false;
  std::optional<std::string> answer;
  int iterations_used = 0;
  long env_steps = 0;       // env.step calls incl. failed/refined attempts
  int solution_len = 0;     // atomic actions along the returned solution
  int subplans_grounded = 0;
  int subplans_completed = 0;  // grounded with r_micro = 1
  EpisodeTrace trace;
};

struct SelectedLeaf {
  PlanNode* node = nullptr;
  std::size_t edge_index = 0;
  std::vector<SubplanEdge*> path;
};

// Descends from the root by UCT until reaching an unvisited edge, a visited
// edge with an unexpanded child, or the depth bound.
SelectedLeaf select_leaf(PlanTree& tree, double c);

// Operator context string as the operator sees it; criterion for the
// context-decoupling experiments, and the user-message payload in LLM mode.
// Atomic actions are rendered with per-episode instance tags
// ("a7:click(3)"); action_ordinal_base is the tag of local.actions[0].
std::string render_operator_context(const std::string& goal, const PlanHistory& history,
                                    const TrajectorySegment& local, const Subplan& subplan,
                                    const Observation& obs, int action_ordinal_base,
                                    const std::vector<std::string>& extra_context);

EpisodeResult run_episode(Environment& env, const PolicyBundle& policies,
                          const SearchConfig& cfg);

}  // namespace planmcts
