#pragma once

// The plan-space search tree: verified states connected by subplan-labeled
// edges carrying Q/N statistics, plus UCT scoring and backpropagation.

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "planmcts/errors.hpp"
#include "planmcts/webworld.hpp"

namespace planmcts {

enum class SubplanOrigin { Planner, Reflector };
enum class SubplanStatus { Unattempted, Completed, NotCompleted, Failed };

std::string to_string(SubplanOrigin o);
std::string to_string(SubplanStatus s);

struct Subplan {
  std::string text;
  SubplanOrigin origin = SubplanOrigin::Planner;
  std::string thought;
  SubplanStatus status = SubplanStatus::Unattempted;
  // Present iff origin == Reflector: the planner subplan this one replaced.
  std::optional<std::string> replaced_text;

  Subplan() = default;
  explicit Subplan(std::string t, SubplanOrigin o = SubplanOrigin::Planner,
                   std::string thought_text = {})
      : text(std::move(t)), origin(o), thought(std::move(thought_text)) {
    if (text.empty()) throw Error("subplan text must be non-empty");
  }
};

struct RewardRecord {
  int r_micro = 0;                   // {0,1}
  std::vector<double> macro_samples; // empty when macro evaluation was skipped
  double r_macro = 0.0;
  double reward = 0.0;               // r_micro * r_macro
  std::vector<std::string> notes;
};

struct PlanHistoryEntry {
  std::string text;
  SubplanStatus status = SubplanStatus::Unattempted;
};
using PlanHistory = std::vector<PlanHistoryEntry>;

struct TrajectorySegment {
  enum class Terminated { Fulfilled, StepCapReached, EnvError, AnswerEmitted };
  std::vector<AtomicAction> actions;
  // Pre-state observation plus one observation per action.
  std::vector<Observation> observations;
  Terminated terminated = Terminated::Fulfilled;

  bool has_env_error() const;
  std::string answer() const;  // payload of a final send_message, if any
};

std::string to_string(TrajectorySegment::Terminated t);

struct PlanNode;

struct SubplanEdge {
  Subplan subplan;
  double q_value = 0.0;
  long visit_count = 0;
  std::optional<TrajectorySegment> grounding;
  std::unique_ptr<PlanNode> child;
  // For action-space variants: the atomic action this edge stands for.
  std::optional<AtomicAction> action;
};

struct PlanNode {
  int node_id = 0;
  StateHandle state;
  PlanHistory plan_history;
  std::vector<SubplanEdge> edges;
  int depth = 0;
  bool exhausted = false;  // planner failed to expand; frontier dead end

  bool expanded() const { return !edges.empty(); }
  // Derived node visit count N(s) = max(1, sum of edge visits).
  long visit_count() const;
};

// UCT score for one edge; +infinity for unvisited edges so they are always
// preferred, in proposal order.
double uct_score(double q, long edge_visits, long parent_visits, double c);

// Index of the UCT-maximizing edge; ties broken by lowest index.
std::size_t select_edge(const PlanNode& node, double c);

// Visit-count/Q update along a root-to-leaf chain of edges (Q moves toward
// the running mean of all rewards that traversed each edge).
void backpropagate(const std::vector<SubplanEdge*>& path, double reward);

// Attaches one fresh edge per subplan, in proposal order.
void add_children(PlanNode& node, const std::vector<Subplan>& subplans);

class PlanTree {
 public:
  explicit PlanTree(StateHandle root_state);

  PlanNode& root() { return *root_; }
  const PlanNode& root() const { return *root_; }
  PlanNode& make_child(SubplanEdge& edge, StateHandle state, PlanHistory history, int depth);
  int next_node_id() { return ++last_id_; }

  std::string to_json() const;  // versioned trace/debug document

 private:
  std::unique_ptr<PlanNode> root_;
  int last_id_ = 0;
};

}  // namespace planmcts
