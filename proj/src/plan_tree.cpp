#include "planmcts/plan_tree.hpp"

#include <cmath>

#include <json.hpp>

namespace planmcts {

using nlohmann::json;

std::string to_string(SubplanOrigin o) {
  return o == SubplanOrigin::Planner ? "planner" : "reflector";
}

std::string to_string(SubplanStatus s) {
  switch (s) {
    case SubplanStatus::Unattempted: return "unattempted";
    case SubplanStatus::Completed: return "completed";
    case SubplanStatus::NotCompleted: return "not_completed";
    case SubplanStatus::Failed: return "failed";
  }
  return "?";
}

std::string to_string(TrajectorySegment::Terminated t) {
  switch (t) {
    case TrajectorySegment::Terminated::Fulfilled: return "fulfilled";
    case TrajectorySegment::Terminated::StepCapReached: return "step_cap_reached";
    case TrajectorySegment::Terminated::EnvError: return "env_error";
    case TrajectorySegment::Terminated::AnswerEmitted: return "answer_emitted";
  }
  return "?";
}

bool TrajectorySegment::has_env_error() const {
  for (std::size_t i = 1; i < observations.size(); ++i) {
    if (observations[i].last_action_error) return true;
  }
  return terminated == Terminated::EnvError;
}

std::string TrajectorySegment::answer() const {
  if (!actions.empty() && actions.back().kind == ActionKind::SendMessage) {
    return actions.back().text;
  }
  return {};
}

long PlanNode::visit_count() const {
  long total = 0;
  for (const auto& e : edges) total += e.visit_count;
  return std::max(1L, total);
}

double uct_score(double q, long edge_visits, long parent_visits, double c) {
  if (edge_visits == 0) return std::numeric_limits<double>::infinity();
  return q + c * std::sqrt(std::log(static_cast<double>(parent_visits)) /
                           static_cast<double>(edge_visits));
}

std::size_t select_edge(const PlanNode& node, double c) {
  if (node.edges.empty()) throw EmptyFrontier("select_edge on a node with no edges");
  const long parent_visits = node.visit_count();
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < node.edges.size(); ++i) {
    const auto& e = node.edges[i];
    double score = uct_score(e.q_value, e.visit_count, parent_visits, c);
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

void backpropagate(const std::vector<SubplanEdge*>& path, double reward) {
  for (SubplanEdge* e : path) {
    e->visit_count += 1;
    e->q_value += (reward - e->q_value) / static_cast<double>(e->visit_count);
  }
}

void add_children(PlanNode& node, const std::vector<Subplan>& subplans) {
  if (node.expanded()) throw AlreadyExpanded("node already has edges");
  for (const auto& p : subplans) {
    SubplanEdge e;
    e.subplan = p;
    node.edges.push_back(std::move(e));
  }
}

PlanTree::PlanTree(StateHandle root_state) : root_(std::make_unique<PlanNode>()) {
  root_->state = std::move(root_state);
}

PlanNode& PlanTree::make_child(SubplanEdge& edge, StateHandle state, PlanHistory history,
                               int depth) {
  edge.child = std::make_unique<PlanNode>();
  edge.child->node_id = next_node_id();
  edge.child->state = std::move(state);
  edge.child->plan_history = std::move(history);
  edge.child->depth = depth;
  return *edge.child;
}

namespace {

json node_to_json(const PlanNode& node) {
  json j{{"id", node.node_id}, {"depth", node.depth}, {"visits", node.visit_count()}};
  if (node.exhausted) j["exhausted"] = true;
  j["edges"] = json::array();
  for (const auto& e : node.edges) {
    json ej{{"subplan", e.subplan.text},
            {"origin", to_string(e.subplan.origin)},
            {"status", to_string(e.subplan.status)},
            {"q", e.q_value},
            {"n", e.visit_count}};
    if (e.subplan.replaced_text) ej["replaced"] = *e.subplan.replaced_text;
    if (e.action) ej["action"] = to_string(*e.action);
    if (e.child) ej["child"] = node_to_json(*e.child);
    j["edges"].push_back(std::move(ej));
  }
  return j;
}

}  // namespace

std::string PlanTree::to_json() const {
  json j{{"format", "planmcts-tree-v1"}, {"root", node_to_json(*root_)}};
  return j.dump(2);
}

}  // namespace planmcts
