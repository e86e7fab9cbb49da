#pragma once

// Deterministic simulated web world: a graph of pages with interactive
// elements, sparse valid paths to a goal, distractors that self-loop or lead
// into dead ends, snapshot/restore, and a brute-force trajectory oracle.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "planmcts/errors.hpp"

namespace planmcts {

// ---------------------------------------------------------------- actions

enum class ActionKind { Click, Type, Scroll, Goto, SendMessage, Noop };

struct AtomicAction {
  ActionKind kind = ActionKind::Noop;
  int target = -1;        // element id for Click/Type
  std::string text;       // typed text / message payload / goto page / scroll dir

  static AtomicAction click(int id) { return {ActionKind::Click, id, {}}; }
  static AtomicAction type_text(int id, std::string t) {
    return {ActionKind::Type, id, std::move(t)};
  }
  static AtomicAction scroll(std::string dir) {
    return {ActionKind::Scroll, -1, std::move(dir)};
  }
  static AtomicAction goto_page(std::string page) {
    return {ActionKind::Goto, -1, std::move(page)};
  }
  static AtomicAction send_message(std::string msg) {
    return {ActionKind::SendMessage, -1, std::move(msg)};
  }
  static AtomicAction noop() { return {}; }

  bool operator==(const AtomicAction&) const = default;
};

// Canonical textual form, e.g. click(3), send_msg_to_user("42").
std::string to_string(const AtomicAction& a);
// Inverse of to_string; throws DecisionParseFailure on malformed input.
AtomicAction parse_action(const std::string& text);

// ------------------------------------------------------------ observation

struct ElementView {
  int id = -1;
  std::string role;   // link | button | textbox | text
  std::string label;
};

struct Observation {
  std::string page_id;
  std::vector<ElementView> elements;
  bool popup_open = false;
  bool last_action_error = false;
  std::string error_note;
  int step_count = 0;

  bool operator==(const Observation&) const;
};

// Text rendering used in place of a pruned accessibility tree.
std::string render_observation(const Observation& obs);

// ------------------------------------------------------------- page graph

struct Element {
  int id = -1;
  std::string role;                    // link | button | textbox | text
  std::string label;
  std::optional<std::string> target;   // transition target page, absent = self-loop
  bool distractor = false;
  bool irreversible = false;
};

struct Page {
  std::string id;
  std::vector<Element> elements;
  // When set, the page opens with a blocking popup; only a click on this
  // element id succeeds until the popup has been dismissed.
  std::optional<int> popup_dismiss;

  const Element* find(int element_id) const;
};

struct GoalPredicate {
  std::optional<std::string> reach_page;
  std::optional<std::string> answer_equals;
};

struct TaskSpec {
  std::string id;
  std::string instruction;
  GoalPredicate goal;
  int horizon = 50;
  bool impossible = false;  // negative-test flag: no satisfying trajectory
};

struct PageGraph {
  std::map<std::string, Page> pages;
  std::string start;
  std::vector<TaskSpec> tasks;

  const TaskSpec& task(const std::string& task_id) const;
  void validate() const;  // throws SchemaError on dangling targets etc.
};

// JSON file schema ("planmcts-env-v1").
PageGraph load_page_graph(const std::string& path);
PageGraph page_graph_from_json(const std::string& json_text);
std::string page_graph_to_json(const PageGraph& g);
void save_page_graph(const PageGraph& g, const std::string& path);

// -------------------------------------------------------------- generator

struct GeneratorParams {
  int branching = 10;        // b: elements per page
  int depth = 5;             // D: length of each valid path
  int valid_paths = 1;       // v: element-disjoint start-to-goal paths
  double distractor_ratio = 0.5;  // rho: fraction of distractors that dead-end
  std::uint64_t seed = 0;
};

PageGraph generate_page_graph(const GeneratorParams& params);

// ------------------------------------------------------------ environment

struct StateHandle {
  std::uint64_t env_uid = 0;
  std::size_t token = 0;
  // Action trace from reset, kept for the replay-from-reset fallback.
  std::vector<AtomicAction> trace;
};

class Environment {
 public:
  Environment(std::shared_ptr<const PageGraph> graph, const std::string& task_id,
              std::uint64_t seed = 0);

  Observation reset();
  Observation observe() const;

  struct StepResult {
    Observation obs;
    bool terminated = false;
    bool success = false;
  };
  StepResult step(const AtomicAction& action);

  StateHandle snapshot() const;
  Observation restore(const StateHandle& h);
  // Rebuilds the handle's state by re-applying its action trace from reset.
  Observation restore_by_replay(const StateHandle& h);

  const TaskSpec& task() const { return task_; }
  const PageGraph& graph() const { return *graph_; }
  bool terminated() const { return state_.terminated; }
  bool success() const { return state_.success; }
  const std::string& answer() const { return state_.answer; }

  // Total env.step calls over the lifetime of this instance, across restores.
  // This is the action-interaction cost metric.
  long interaction_count() const { return interactions_; }

  // Key identifying the latent state up to step counters; used by the oracle
  // and the scripted judges.
  std::string state_key() const;

 private:
  struct State {
    std::string page;
    int steps = 0;
    bool terminated = false;
    bool success = false;
    std::string answer;
    bool last_error = false;
    std::string error_note;
    std::set<std::string> dismissed_popups;
    std::map<std::string, std::string> typed;  // "page:elem" -> text
  };

  bool goal_satisfied(const std::string& answer) const;

  std::shared_ptr<const PageGraph> graph_;
  TaskSpec task_;
  std::uint64_t seed_ = 0;
  std::uint64_t uid_ = 0;
  State state_;
  std::vector<AtomicAction> trace_;
  mutable std::vector<std::pair<State, std::vector<AtomicAction>>> snapshots_;
  long interactions_ = 0;
};

// ----------------------------------------------------------------- oracle

// Breadth-first enumeration over the simulator's action graph. Returns a
// shortest satisfying trajectory (clicks plus a final send_message), or
// nullopt when the task is unsolvable within max_len actions.
std::optional<std::vector<AtomicAction>> oracle_solve(
    const PageGraph& graph, const std::string& task_id, int max_len = 64);

// Shortest remaining solution from an arbitrary mid-episode state, keyed by
// Environment::state_key(). Used by the scripted macro judge.
class OracleMap {
 public:
  OracleMap(std::shared_ptr<const PageGraph> graph, const std::string& task_id,
            int max_len = 64);

  // Remaining actions to success from this state, or nullopt if unreachable.
  std::optional<std::vector<AtomicAction>> remaining(const std::string& state_key) const;
  int initial_length() const { return initial_length_; }  // -1 when unsolvable
  const std::string& answer() const { return answer_; }

 private:
  std::map<std::string, std::vector<AtomicAction>> remaining_;
  int initial_length_ = -1;
  std::string answer_;
};

}  // namespace planmcts
