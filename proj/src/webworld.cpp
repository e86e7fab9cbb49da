#include "planmcts/webworld.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace planmcts {

using nlohmann::json;

// ---------------------------------------------------------------- actions

std::string to_string(const AtomicAction& a) {
  std::ostringstream out;
  switch (a.kind) {
    case ActionKind::Click:
      out << "click(" << a.target << ")";
      break;
    case ActionKind::Type:
      out << "type(" << a.target << ", \"" << a.text << "\")";
      break;
    case ActionKind::Scroll:
      out << "scroll(\"" << a.text << "\")";
      break;
    case ActionKind::Goto:
      out << "goto(\"" << a.text << "\")";
      break;
    case ActionKind::SendMessage:
      out << "send_msg_to_user(\"" << a.text << "\")";
      break;
    case ActionKind::Noop:
      out << "noop()";
      break;
  }
  return out.str();
}

namespace {

// Splits "name(args)" and returns {name, args} without the parens.
bool split_call(const std::string& text, std::string& name, std::string& args) {
  auto open = text.find('(');
  auto close = text.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    return false;
  }
  name = text.substr(0, open);
  args = text.substr(open + 1, close - open - 1);
  // trim
  auto trim = [](std::string& s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  };
  trim(name);
  trim(args);
  return true;
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

}  // namespace

AtomicAction parse_action(const std::string& text) {
  std::string name;
  std::string args;
  if (!split_call(text, name, args)) {
    throw DecisionParseFailure("not an action call: " + text);
  }
  if (name == "click") {
    try {
      return AtomicAction::click(std::stoi(args));
    } catch (const std::exception&) {
      throw DecisionParseFailure("bad click target: " + args);
    }
  }
  if (name == "type") {
    auto comma = args.find(',');
    if (comma == std::string::npos) throw DecisionParseFailure("type() needs two arguments");
    std::string id = args.substr(0, comma);
    std::string val = args.substr(comma + 1);
    while (!val.empty() && std::isspace(static_cast<unsigned char>(val.front()))) val.erase(val.begin());
    try {
      return AtomicAction::type_text(std::stoi(id), unquote(val));
    } catch (const std::exception&) {
      throw DecisionParseFailure("bad type target: " + id);
    }
  }
  if (name == "scroll") return AtomicAction::scroll(unquote(args));
  if (name == "goto") return AtomicAction::goto_page(unquote(args));
  if (name == "send_msg_to_user") return AtomicAction::send_message(unquote(args));
  if (name == "noop") return AtomicAction::noop();
  throw DecisionParseFailure("unknown action: " + name);
}

// ------------------------------------------------------------ observation

bool Observation::operator==(const Observation& o) const {
  auto elem_eq = [](const ElementView& a, const ElementView& b) {
    return a.id == b.id && a.role == b.role && a.label == b.label;
  };
  return page_id == o.page_id && popup_open == o.popup_open &&
         last_action_error == o.last_action_error && error_note == o.error_note &&
         step_count == o.step_count &&
         std::equal(elements.begin(), elements.end(), o.elements.begin(), o.elements.end(),
                    elem_eq);
}

std::string render_observation(const Observation& obs) {
  std::ostringstream out;
  out << "Page: " << obs.page_id;
  if (obs.popup_open) out << " [blocking popup is open]";
  out << "\n";
  for (const auto& e : obs.elements) {
    out << "  [" << e.id << "] " << e.role << " \"" << e.label << "\"\n";
  }
  if (obs.last_action_error) {
    out << "  !! last action failed: " << obs.error_note << "\n";
  }
  return out.str();
}

// ------------------------------------------------------------- page graph

const Element* Page::find(int element_id) const {
  for (const auto& e : elements) {
    if (e.id == element_id) return &e;
  }
  return nullptr;
}

const TaskSpec& PageGraph::task(const std::string& task_id) const {
  for (const auto& t : tasks) {
    if (t.id == task_id) return t;
  }
  throw UnknownTask("no task with id " + task_id);
}

void PageGraph::validate() const {
  if (!pages.count(start)) throw SchemaError("start page missing: " + start);
  for (const auto& [pid, page] : pages) {
    std::set<int> ids;
    for (const auto& e : page.elements) {
      if (!ids.insert(e.id).second) {
        throw SchemaError("duplicate element id on page " + pid);
      }
      if (e.target && !pages.count(*e.target)) {
        throw SchemaError("dangling target " + *e.target + " on page " + pid);
      }
    }
    if (page.popup_dismiss && !page.find(*page.popup_dismiss)) {
      throw SchemaError("popup dismiss element missing on page " + pid);
    }
  }
  for (const auto& t : tasks) {
    if (!t.goal.reach_page && !t.goal.answer_equals) {
      throw SchemaError("task " + t.id + " has an empty goal predicate");
    }
  }
}

namespace {

json element_to_json(const Element& e) {
  json j{{"id", e.id}, {"role", e.role}, {"label", e.label}};
  if (e.target) j["target"] = *e.target;
  if (e.distractor) j["distractor"] = true;
  if (e.irreversible) j["irreversible"] = true;
  return j;
}

Element element_from_json(const json& j) {
  Element e;
  e.id = j.at("id").get<int>();
  e.role = j.at("role").get<std::string>();
  e.label = j.at("label").get<std::string>();
  if (j.contains("target")) e.target = j.at("target").get<std::string>();
  e.distractor = j.value("distractor", false);
  e.irreversible = j.value("irreversible", false);
  return e;
}

}  // namespace

std::string page_graph_to_json(const PageGraph& g) {
  json j;
  j["format"] = "planmcts-env-v1";
  j["start"] = g.start;
  j["pages"] = json::array();
  for (const auto& [pid, page] : g.pages) {
    json p{{"id", pid}, {"elements", json::array()}};
    for (const auto& e : page.elements) p["elements"].push_back(element_to_json(e));
    if (page.popup_dismiss) p["popup_dismiss"] = *page.popup_dismiss;
    j["pages"].push_back(std::move(p));
  }
  j["tasks"] = json::array();
  for (const auto& t : g.tasks) {
    json tj{{"id", t.id}, {"instruction", t.instruction}, {"horizon", t.horizon}};
    json goal;
    if (t.goal.reach_page) goal["reach_page"] = *t.goal.reach_page;
    if (t.goal.answer_equals) goal["answer_equals"] = *t.goal.answer_equals;
    tj["goal"] = std::move(goal);
    if (t.impossible) tj["impossible"] = true;
    j["tasks"].push_back(std::move(tj));
  }
  return j.dump(2);
}

PageGraph page_graph_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad environment JSON: ") + e.what());
  }
  if (j.value("format", "") != "planmcts-env-v1") {
    throw SchemaError("unsupported environment format: " + j.value("format", "<missing>"));
  }
  PageGraph g;
  try {
    g.start = j.at("start").get<std::string>();
    for (const auto& pj : j.at("pages")) {
      Page p;
      p.id = pj.at("id").get<std::string>();
      for (const auto& ej : pj.at("elements")) p.elements.push_back(element_from_json(ej));
      if (pj.contains("popup_dismiss")) p.popup_dismiss = pj.at("popup_dismiss").get<int>();
      g.pages[p.id] = std::move(p);
    }
    for (const auto& tj : j.at("tasks")) {
      TaskSpec t;
      t.id = tj.at("id").get<std::string>();
      t.instruction = tj.at("instruction").get<std::string>();
      t.horizon = tj.value("horizon", 50);
      t.impossible = tj.value("impossible", false);
      const auto& goal = tj.at("goal");
      if (goal.contains("reach_page")) t.goal.reach_page = goal.at("reach_page").get<std::string>();
      if (goal.contains("answer_equals")) {
        t.goal.answer_equals = goal.at("answer_equals").get<std::string>();
      }
      g.tasks.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad environment JSON: ") + e.what());
  }
  g.validate();
  return g;
}

PageGraph load_page_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open environment file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return page_graph_from_json(buf.str());
}

void save_page_graph(const PageGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write environment file: " + path);
  out << page_graph_to_json(g) << "\n";
}

// -------------------------------------------------------------- generator

PageGraph generate_page_graph(const GeneratorParams& p) {
  if (p.branching < 2 || p.depth < 1 || p.valid_paths < 1) {
    throw InfeasibleParams("need branching >= 2, depth >= 1, valid_paths >= 1");
  }
  if (p.valid_paths > p.branching) {
    throw InfeasibleParams("valid_paths exceeds branching factor");
  }
  std::mt19937_64 rng(p.seed);
  PageGraph g;
  g.start = "start";
  const std::string answer = "code-" + std::to_string(1000 + p.seed % 9000);

  int dead_counter = 0;
  // Fills a page with `count` elements: the given valid links at randomized
  // slots, distractors everywhere else.
  auto fill_page = [&](Page& page, std::vector<Element> valid) {
    std::vector<int> slots(static_cast<std::size_t>(p.branching));
    for (int i = 0; i < p.branching; ++i) slots[static_cast<std::size_t>(i)] = i;
    std::shuffle(slots.begin(), slots.end(), rng);
    std::set<int> valid_slots(slots.begin(), slots.begin() + static_cast<long>(valid.size()));
    std::size_t vi = 0;
    for (int i = 0; i < p.branching; ++i) {
      if (valid_slots.count(i)) {
        Element e = valid[vi++];
        e.id = i;
        page.elements.push_back(std::move(e));
        continue;
      }
      Element d;
      d.id = i;
      d.distractor = true;
      if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p.distractor_ratio) {
        std::string dead_id = "dead_" + std::to_string(dead_counter++);
        Page dead;
        dead.id = dead_id;
        for (int k = 0; k < 3; ++k) {
          dead.elements.push_back(
              {k, "button", "Related offer " + std::to_string(k), std::nullopt, true, false});
        }
        g.pages[dead_id] = std::move(dead);
        d.role = "link";
        d.label = "Sponsored: deal " + std::to_string(dead_counter);
        d.target = dead_id;
        d.irreversible = true;
      } else {
        d.role = "button";
        d.label = "Banner " + std::to_string(i);
      }
      page.elements.push_back(std::move(d));
    }
    // deterministic id order for stable observations
    std::sort(page.elements.begin(), page.elements.end(),
              [](const Element& a, const Element& b) { return a.id < b.id; });
  };

  // Valid paths: start -> p<j>_1 -> ... -> p<j>_{D-1} -> goal.
  std::vector<Element> start_links;
  for (int j = 0; j < p.valid_paths; ++j) {
    std::string next = p.depth == 1 ? "goal" : "p" + std::to_string(j) + "_1";
    start_links.push_back(
        {-1, "link", "Open section " + std::to_string(j + 1), next, false, false});
  }
  Page start_page;
  start_page.id = g.start;
  fill_page(start_page, start_links);
  g.pages[g.start] = std::move(start_page);

  for (int j = 0; j < p.valid_paths; ++j) {
    for (int d = 1; d < p.depth; ++d) {
      Page page;
      page.id = "p" + std::to_string(j) + "_" + std::to_string(d);
      std::string next = d + 1 == p.depth ? "goal" : "p" + std::to_string(j) + "_" + std::to_string(d + 1);
      fill_page(page, {{-1, "link", "Continue to step " + std::to_string(d + 1), next, false,
                        false}});
      g.pages[page.id] = std::move(page);
    }
  }

  Page goal;
  goal.id = "goal";
  fill_page(goal, {{-1, "text", "Access code: " + answer, std::nullopt, false, false}});
  g.pages["goal"] = std::move(goal);

  TaskSpec t;
  t.id = "t0";
  t.instruction = "Navigate to the records section and report the access code.";
  t.goal.reach_page = "goal";
  t.goal.answer_equals = answer;
  g.tasks.push_back(std::move(t));
  g.validate();
  return g;
}

// ------------------------------------------------------------ environment

namespace {
std::uint64_t next_env_uid() {
  static std::uint64_t counter = 0;
  return ++counter;
}
}  // namespace

Environment::Environment(std::shared_ptr<const PageGraph> graph, const std::string& task_id,
                         std::uint64_t seed)
    : graph_(std::move(graph)), task_(graph_->task(task_id)), seed_(seed), uid_(next_env_uid()) {
  reset();
}

Observation Environment::reset() {
  state_ = State{};
  state_.page = graph_->start;
  trace_.clear();
  return observe();
}

Observation Environment::observe() const {
  const Page& page = graph_->pages.at(state_.page);
  Observation obs;
  obs.page_id = state_.page;
  obs.popup_open = page.popup_dismiss.has_value() && !state_.dismissed_popups.count(state_.page);
  for (const auto& e : page.elements) obs.elements.push_back({e.id, e.role, e.label});
  obs.last_action_error = state_.last_error;
  obs.error_note = state_.error_note;
  obs.step_count = state_.steps;
  return obs;
}

bool Environment::goal_satisfied(const std::string& answer) const {
  const auto& goal = task_.goal;
  if (goal.reach_page && state_.page != *goal.reach_page) return false;
  if (goal.answer_equals && answer != *goal.answer_equals) return false;
  return goal.reach_page || goal.answer_equals;
}

Environment::StepResult Environment::step(const AtomicAction& action) {
  if (state_.terminated) {
    return {observe(), true, state_.success};
  }
  ++interactions_;
  trace_.push_back(action);
  state_.last_error = false;
  state_.error_note.clear();

  const Page& page = graph_->pages.at(state_.page);
  bool popup = page.popup_dismiss.has_value() && !state_.dismissed_popups.count(state_.page);

  auto fail = [&](const std::string& note) {
    state_.last_error = true;
    state_.error_note = note;
  };

  switch (action.kind) {
    case ActionKind::Click: {
      const Element* e = page.find(action.target);
      if (!e) {
        fail("no element " + std::to_string(action.target) + " on this page");
        break;
      }
      if (popup && action.target != *page.popup_dismiss) {
        fail("a popup is blocking the page");
        break;
      }
      if (popup && action.target == *page.popup_dismiss) {
        state_.dismissed_popups.insert(state_.page);
        break;
      }
      if (e->target) state_.page = *e->target;
      break;
    }
    case ActionKind::Type: {
      const Element* e = page.find(action.target);
      if (!e || e->role != "textbox") {
        fail("cannot type into element " + std::to_string(action.target));
      } else if (popup) {
        fail("a popup is blocking the page");
      } else {
        state_.typed[state_.page + ":" + std::to_string(action.target)] = action.text;
      }
      break;
    }
    case ActionKind::Scroll:
    case ActionKind::Noop:
      break;
    case ActionKind::Goto:
      if (action.text == graph_->start) {
        state_.page = graph_->start;
      } else {
        fail("cannot navigate directly to " + action.text);
      }
      break;
    case ActionKind::SendMessage:
      state_.terminated = true;
      state_.answer = action.text;
      state_.success = goal_satisfied(action.text);
      break;
  }

  ++state_.steps;
  if (!state_.terminated && state_.steps >= task_.horizon) {
    state_.terminated = true;
    state_.success = false;
  }
  return {observe(), state_.terminated, state_.success};
}

StateHandle Environment::snapshot() const {
  snapshots_.emplace_back(state_, trace_);
  return {uid_, snapshots_.size() - 1, trace_};
}

Observation Environment::restore(const StateHandle& h) {
  if (h.env_uid != uid_ || h.token >= snapshots_.size()) {
    throw StaleHandle("handle does not belong to this environment instance");
  }
  state_ = snapshots_[h.token].first;
  trace_ = snapshots_[h.token].second;
  return observe();
}

Observation Environment::restore_by_replay(const StateHandle& h) {
  if (h.env_uid != uid_) {
    throw StaleHandle("handle does not belong to this environment instance");
  }
  auto actions = h.trace;
  reset();
  for (const auto& a : actions) step(a);
  return observe();
}

std::string Environment::state_key() const {
  std::ostringstream key;
  key << state_.page;
  if (state_.terminated) key << ";done=" << (state_.success ? 1 : 0);
  key << ";d=";
  for (const auto& p : state_.dismissed_popups) key << p << ",";
  key << ";t=";
  for (const auto& [k, v] : state_.typed) key << k << "=" << v << ",";
  return key.str();
}

// ----------------------------------------------------------------- oracle

namespace {

// BFS over environment copies; returns the shortest satisfying trajectory
// from the state of `start_env`.
std::optional<std::vector<AtomicAction>> solve_from(const Environment& start_env, int max_len) {
  const auto& goal = start_env.task().goal;
  const std::string answer = goal.answer_equals ? *goal.answer_equals : "done";

  struct Node {
    Environment env;
    std::vector<AtomicAction> actions;
  };
  std::deque<Node> frontier;
  std::set<std::string> seen;
  frontier.push_back({start_env, {}});
  seen.insert(start_env.state_key());

  while (!frontier.empty()) {
    Node cur = std::move(frontier.front());
    frontier.pop_front();
    if (static_cast<int>(cur.actions.size()) >= max_len) continue;

    {
      Environment probe = cur.env;
      auto r = probe.step(AtomicAction::send_message(answer));
      if (r.success) {
        auto actions = cur.actions;
        actions.push_back(AtomicAction::send_message(answer));
        return actions;
      }
    }
    const Page& page = cur.env.graph().pages.at(cur.env.observe().page_id);
    for (const auto& e : page.elements) {
      if (e.role != "link" && e.role != "button") continue;
      Environment next = cur.env;
      auto r = next.step(AtomicAction::click(e.id));
      if (r.obs.last_action_error || r.terminated) continue;
      if (!seen.insert(next.state_key()).second) continue;
      auto actions = cur.actions;
      actions.push_back(AtomicAction::click(e.id));
      frontier.push_back({std::move(next), std::move(actions)});
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::vector<AtomicAction>> oracle_solve(const PageGraph& graph,
                                                      const std::string& task_id, int max_len) {
  auto shared = std::make_shared<PageGraph>(graph);
  Environment env(shared, task_id);
  return solve_from(env, max_len);
}

OracleMap::OracleMap(std::shared_ptr<const PageGraph> graph, const std::string& task_id,
                     int max_len) {
  Environment root(graph, task_id);
  answer_ = root.task().goal.answer_equals ? *root.task().goal.answer_equals : "done";

  // Enumerate all reachable live states, then solve from each.
  std::deque<Environment> frontier;
  std::set<std::string> seen;
  frontier.push_back(root);
  seen.insert(root.state_key());
  std::vector<Environment> states;
  while (!frontier.empty()) {
    Environment cur = std::move(frontier.front());
    frontier.pop_front();
    states.push_back(cur);
    const Page& page = cur.graph().pages.at(cur.observe().page_id);
    for (const auto& e : page.elements) {
      if (e.role != "link" && e.role != "button") continue;
      Environment next = cur;
      auto r = next.step(AtomicAction::click(e.id));
      if (r.obs.last_action_error || r.terminated) continue;
      if (seen.insert(next.state_key()).second) frontier.push_back(std::move(next));
    }
  }
  for (const auto& st : states) {
    if (auto path = solve_from(st, max_len)) {
      remaining_[st.state_key()] = *path;
    }
  }
  auto it = remaining_.find(root.state_key());
  if (it != remaining_.end()) initial_length_ = static_cast<int>(it->second.size());
}

std::optional<std::vector<AtomicAction>> OracleMap::remaining(const std::string& state_key) const {
  auto it = remaining_.find(state_key);
  if (it == remaining_.end()) return std::nullopt;
  return it->second;
}

}  // namespace planmcts
