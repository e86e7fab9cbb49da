#include "planmcts/search.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "planmcts/scripted_policies.hpp"

namespace planmcts {

using nlohmann::json;

void SearchConfig::validate() const {
  if (budget < 0) throw Error("budget must be >= 0");
  if (max_depth < 1 || branch_width < 1) throw Error("max_depth and branch_width must be >= 1");
  if (c < 0.0) throw Error("exploration constant must be >= 0");
  if (max_atomic_steps < 1) throw Error("max_atomic_steps must be >= 1");
  if (refine_retries < 0) throw Error("refine_retries must be >= 0");
  if (macro_samples < 1) throw Error("macro_samples must be >= 1");
}

SelectedLeaf select_leaf(PlanTree& tree, double c) {
  PlanNode* node = &tree.root();
  SelectedLeaf out;
  while (true) {
    if (node->edges.empty()) {
      throw ExhaustedTree("no selectable edge within the depth bound");
    }
    std::size_t idx = select_edge(*node, c);
    SubplanEdge* edge = &node->edges[idx];
    out.path.push_back(edge);
    if (!edge->child || !edge->child->expanded()) {
      out.node = node;
      out.edge_index = idx;
      return out;
    }
    node = edge->child.get();
  }
}

std::string render_operator_context(const std::string& goal, const PlanHistory& history,
                                    const TrajectorySegment& local, const Subplan& subplan,
                                    const Observation& obs, int action_ordinal_base,
                                    const std::vector<std::string>& extra_context) {
  std::ostringstream out;
  out << "### User Instruction ###\n" << goal << "\n\n";
  out << "### Subplan History ###\nPreviously executed subplans:\n";
  if (history.empty()) {
    out << "(none)\n";
  } else {
    for (const auto& h : history) {
      out << "- " << h.text << " ["
          << (h.status == SubplanStatus::Completed ? "Completed" : "Not Completed") << "]\n";
    }
  }
  for (const auto& line : extra_context) out << line << "\n";
  out << "\n### Current Subplan to Execute ###\n" << subplan.text << "\n";
  out << "\n### Interaction History (Current Subplan) ###\n";
  if (local.actions.empty()) {
    out << "(none)\n";
  } else {
    for (std::size_t i = 0; i < local.actions.size(); ++i) {
      out << "a" << (action_ordinal_base + static_cast<int>(i)) << ":"
          << to_string(local.actions[i]);
      if (i + 1 < local.observations.size() && local.observations[i + 1].last_action_error) {
        out << "  -> ERROR: " << local.observations[i + 1].error_note;
      }
      out << "\n";
    }
  }
  out << "\n### Current Page Accessibility Tree ###\n" << render_observation(obs);
  return out.str();
}

namespace {

constexpr const char* kActionEdgePrefix = "execute action: ";

struct Candidate {
  std::string answer;
  double reward = 0.0;
  bool env_success = false;
  int iteration = 0;
  int solution_len = 0;
};

struct SimOutcome {
  TrajectorySegment seg;
  Observation pre_obs;
  Observation post_obs;
  std::string post_key;
  bool env_success = false;
  StateHandle child_handle;  // post-edge state (before any rollout tail)
  std::vector<std::string> contexts;
};

struct Runner {
  Environment& env;
  const PolicyBundle& pol;
  const SearchConfig& cfg;
  std::string goal;
  EpisodeResult res;
  std::unique_ptr<PlanTree> tree;
  int action_counter = 0;
  // Tagged record of every atomic action executed this episode; feeds the
  // full-history context baseline.
  std::vector<std::string> episode_action_log;
  std::map<const PlanNode*, std::vector<std::string>> feedback;
  std::optional<Candidate> best;

  Runner(Environment& e, const PolicyBundle& p, const SearchConfig& c)
      : env(e), pol(p), cfg(c), goal(e.task().instruction) {}

  std::vector<std::string> extra_context(const PlanNode& node) const {
    std::vector<std::string> extra;
    if (cfg.full_history_context && !episode_action_log.empty()) {
      extra.push_back("Full interaction history (all subplans):");
      for (const auto& a : episode_action_log) extra.push_back("  " + a);
    }
    auto it = feedback.find(&node);
    if (it != feedback.end()) {
      for (const auto& f : it->second) extra.push_back("Reflector feedback: " + f);
    }
    return extra;
  }

  std::vector<Subplan> propose_with_retry(const Observation& obs, const PlanHistory& history) {
    for (int attempt = 0;; ++attempt) {
      try {
        auto subplans = pol.planner->propose(obs, history, cfg.branch_width);
        if (subplans.empty() || static_cast<int>(subplans.size()) > cfg.branch_width) {
          throw ProposalParseFailure("planner returned an invalid candidate count");
        }
        return subplans;
      } catch (const ProposalParseFailure&) {
        if (attempt >= cfg.policy_retries) throw;
      }
    }
  }

  OperatorDecision decide_with_retry(const Observation& obs, const PlanHistory& history,
                                     const TrajectorySegment& local, const Subplan& plan) {
    for (int attempt = 0;; ++attempt) {
      try {
        return pol.op->decide(obs, history, local, plan);
      } catch (const DecisionParseFailure&) {
        if (attempt >= cfg.policy_retries) throw;
      }
    }
  }

  // Runs the operator loop for `plan` from the node's state. For action
  // edges the edge action is applied first and a bounded greedy rollout
  // estimates the downstream value.
  SimOutcome simulate(const PlanNode& node, const SubplanEdge& edge, const Subplan& plan) {
    SimOutcome out;
    Observation obs = env.restore(node.state);
    out.pre_obs = obs;
    out.seg.observations.push_back(obs);
    out.seg.terminated = TrajectorySegment::Terminated::StepCapReached;
    int base = action_counter;
    bool edge_stepped = false;

    auto apply = [&](const AtomicAction& a) {
      auto r = env.step(a);
      episode_action_log.push_back("a" + std::to_string(action_counter++) + ":" + to_string(a));
      out.seg.actions.push_back(a);
      out.seg.observations.push_back(r.obs);
      return r;
    };

    Subplan rollout_plan = plan;
    while (static_cast<int>(out.seg.actions.size()) < cfg.max_atomic_steps) {
      AtomicAction next;
      if (cfg.space == SearchSpace::Action && !edge_stepped) {
        next = *edge.action;
      } else {
        if (cfg.space == SearchSpace::Action) {
          rollout_plan = Subplan(kRolloutDirective);
        }
        out.contexts.push_back(render_operator_context(goal, node.plan_history, out.seg,
                                                       rollout_plan, obs, base,
                                                       extra_context(node)));
        OperatorDecision dec =
            decide_with_retry(obs, node.plan_history, out.seg, rollout_plan);
        if (dec.subplan_done && dec.action.kind == ActionKind::Noop) {
          out.seg.terminated = TrajectorySegment::Terminated::Fulfilled;
          break;
        }
        next = dec.action;
      }
      auto r = apply(next);
      obs = r.obs;
      if (!edge_stepped && cfg.space == SearchSpace::Action) {
        edge_stepped = true;
        out.child_handle = env.snapshot();
      }
      if (next.kind == ActionKind::SendMessage) {
        out.seg.terminated = TrajectorySegment::Terminated::AnswerEmitted;
        out.env_success = r.success;
        break;
      }
      if (r.terminated) {
        out.seg.terminated = TrajectorySegment::Terminated::EnvError;
        break;
      }
    }
    out.post_obs = out.seg.observations.back();
    out.post_key = env.state_key();
    if (cfg.space == SearchSpace::Plan) out.child_handle = env.snapshot();
    return out;
  }

  RewardRecord evaluate_outcome(const PlanNode& node, const Subplan& plan,
                                const SimOutcome& out, int* macro_calls) {
    EvaluationContext ctx;
    ctx.goal = goal;
    ctx.plan_history = node.plan_history;
    ctx.subplan = plan;
    ctx.pre_obs = out.pre_obs;
    ctx.post_obs = out.post_obs;
    ctx.segment = out.seg;
    ctx.post_state_key = out.post_key;
    ctx.env_success = out.env_success;
    RewardRecord rec;
    *macro_calls = 0;
    switch (cfg.reward_mode) {
      case RewardMode::Dual: {
        rec.r_micro = micro_verify(ctx, *pol.micro_judge, &rec.notes);
        if (rec.r_micro == 0) {
          rec.reward = 0.0;
          return rec;
        }
        MacroResult m = macro_assess(ctx, *pol.macro_judge, cfg.macro_samples, cfg.macro_scale);
        *macro_calls = m.judge_calls;
        for (const auto& s : m.samples) rec.macro_samples.push_back(cfg.macro_scale.value(s.code));
        rec.r_macro = m.mean;
        rec.reward = gate(rec.r_micro, rec.r_macro);
        return rec;
      }
      case RewardMode::MicroOnly:
        rec.r_micro = micro_verify(ctx, *pol.micro_judge, &rec.notes);
        rec.reward = static_cast<double>(rec.r_micro);
        return rec;
      case RewardMode::MacroOnly: {
        rec.r_micro = micro_verify(ctx, *pol.micro_judge, &rec.notes);
        MacroResult m = macro_assess(ctx, *pol.macro_judge, cfg.macro_samples, cfg.macro_scale);
        *macro_calls = m.judge_calls;
        for (const auto& s : m.samples) rec.macro_samples.push_back(cfg.macro_scale.value(s.code));
        rec.r_macro = m.mean;
        rec.reward = rec.r_macro;  // gate removed
        return rec;
      }
    }
    return rec;
  }

  void expand_node(PlanNode& node, int iteration) {
    Observation obs = env.restore(node.state);
    json ev{{"node", node.node_id}, {"depth", node.depth}};
    try {
      std::vector<Subplan> subplans;
      if (cfg.space == SearchSpace::Plan) {
        subplans = propose_with_retry(obs, node.plan_history);
        add_children(node, subplans);
      } else {
        auto actions = pol.op->propose_actions(obs, node.plan_history, cfg.branch_width);
        if (actions.empty()) throw ProposalParseFailure("no action candidates");
        for (const auto& a : actions) {
          subplans.emplace_back(kActionEdgePrefix + to_string(a));
        }
        add_children(node, subplans);
        for (std::size_t i = 0; i < actions.size(); ++i) node.edges[i].action = actions[i];
      }
      ev["subplans"] = json::array();
      for (const auto& s : subplans) ev["subplans"].push_back(s.text);
    } catch (const ProposalParseFailure& e) {
      node.exhausted = true;
      ev["exhausted"] = true;
      ev["error"] = e.what();
      if (node.depth == 0) {
        res.trace.add(iteration, "expansion", std::move(ev));
        throw PolicyFailure(std::string("root expansion failed: ") + e.what());
      }
    }
    res.trace.add(iteration, "expansion", std::move(ev));
  }

  json simulation_event(const SubplanEdge& edge, const Subplan& plan, const SimOutcome& out,
                        const RewardRecord& rec, int macro_calls) {
    json ev{{"subplan", plan.text},
            {"origin", to_string(plan.origin)},
            {"micro", rec.r_micro},
            {"macro", rec.r_macro},
            {"reward", rec.reward},
            {"steps", out.seg.actions.size()},
            {"terminated", to_string(out.seg.terminated)},
            {"macro_judge_calls", macro_calls},
            {"env_error", out.seg.has_env_error()}};
    if (edge.action) ev["action"] = to_string(*edge.action);
    std::size_t context_chars = 0;
    json hashes = json::array();
    for (const auto& c : out.contexts) {
      context_chars += c.size();
      hashes.push_back(stable_hash_hex(c));
    }
    ev["operator_contexts"] = out.contexts;
    ev["operator_context_hashes"] = std::move(hashes);
    ev["operator_context_chars"] = context_chars;
    if (out.seg.terminated == TrajectorySegment::Terminated::AnswerEmitted) {
      ev["answer"] = out.seg.answer();
      ev["env_success"] = out.env_success;
    }
    return ev;
  }

  int path_solution_len(const std::vector<SubplanEdge*>& path, const TrajectorySegment& last) {
    int len = static_cast<int>(last.actions.size());
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      if (path[i]->grounding) len += static_cast<int>(path[i]->grounding->actions.size());
    }
    return len;
  }

  void backpropagate_path(std::vector<SubplanEdge*>& path, double reward, int iteration) {
    if (cfg.selection == SelectionRule::Uct) {
      backpropagate(path, reward);
    } else {
      // Best-first: scores are not averaged along the path; each edge keeps
      // the best gated reward observed for itself.
      for (SubplanEdge* e : path) e->visit_count += 1;
      SubplanEdge* leaf = path.back();
      leaf->q_value = std::max(leaf->q_value, reward);
    }
    res.trace.add(iteration, "backpropagation",
                  {{"reward", reward}, {"path_len", path.size()}});
  }

  EpisodeResult run() {
    cfg.validate();
    res.trace.add(0, "episode_start",
                  {{"goal", goal},
                   {"task", env.task().id},
                   {"budget", cfg.budget},
                   {"max_depth", cfg.max_depth},
                   {"branch_width", cfg.branch_width},
                   {"c", cfg.c},
                   {"space", cfg.space == SearchSpace::Plan ? "plan" : "action"},
                   {"selection", cfg.selection == SelectionRule::Uct ? "uct" : "best_first"}});
    Observation root_obs = env.reset();
    (void)root_obs;
    tree = std::make_unique<PlanTree>(env.snapshot());

    try {
      if (cfg.budget > 0) {
        expand_node(tree->root(), 0);  // root frontier precedes iteration 1
        iterate();
      }
    } catch (const PolicyFailure& e) {
      res.trace.add(res.iterations_used, "note",
                    {{"error", "policy_failure"}, {"detail", e.what()}});
      best.reset();
    } catch (const DecisionParseFailure& e) {
      res.trace.add(res.iterations_used, "note",
                    {{"error", "policy_failure"}, {"detail", e.what()}});
      best.reset();
    }

    res.success = best && best->env_success;
    if (best) {
      res.answer = best->answer;
      res.solution_len = best->solution_len;
    }
    res.env_steps = env.interaction_count();
    res.trace.add(res.iterations_used, "episode_end",
                  {{"success", res.success},
                   {"answer", res.answer ? json(*res.answer) : json()},
                   {"iterations_used", res.iterations_used},
                   {"budget", cfg.budget},
                   {"env_steps", res.env_steps},
                   {"solution_len", res.solution_len},
                   {"subplans_grounded", res.subplans_grounded},
                   {"subplans_completed", res.subplans_completed},
                   {"tree", json::parse(tree->to_json())}});
    return res;
  }

  void iterate() {
    for (int it = 1; it <= cfg.budget; ++it) {
      SelectedLeaf sel;
      try {
        sel = select_leaf(*tree, cfg.selection == SelectionRule::BestFirst ? 0.0 : cfg.c);
      } catch (const ExhaustedTree&) {
        res.trace.add(it, "note", {{"event", "tree_exhausted"}});
        break;
      }
      res.iterations_used = it;
      PlanNode& node = *sel.node;
      SubplanEdge& edge = node.edges[sel.edge_index];
      res.trace.add(it, "selection",
                    {{"node", node.node_id},
                     {"edge_index", sel.edge_index},
                     {"subplan", edge.subplan.text},
                     {"depth", node.depth}});

      SimOutcome out = simulate(node, edge, edge.subplan);
      int macro_calls = 0;
      RewardRecord rec = evaluate_outcome(node, edge.subplan, out, &macro_calls);
      ++res.subplans_grounded;
      if (rec.r_micro == 1) ++res.subplans_completed;
      res.trace.add(it, "simulation", simulation_event(edge, edge.subplan, out, rec, macro_calls));

      // Refinement: on-policy repair of an unverified grounding.
      if (cfg.space == SearchSpace::Plan && rec.r_micro == 0 && !edge.child) {
        if (cfg.refine_mode == RefineMode::Structural && cfg.refine_retries > 0) {
          refine(node, edge, out, rec, macro_calls, it);
        } else if (cfg.refine_mode == RefineMode::ReflectionOnly) {
          reflect_only(node, edge, out, it);
        }
      }

      bool verified = rec.r_micro == 1;
      bool expandable_transition =
          cfg.reward_mode == RewardMode::MacroOnly
              ? out.seg.terminated != TrajectorySegment::Terminated::AnswerEmitted &&
                    out.seg.terminated != TrajectorySegment::Terminated::EnvError
              : verified && out.seg.terminated != TrajectorySegment::Terminated::AnswerEmitted;

      bool terminal_candidate =
          out.seg.terminated == TrajectorySegment::Terminated::AnswerEmitted &&
          !out.seg.answer().empty() &&
          (cfg.space == SearchSpace::Action || rec.r_micro == 1);

      edge.subplan.status = verified
                                ? SubplanStatus::Completed
                                : (edge.subplan.status == SubplanStatus::Failed
                                       ? SubplanStatus::Failed
                                       : SubplanStatus::NotCompleted);

      if (terminal_candidate) {
        edge.grounding = out.seg;
        edge.subplan.status = SubplanStatus::Completed;
        Candidate cand{out.seg.answer(), rec.reward, out.env_success, it,
                       path_solution_len(sel.path, out.seg)};
        if (!best || cand.reward > best->reward) best = cand;
        res.trace.add(it, "note",
                      {{"event", "verified_terminal"},
                       {"answer", cand.answer},
                       {"reward", cand.reward}});
      } else if (expandable_transition && !edge.child && node.depth + 1 <= cfg.max_depth) {
        edge.grounding = out.seg;
        PlanHistory history = node.plan_history;
        history.push_back({edge.subplan.text, SubplanStatus::Completed});
        PlanNode& child =
            tree->make_child(edge, out.child_handle, std::move(history), node.depth + 1);
        if (child.depth < cfg.max_depth) expand_node(child, it);
      } else if (expandable_transition && !edge.grounding) {
        edge.grounding = out.seg;
      }

      backpropagate_path(sel.path, rec.reward, it);
      if (best && !cfg.exhaust_budget) break;
    }
  }

  void refine(PlanNode& node, SubplanEdge& edge, SimOutcome& out, RewardRecord& rec,
              int& macro_calls, int it) {
    const std::string original_text = edge.subplan.text;
    for (int attempt = 1; attempt <= cfg.refine_retries && rec.r_micro == 0; ++attempt) {
      ReflectorVerdict verdict;
      try {
        verdict = pol.reflector->revise(out.post_obs, node.plan_history, edge.subplan, out.seg);
        if (verdict.revised_plan.empty()) {
          throw ReflectorParseFailure("empty revised plan");
        }
      } catch (const ReflectorParseFailure& e) {
        res.trace.add(it, "refinement",
                      {{"attempt", attempt}, {"error", e.what()}, {"exhausted", true}});
        break;
      }
      Subplan revised(verdict.revised_plan, SubplanOrigin::Reflector, verdict.reason);
      revised.replaced_text = original_text;
      edge.subplan = revised;  // in-place structural replacement
      out = simulate(node, edge, edge.subplan);
      rec = evaluate_outcome(node, edge.subplan, out, &macro_calls);
      ++res.subplans_grounded;
      if (rec.r_micro == 1) ++res.subplans_completed;
      json ev = simulation_event(edge, edge.subplan, out, rec, macro_calls);
      ev["attempt"] = attempt;
      ev["reason_type"] =
          verdict.reason_type == ReflectorReason::FeasibilityError ? "feasibility" : "complexity";
      ev["replaced"] = original_text;
      res.trace.add(it, "refinement", std::move(ev));
    }
    if (rec.r_micro == 0) {
      edge.subplan.status = SubplanStatus::Failed;
      rec.reward = 0.0;  // failed edge: reward 0 keeps statistics consistent
    }
  }

  void reflect_only(PlanNode& node, SubplanEdge& edge, const SimOutcome& out, int it) {
    try {
      ReflectorVerdict verdict =
          pol.reflector->revise(out.post_obs, node.plan_history, edge.subplan, out.seg);
      feedback[&node].push_back(verdict.reason + " (suggested: " + verdict.revised_plan + ")");
      res.trace.add(it, "refinement",
                    {{"mode", "reflection_only"}, {"feedback", verdict.reason}});
    } catch (const ReflectorParseFailure& e) {
      res.trace.add(it, "refinement", {{"mode", "reflection_only"}, {"error", e.what()}});
    }
  }
};

}  // namespace

EpisodeResult run_episode(Environment& env, const PolicyBundle& policies,
                          const SearchConfig& cfg) {
  policies.require_complete();
  Runner runner(env, policies, cfg);
  return runner.run();
}

}  // namespace planmcts
