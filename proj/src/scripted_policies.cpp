#include "planmcts/scripted_policies.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace planmcts {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::vector<std::string> quoted_parts(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find('\'', pos);
    if (open == std::string::npos) break;
    auto close = text.find('\'', open + 1);
    if (close == std::string::npos) break;
    out.push_back(text.substr(open + 1, close - open - 1));
    pos = close + 1;
  }
  return out;
}

int find_by_label(const Observation& obs, const std::string& label) {
  for (const auto& e : obs.elements) {
    if (e.label == label) return e.id;
  }
  return -1;
}

std::string label_of(const Observation& obs, int id) {
  for (const auto& e : obs.elements) {
    if (e.id == id) return e.label;
  }
  return {};
}

bool clickable(const ElementView& e) { return e.role == "link" || e.role == "button"; }

// Deterministic wrong-click target for corrupted steps.
int pick_wrong(const Observation& obs, int avoid_id) {
  for (const auto& e : obs.elements) {
    if (e.id != avoid_id && clickable(e)) return e.id;
  }
  return avoid_id;
}

std::string strip_retry_prefixes(std::string text) {
  for (const std::string& prefix : {std::string("retry: "), std::string("carefully ")}) {
    if (text.rfind(prefix, 0) == 0) text = text.substr(prefix.size());
  }
  return text;
}

}  // namespace

bool NoiseSchedule::next() {
  if (rate_ <= 0.0) return false;
  std::uint64_t h = splitmix64(seed_ ^ splitmix64(++counter_));
  return static_cast<double>(h >> 11) / 9007199254740992.0 < rate_;  // 2^53
}

SubplanDirective parse_directive(const std::string& subplan_text) {
  SubplanDirective d;
  const std::string exec_prefix = "execute action:";
  if (subplan_text.rfind(exec_prefix, 0) == 0) {
    d.kind = SubplanDirective::Kind::ExecuteAction;
    d.action = parse_action(subplan_text.substr(exec_prefix.size()));
    return d;
  }
  if (subplan_text.find(kRolloutDirective) != std::string::npos) {
    d.kind = SubplanDirective::Kind::Rollout;
    return d;
  }
  auto quotes = quoted_parts(subplan_text);
  if (subplan_text.find("report the answer") != std::string::npos) {
    d.kind = SubplanDirective::Kind::Answer;
    if (!quotes.empty()) d.message = quotes.front();
    return d;
  }
  if (subplan_text.find("click") != std::string::npos && !quotes.empty()) {
    d.kind = SubplanDirective::Kind::ClickSequence;
    d.labels = std::move(quotes);
    return d;
  }
  return d;
}

// ------------------------------------------------------------ oracle bundle

namespace {

struct OracleContext {
  std::shared_ptr<const PageGraph> graph;
  const Environment* env = nullptr;
  OracleMap oracle;
  ScriptedOptions opt;
  NoiseSchedule noise;
  // Undirected rollouts (no subplan guidance) are modelled as twice as
  // error-prone as directed execution.
  NoiseSchedule rollout_noise;

  OracleContext(std::shared_ptr<const PageGraph> g, const std::string& task_id,
                const Environment* e, const ScriptedOptions& o)
      : graph(std::move(g)),
        env(e),
        oracle(graph, task_id),
        opt(o),
        noise(o.epsilon, o.seed),
        rollout_noise(std::min(1.0, 2.0 * o.epsilon), o.seed + 1) {}
};

class OraclePlanner : public Planner {
 public:
  explicit OraclePlanner(std::shared_ptr<OracleContext> ctx) : ctx_(std::move(ctx)) {}

  std::vector<Subplan> propose(const Observation& obs, const PlanHistory& history,
                               int k) override {
    std::vector<Subplan> out;
    std::vector<std::string> used_labels;
    auto remaining = ctx_->oracle.remaining(ctx_->env->state_key());
    bool after_failure = !history.empty() && history.back().status != SubplanStatus::Completed &&
                         history.back().status != SubplanStatus::Unattempted;

    if (remaining && !remaining->empty()) {
      std::string main;
      if ((*remaining)[0].kind == ActionKind::SendMessage) {
        main = "report the answer '" + (*remaining)[0].text + "'";
      } else {
        // Walk a copy of the environment along the oracle prefix to read the
        // labels of the next few clicks.
        Environment probe = *ctx_->env;
        std::ostringstream text;
        int clicks = 0;
        for (const auto& a : *remaining) {
          if (a.kind != ActionKind::Click || clicks >= ctx_->opt.segment_len) break;
          std::string label = label_of(probe.observe(), a.target);
          text << (clicks == 0 ? "click '" : " then click '") << label << "'";
          used_labels.push_back(label);
          probe.step(a);
          ++clicks;
        }
        main = text.str();
      }
      if (after_failure) main = "retry: " + main;
      out.emplace_back(main, SubplanOrigin::Planner, "continue along the promising route");
    }

    // Alternative / decoy candidates from the visible elements. When a
    // confident main route exists, one alternative is enough; flooding the
    // frontier with decoys only burns selection budget.
    int limit = out.empty() ? k : std::min(k, 2);
    for (const auto& e : obs.elements) {
      if (static_cast<int>(out.size()) >= limit) break;
      if (!clickable(e)) continue;
      if (std::find(used_labels.begin(), used_labels.end(), e.label) != used_labels.end()) {
        continue;
      }
      std::string text = "click '" + e.label + "'";
      bool dup = std::any_of(out.begin(), out.end(),
                             [&](const Subplan& s) { return s.text.find(text) != std::string::npos; });
      if (dup) continue;
      out.emplace_back(text, SubplanOrigin::Planner, "explore a different element");
    }
    if (out.empty()) {
      out.emplace_back("report the answer 'done'", SubplanOrigin::Planner, "nothing left to try");
    }
    if (static_cast<int>(out.size()) > k) out.resize(static_cast<std::size_t>(k));
    return out;
  }

 private:
  std::shared_ptr<OracleContext> ctx_;
};

class OracleOperator : public Operator {
 public:
  explicit OracleOperator(std::shared_ptr<OracleContext> ctx) : ctx_(std::move(ctx)) {}

  OperatorDecision decide(const Observation& obs, const PlanHistory& /*history*/,
                          const TrajectorySegment& local, const Subplan& subplan) override {
    auto d = parse_directive(subplan.text);
    OperatorDecision dec;
    switch (d.kind) {
      case SubplanDirective::Kind::Answer: {
        if (!local.actions.empty()) {
          dec.subplan_done = true;
          dec.reason = "answer already sent";
          return dec;
        }
        std::string msg = d.message;
        dec.action = AtomicAction::send_message(msg);
        dec.subplan_done = true;
        dec.reason = "emit the final answer";
        return dec;
      }
      case SubplanDirective::Kind::ClickSequence: {
        std::size_t i = local.actions.size();
        if (i >= d.labels.size()) {
          dec.subplan_done = true;
          dec.reason = "all directed clicks performed";
          return dec;
        }
        int id = find_by_label(obs, d.labels[i]);
        if (id < 0) {
          dec.action = AtomicAction::click(9999);
          dec.reason = "cannot find '" + d.labels[i] + "', attempting anyway";
          return dec;
        }
        if (ctx_->noise.next()) {
          dec.action = AtomicAction::click(pick_wrong(obs, id));
          dec.reason = "misclick";
          return dec;
        }
        dec.action = AtomicAction::click(id);
        dec.reason = "click '" + d.labels[i] + "'";
        return dec;
      }
      case SubplanDirective::Kind::ExecuteAction: {
        if (!local.actions.empty()) {
          dec.subplan_done = true;
          return dec;
        }
        dec.action = d.action;
        dec.reason = "execute the edge action";
        return dec;
      }
      case SubplanDirective::Kind::Rollout: {
        auto remaining = ctx_->oracle.remaining(ctx_->env->state_key());
        if (remaining && !remaining->empty()) {
          AtomicAction a = (*remaining)[0];
          if (a.kind == ActionKind::Click && ctx_->rollout_noise.next()) {
            a = AtomicAction::click(pick_wrong(obs, a.target));
            dec.reason = "misclick";
          } else {
            dec.reason = "follow the route";
          }
          dec.action = a;
          if (a.kind == ActionKind::SendMessage) dec.subplan_done = true;
          return dec;
        }
        // Stuck off the valid paths: wander until the step cap.
        for (const auto& e : obs.elements) {
          if (clickable(e)) {
            dec.action = AtomicAction::click(e.id);
            dec.reason = "wander";
            return dec;
          }
        }
        dec.subplan_done = true;
        return dec;
      }
      case SubplanDirective::Kind::Unknown:
        dec.subplan_done = true;
        dec.reason = "cannot interpret the subplan";
        return dec;
    }
    return dec;
  }

  std::vector<AtomicAction> propose_actions(const Observation& obs, const PlanHistory&,
                                            int k) override {
    std::vector<AtomicAction> out;
    auto push_unique = [&](const AtomicAction& a) {
      if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
    };
    auto remaining = ctx_->oracle.remaining(ctx_->env->state_key());
    if (remaining && !remaining->empty()) {
      AtomicAction a = (*remaining)[0];
      if (a.kind == ActionKind::Click && ctx_->noise.next()) {
        a = AtomicAction::click(pick_wrong(obs, a.target));
      }
      push_unique(a);
    }
    for (const auto& e : obs.elements) {
      if (static_cast<int>(out.size()) >= k) break;
      if (clickable(e)) push_unique(AtomicAction::click(e.id));
    }
    if (out.empty()) out.push_back(AtomicAction::send_message("done"));
    if (static_cast<int>(out.size()) > k) out.resize(static_cast<std::size_t>(k));
    return out;
  }

 private:
  std::shared_ptr<OracleContext> ctx_;
};

class OracleMicroJudge : public MicroJudge {
 public:
  explicit OracleMicroJudge(std::shared_ptr<OracleContext> ctx) : ctx_(std::move(ctx)) {}

  int verify(const EvaluationContext& ctx) override {
    const auto& seg = ctx.segment;
    auto d = parse_directive(ctx.subplan.text);
    switch (d.kind) {
      case SubplanDirective::Kind::Answer:
        return seg.terminated == TrajectorySegment::Terminated::AnswerEmitted &&
                       !seg.answer().empty() && !seg.has_env_error()
                   ? 1
                   : 0;
      case SubplanDirective::Kind::ClickSequence: {
        if (seg.has_env_error()) return 0;
        if (seg.terminated != TrajectorySegment::Terminated::Fulfilled) return 0;
        if (seg.actions.size() != d.labels.size()) return 0;
        for (std::size_t i = 0; i < seg.actions.size(); ++i) {
          if (seg.actions[i].kind != ActionKind::Click) return 0;
          if (label_of(seg.observations[i], seg.actions[i].target) != d.labels[i]) return 0;
        }
        return 1;
      }
      case SubplanDirective::Kind::ExecuteAction: {
        if (seg.actions.empty() || !(seg.actions[0] == d.action)) return 0;
        if (seg.observations.size() > 1 && seg.observations[1].last_action_error) return 0;
        if (d.action.kind == ActionKind::SendMessage && d.action.text.empty()) return 0;
        return 1;
      }
      default:
        return 0;
    }
  }

 private:
  std::shared_ptr<OracleContext> ctx_;
};

// Maps oracle progress onto the A..E grid with a greedy dither so that the
// mean of several samples tracks the fractional progress value.
class OracleMacroJudge : public MacroJudge {
 public:
  explicit OracleMacroJudge(std::shared_ptr<OracleContext> ctx) : ctx_(std::move(ctx)) {}

  MacroStatus assess(const EvaluationContext& ctx) override {
    if (ctx.segment.terminated == TrajectorySegment::Terminated::AnswerEmitted) {
      if (ctx.env_success) return {MacroCode::A, "task completed with the correct answer"};
      return {MacroCode::E, "terminal answer does not satisfy the goal"};
    }
    double target = progress(ctx);
    std::string key = ctx.post_state_key + "#" + ctx.subplan.text;
    if (key != last_key_) {
      last_key_ = key;
      count_ = 0;
      sum_ = 0.0;
    }
    double want = target * static_cast<double>(count_ + 1) - sum_;
    MacroCode code = closest(want);
    static const double grid[5] = {1.0, 0.75, 0.5, 0.25, 0.0};
    sum_ += grid[static_cast<std::size_t>(code)];
    ++count_;
    std::ostringstream note;
    note << "oracle progress " << target;
    return {code, note.str()};
  }

 private:
  double progress(const EvaluationContext& ctx) const {
    int d0 = ctx_->oracle.initial_length();
    if (d0 <= 0) return 0.0;
    auto remaining = ctx_->oracle.remaining(ctx.post_state_key);
    if (!remaining) return 0.0;
    double p = (static_cast<double>(d0) - static_cast<double>(remaining->size())) /
               static_cast<double>(d0);
    return std::clamp(p, 0.0, 1.0);
  }

  static MacroCode closest(double want) {
    static const double grid[5] = {1.0, 0.75, 0.5, 0.25, 0.0};
    std::size_t best = 4;
    double best_err = 1e9;
    for (std::size_t i = 0; i < 5; ++i) {
      double err = std::abs(grid[i] - want);
      if (err < best_err) {
        best_err = err;
        best = i;
      }
    }
    return static_cast<MacroCode>(best);
  }

  std::shared_ptr<OracleContext> ctx_;
  std::string last_key_;
  int count_ = 0;
  double sum_ = 0.0;
};

class OracleReflector : public Reflector {
 public:
  explicit OracleReflector(std::shared_ptr<OracleContext> ctx) : ctx_(std::move(ctx)) {}

  ReflectorVerdict revise(const Observation& obs, const PlanHistory& /*history*/,
                          const Subplan& subplan, const TrajectorySegment& failure) override {
    ReflectorVerdict v;
    std::string original = strip_retry_prefixes(subplan.text);
    if (obs.popup_open) {
      const Page& page = ctx_->graph->pages.at(obs.page_id);
      std::string dismiss = label_of(obs, *page.popup_dismiss);
      v.reason_type = ReflectorReason::FeasibilityError;
      v.reason = "Type A: a blocking popup prevented the interaction";
      v.revised_plan = "close the popup, then proceed: click '" + dismiss + "' then " + original;
      return v;
    }
    auto d = parse_directive(original);
    bool first_click_ok = !failure.actions.empty() && failure.observations.size() > 1 &&
                          !failure.observations[1].last_action_error;
    if (failure.terminated == TrajectorySegment::Terminated::StepCapReached &&
        d.kind == SubplanDirective::Kind::ClickSequence && d.labels.size() >= 2 &&
        first_click_ok) {
      v.reason_type = ReflectorReason::ComplexityError;
      v.reason = "Type B: the plan is too coarse; keep only the first segment";
      v.revised_plan = "click '" + d.labels[0] + "'";
      return v;
    }
    v.reason_type = ReflectorReason::FeasibilityError;
    v.reason = failure.actions.empty()
                   ? "Type A: the operator produced no actions for this plan"
                   : "Type A: execution went off course";
    v.revised_plan = "carefully " + original;
    return v;
  }

 private:
  std::shared_ptr<OracleContext> ctx_;
};

// ------------------------------------------------------------- table layer

class TablePlanner : public Planner {
 public:
  TablePlanner(PolicyTable table, std::shared_ptr<Planner> fallback)
      : table_(std::move(table)), fallback_(std::move(fallback)) {}

  std::vector<Subplan> propose(const Observation& obs, const PlanHistory& history,
                               int k) override {
    bool after_failure = !history.empty() && history.back().status != SubplanStatus::Completed &&
                         history.back().status != SubplanStatus::Unattempted;
    const PolicyTable::PlannerRule* match = nullptr;
    for (const auto& rule : table_.planner) {
      if (rule.page != obs.page_id) continue;
      if (rule.only_after_failure && !after_failure) continue;
      if (!match || (rule.only_after_failure && !match->only_after_failure)) match = &rule;
    }
    if (!match) return fallback_->propose(obs, history, k);
    std::vector<Subplan> out;
    for (const auto& text : match->subplans) {
      if (static_cast<int>(out.size()) >= k) break;
      out.emplace_back(text, SubplanOrigin::Planner, "table rule for " + obs.page_id);
    }
    return out;
  }

 private:
  PolicyTable table_;
  std::shared_ptr<Planner> fallback_;
};

class TableReflector : public Reflector {
 public:
  TableReflector(PolicyTable table, std::shared_ptr<Reflector> fallback)
      : table_(std::move(table)), fallback_(std::move(fallback)) {}

  ReflectorVerdict revise(const Observation& obs, const PlanHistory& history,
                          const Subplan& subplan, const TrajectorySegment& failure) override {
    for (const auto& rule : table_.reflector) {
      if (subplan.text.find(rule.subplan_contains) == std::string::npos) continue;
      return {rule.reason_type, rule.reason, rule.revised_plan};
    }
    return fallback_->revise(obs, history, subplan, failure);
  }

 private:
  PolicyTable table_;
  std::shared_ptr<Reflector> fallback_;
};

}  // namespace

PolicyTable policy_table_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad policy table JSON: ") + e.what());
  }
  if (j.value("format", "") != "planmcts-policies-v1") {
    throw SchemaError("unsupported policy table format");
  }
  PolicyTable t;
  for (const auto& rj : j.value("planner", json::array())) {
    PolicyTable::PlannerRule r;
    r.page = rj.at("page").get<std::string>();
    r.only_after_failure = rj.value("only_after_failure", false);
    for (const auto& s : rj.at("subplans")) r.subplans.push_back(s.get<std::string>());
    t.planner.push_back(std::move(r));
  }
  for (const auto& rj : j.value("reflector", json::array())) {
    PolicyTable::ReflectorRule r;
    r.subplan_contains = rj.at("subplan_contains").get<std::string>();
    std::string kind = rj.value("reason_type", "feasibility");
    r.reason_type = kind == "complexity" ? ReflectorReason::ComplexityError
                                         : ReflectorReason::FeasibilityError;
    r.reason = rj.value("reason", "");
    r.revised_plan = rj.at("revised_plan").get<std::string>();
    t.reflector.push_back(std::move(r));
  }
  return t;
}

PolicyTable load_policy_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open policy table: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return policy_table_from_json(buf.str());
}

PolicyBundle make_scripted_bundle(std::shared_ptr<const PageGraph> graph,
                                  const std::string& task_id, const Environment* env,
                                  const ScriptedOptions& options) {
  auto ctx = std::make_shared<OracleContext>(std::move(graph), task_id, env, options);
  PolicyBundle b;
  b.planner = std::make_shared<OraclePlanner>(ctx);
  b.op = std::make_shared<OracleOperator>(ctx);
  b.micro_judge = std::make_shared<OracleMicroJudge>(ctx);
  b.macro_judge = std::make_shared<OracleMacroJudge>(ctx);
  b.reflector = std::make_shared<OracleReflector>(ctx);
  return b;
}

PolicyBundle make_table_bundle(std::shared_ptr<const PageGraph> graph, const std::string& task_id,
                               const Environment* env, const PolicyTable& table,
                               const ScriptedOptions& options) {
  PolicyBundle b = make_scripted_bundle(std::move(graph), task_id, env, options);
  b.planner = std::make_shared<TablePlanner>(table, b.planner);
  b.reflector = std::make_shared<TableReflector>(table, b.reflector);
  return b;
}

}  // namespace planmcts
