#include "planmcts/llm_adapter.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "planmcts/search.hpp"
#include "planmcts/webworld.hpp"

namespace planmcts {

using nlohmann::json;

// --------------------------------------------------------------- templates

namespace {

const PromptTemplate kPlannerTemplate{
    RoleKind::Planner,
    R"(You are an expert Planner for an autonomous web agent. Your goal is to propose {branching_factor} candidate subplans for the IMMEDIATE NEXT STEP.

# CRITICAL: CONTINUITY & CONTEXT AWARENESS
You must analyze the `Subplan History` and the `Current State` to determine the next logical move.

1. IF the last subplan was SUCCESSFUL:
   - Move forward to the next logical stage.
2. IF the last subplan FAILED:
   - DO NOT simply repeat the failed plan.
   - You MUST propose a fix, a retry with a different method, or a workaround.

# Generating Candidates
All candidates must focus on the SAME immediate objective but vary in HOW to achieve it:
- Variation 1 (Standard): The most direct, common way.
- Variation 2 (Granular): Breaking the step down into smaller checks.
- Variation 3 (Alternative): Using a different UI element or path.

# Output Format (JSON)
{
  "subplans": [
    {
      "thought": "Reasoning based on history...",
      "subplan": "Complete natural language plan."
    },
    ...
  ]
}
)",
    R"(### User Instruction ###
{User Goal Description}

### Subplan History ###
Previously executed subplans:
{List of executed subplans with status: Completed / Not Completed}

### Current Screenshot ###
{Input Image: Current Page Screenshot with SoM Overlays}

### Current Page Accessibility Tree ###
{Text: Pruned Accessibility Tree Structure}

IMPORTANT: Please provide {branching_factor} DIVERSE subplan candidates in JSON format.
)"};

const PromptTemplate kOperatorTemplate{
    RoleKind::Operator,
    R"(You are a UI Assistant, your goal is to help the user perform tasks using a web browser.
You will be provided with task objective, current step, web page observations, previous plans, and interaction history. You need to issue an action for this step.

# Output Format
### Interaction History Summary ###
Emphasize all important details in the INTERACTION HISTORY section.

### Observation Highlights ###
List the numerical ids of elements... (e.g., `1321, 52, 756`).

### Observation Description ###
Describe information in the current axtree and screenshot...

### Reason ###
Provide your rationale for proposing the subsequent action commands here.

### Action ###
Only a SINGLE action is allowed in this tag... formatted as

# General Tips
- You may receive historical thoughts and executed actions as context.
- Always take into account the current task, the latest page screenshot, and the history.
- If you haven't gotten the final exact answer yet, please do not send message to user.

# Action Space
{Detailed Description of Action Space: click(), type(), etc.}
)",
    R"(### User Instruction ###
{User Goal Description}

### Current Subplan to Execute ###
{Natural Language Subplan generated by Planner}

### Interaction History (Current Subplan) ###
{List of previously executed atomic actions within this subplan}

### Current Screenshot ###
{Input Image: Current Page Screenshot with SoM Overlays}

# Current page Accessibility Tree
{Text: Pruned Accessibility Tree Structure}
)"};

const PromptTemplate kMicroTemplate{
    RoleKind::MicroJudge,
    R"(You are a precise evaluator for a web navigation agent.
Your ONLY job is to determine if the specific subplan below was successfully executed based on the evidence provided.

**Subplan to Evaluate:** "{Target Subplan Text}"

**Evaluation Checklist (Mental Step-by-Step):**
1. **Check Errors**: Did the Interaction History show any system errors? If yes -> NO.
2. **[CRITICAL] Check Terminal Actions**:
- Did the agent execute a completion action like send message to user?
  - Is the answer VALID? (non-empty, contains info, not a refusal).
3. **Check Action Fidelity**: Did the agent actually perform the actions described in the subplan?
4. **Check State Change**: Compare the "Pre" and "Post" screenshots.
  - Is there VISIBLE evidence that the action took effect?

**Format:**
Thoughts: <Analyze the delta between Pre and Post states. Point out specific visual changes or errors.>
Completed: "yes" or "no"
)",
    R"(### Current Subplan ###
{Target Subplan Text}

### Interaction History (Actions for This Subplan) ###
{List of atomic actions executed specifically for this subplan}

### Initial State (Before Subplan Execution) ###
{Image: Screenshot before execution}
{Text: AxTree snippet before execution}

### Current State (After Subplan Execution) ###
{Image: Screenshot after execution}
{Text: AxTree snippet after execution}
)"};

const PromptTemplate kMacroTemplate{
    RoleKind::MacroJudge,
    R"(You are an expert in evaluating the utility of subplans for completing web navigation tasks.
Your goal is to estimate the State Value (V(s)) of the current webpage. Ask yourself: "How close are we to the final goal right now?"

# CRITICAL PRIORITY: HANDLING TERMINAL SUBPLANS
If the subplan involves finishing the task:
- Completion Signal: Treat the task as functionally completed.
- Leniency: If the message is RELEVANT, lean heavily towards Status A.
- Minimum Score: Unless completely hallucinated, do NOT rate as C/D/E.

# Evaluation Criteria
- Previous Progress: Review subplan history.
- Contribution: Assess how much this subplan moved us toward the goal.
- Penalties: Error pages (404), backward movement, or repeating actions must be penalized.

# STATUS CODES (Score Space)
A. SUCCESS: Task completed or fully fulfilled requirements.
B. ALMOST FINISHED: Extremely close (e.g., 1-2 steps left).
C. ON TRACK: Significant progress made, working correctly.
D. UNCLEAR: Unsure if positive contribution.
E. FAILURE: Stuck, error, or moved backwards.

# Output Format
Thoughts: <Detailed analysis of contribution to global goal>
STATUS CODE: A, B, C, D, or E
Notes: <Key observations for future steps>
)",
    R"(### Overall Task Objective ###
{User Goal Description}

### Previously Executed Subplans ###
{History list with previous status codes and scores}

### Initial State (Before Current Subplan) ###
{Image & Text: State before execution}

### Current Subplan Action History ###
{List of atomic actions executed in this step}

### Current Subplan Being Evaluated ###
{Target Subplan Text}

### Current State (After Subplan Execution) ###
{Image & Text: State after execution}
)"};

const PromptTemplate kReflectorTemplate{
    RoleKind::Reflector,
    R"(You are the "Reflector" module of an autonomous web navigation agent.
Your job is to analyze a FAILED execution of a subplan and generate a FIXED subplan.

# Diagnosis Strategy
1. TYPE A: Feasibility Error (Wrong Direction)
- Symptoms: Hallucination, logically blocked path, or impossible goal.
- Fix Strategy (Pivot): Propose an ALTERNATIVE approach. Abandon current method.
2. TYPE B: Complexity Error (Granularity Issue)
- Symptoms: Plan is valid but timed out, got stuck, or too many steps.
- Fix Strategy (Decompose): Reduce GRANULARITY. Extract ONLY the first, immediate logical segment.

# Goal
Generate a REVISED subplan that achieves the SAME goal as the original plan but avoids the previous error.

# Requirements
- The revised plan must be executable in 2-5 concrete actions.
- Be specific about element identifiers.
- Include necessary preconditions (close popups, wait for load).

# Output Format (JSON ONLY)
{
  "reason": "Brief explanation of failure (Type A or B)...",
  "revised_plan": "The new, corrected step-by-step natural language instruction"
}
)",
    R"(## Context ##
**Original Subplan**: "{Failed Subplan Text}"

## Execution Trace ##
{List of attempted actions, observations, and specific error messages}

## Last Screenshot ##
{Image: Final state showing where it got stuck}

## Last Page State (Accessibility Tree) ##
{Text: Final AxTree snippet}

## Task ##
Analyze the failure reason based on the Trace and Last Observation.
Provide a JSON response with the 'reason' and the 'revised plan'.
)"};

bool placeholder_char(char c) {
  if (std::isalnum(static_cast<unsigned char>(c))) return true;
  return std::string("_ :/().,&'-").find(c) != std::string::npos;
}

}  // namespace

const PromptTemplate& prompt_template(RoleKind role) {
  switch (role) {
    case RoleKind::Planner: return kPlannerTemplate;
    case RoleKind::Operator: return kOperatorTemplate;
    case RoleKind::MicroJudge: return kMicroTemplate;
    case RoleKind::MacroJudge: return kMacroTemplate;
    case RoleKind::Reflector: return kReflectorTemplate;
  }
  throw Error("unknown role");
}

std::string substitute_placeholders(const std::string& text, const Bindings& bindings) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '{') {
      out += text[i++];
      continue;
    }
    std::size_t close = text.find('}', i + 1);
    bool is_placeholder = close != std::string::npos && close > i + 1 && close - i - 1 <= 80;
    std::string name;
    if (is_placeholder) {
      name = text.substr(i + 1, close - i - 1);
      is_placeholder = std::all_of(name.begin(), name.end(), placeholder_char);
    }
    if (!is_placeholder) {
      // literal brace (e.g. inline JSON examples); keep scanning inside
      out += text[i++];
      continue;
    }
    auto it = bindings.find(name);
    if (it == bindings.end()) {
      throw UnboundPlaceholder("no binding for placeholder {" + name + "}");
    }
    out += it->second;
    i = close + 1;
  }
  return out;
}

RenderedPrompt render(const PromptTemplate& tpl, const Bindings& bindings) {
  return {substitute_placeholders(tpl.system_text, bindings),
          substitute_placeholders(tpl.user_text, bindings)};
}

// ----------------------------------------------------------------- parsers

namespace {

// First balanced, string-aware JSON object found in the text (code fences
// and surrounding prose tolerated); nullopt when none parses.
std::optional<json> extract_json_object(const std::string& raw) {
  for (std::size_t start = raw.find('{'); start != std::string::npos;
       start = raw.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < raw.size(); ++i) {
      char c = raw[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}') {
        if (--depth == 0) {
          json j = json::parse(raw.substr(start, i - start + 1), nullptr, false);
          if (!j.is_discarded() && j.is_object()) return j;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Body of a "### Name ###"-delimited section, up to the next heading.
std::optional<std::string> section_body(const std::string& raw, const std::string& heading) {
  std::size_t pos = raw.find(heading);
  if (pos == std::string::npos) return std::nullopt;
  std::size_t begin = pos + heading.size();
  std::size_t end = raw.find("###", begin);
  if (end == std::string::npos) end = raw.size();
  return raw.substr(begin, end - begin);
}

std::vector<std::string> content_lines(const std::string& body) {
  std::vector<std::string> lines;
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line.rfind("```", 0) == 0) continue;
    if (line.size() >= 2 && line.front() == '`' && line.back() == '`') {
      line = trim(line.substr(1, line.size() - 2));
      if (line.empty()) continue;
    }
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

std::vector<Subplan> parse_planner(const std::string& raw, int k) {
  auto j = extract_json_object(raw);
  if (!j || !j->contains("subplans") || !(*j)["subplans"].is_array()) {
    throw ProposalParseFailure("no JSON object with a subplans array");
  }
  std::vector<Subplan> out;
  for (const auto& entry : (*j)["subplans"]) {
    if (static_cast<int>(out.size()) >= k) break;
    if (!entry.is_object() || !entry.contains("subplan") || !entry["subplan"].is_string()) {
      throw ProposalParseFailure("malformed subplan entry");
    }
    std::string text = trim(entry["subplan"].get<std::string>());
    if (text.empty()) throw ProposalParseFailure("empty subplan text");
    std::string thought;
    if (entry.contains("thought") && entry["thought"].is_string()) {
      thought = entry["thought"].get<std::string>();
    }
    out.emplace_back(text, SubplanOrigin::Planner, thought);
  }
  if (out.empty()) throw ProposalParseFailure("subplans array is empty");
  return out;
}

OperatorDecision parse_operator(const std::string& raw) {
  auto body = section_body(raw, "### Action ###");
  if (!body) throw DecisionParseFailure("missing Action section");
  auto lines = content_lines(*body);
  if (lines.size() != 1) {
    throw DecisionParseFailure("expected exactly one action, got " +
                               std::to_string(lines.size()));
  }
  OperatorDecision dec;
  dec.action = parse_action(lines[0]);
  dec.subplan_done = dec.action.kind == ActionKind::Noop;
  if (auto reason = section_body(raw, "### Reason ###")) dec.reason = trim(*reason);
  return dec;
}

int parse_micro(const std::string& raw) {
  std::string low = lower(raw);
  std::size_t pos = low.rfind("completed:");
  if (pos == std::string::npos) return 0;
  std::size_t end = low.find('\n', pos);
  std::string rest = low.substr(pos + 10, end == std::string::npos ? std::string::npos
                                                                   : end - pos - 10);
  rest.erase(std::remove_if(rest.begin(), rest.end(),
                            [](unsigned char c) { return !std::isalpha(c); }),
             rest.end());
  return rest.rfind("yes", 0) == 0 ? 1 : 0;
}

MacroStatus parse_macro(const std::string& raw) {
  std::string low = lower(raw);
  std::size_t pos = low.find("status code");
  if (pos == std::string::npos) throw StatusParseFailure("missing STATUS CODE line");
  std::size_t i = pos + 11;
  while (i < raw.size() && !std::isalpha(static_cast<unsigned char>(raw[i]))) {
    if (raw[i] == '\n') throw StatusParseFailure("STATUS CODE line has no letter");
    ++i;
  }
  if (i >= raw.size()) throw StatusParseFailure("STATUS CODE line has no letter");
  char c = static_cast<char>(std::toupper(static_cast<unsigned char>(raw[i])));
  if (i + 1 < raw.size() && std::isalnum(static_cast<unsigned char>(raw[i + 1]))) {
    throw StatusParseFailure("STATUS CODE is not a single letter");
  }
  if (c < 'A' || c > 'E') throw StatusParseFailure(std::string("unknown status code: ") + c);
  MacroStatus status;
  status.code = static_cast<MacroCode>(c - 'A');
  std::size_t notes = low.find("notes:", i);
  if (notes != std::string::npos) {
    std::size_t end = raw.find('\n', notes);
    status.notes = trim(raw.substr(notes + 6, end == std::string::npos ? std::string::npos
                                                                       : end - notes - 6));
  }
  return status;
}

ReflectorVerdict parse_reflector(const std::string& raw) {
  auto j = extract_json_object(raw);
  if (!j || !j->contains("reason") || !j->contains("revised_plan") ||
      !(*j)["reason"].is_string() || !(*j)["revised_plan"].is_string()) {
    throw ReflectorParseFailure("expected JSON with reason and revised_plan");
  }
  ReflectorVerdict v;
  v.reason = (*j)["reason"].get<std::string>();
  v.revised_plan = trim((*j)["revised_plan"].get<std::string>());
  if (v.revised_plan.empty()) throw ReflectorParseFailure("empty revised_plan");
  std::string low = lower(v.reason);
  v.reason_type = (low.find("type b") != std::string::npos ||
                   low.find("complexity") != std::string::npos)
                      ? ReflectorReason::ComplexityError
                      : ReflectorReason::FeasibilityError;
  return v;
}

// -------------------------------------------------------------- HTTP layer

void AdapterConfig::validate() const {
  if (max_retries < 0) throw InfeasibleParams("max_retries must be >= 0");
  if (timeout_ms <= 0) throw InfeasibleParams("timeout must be > 0");
  if (max_in_flight < 1) throw InfeasibleParams("max_in_flight must be >= 1");
  if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0) {
    throw InfeasibleParams("endpoint must be an http(s) URL");
  }
}

namespace {

struct SplitUrl {
  std::string base;  // scheme://host:port
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  std::size_t scheme = url.find("://");
  std::size_t slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

std::string call_with_retry(const AdapterConfig& cfg, const RenderedPrompt& prompt,
                            double temperature, TokenUsage* usage, int base_backoff_ms) {
  cfg.validate();
  SplitUrl url = split_url(cfg.endpoint);
  httplib::Client client(url.base);
  client.set_connection_timeout(0, cfg.timeout_ms * 1000LL);
  client.set_read_timeout(cfg.timeout_ms / 1000, (cfg.timeout_ms % 1000) * 1000);
  httplib::Headers headers;
  if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  json request{{"model", cfg.model},
               {"messages",
                json::array({{{"role", "system"}, {"content", prompt.system_message}},
                             {{"role", "user"}, {"content", prompt.user_message}}})},
               {"temperature", temperature}};
  std::string body = request.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(base_backoff_ms * (1LL << (attempt - 1))));
    }
    auto res = client.Post(url.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw EndpointUnavailable("HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty()) {
      throw PolicyFailure("malformed completion response");
    }
    if (usage) {
      *usage = {};
      if (reply.contains("usage")) {
        usage->prompt_tokens = reply["usage"].value("prompt_tokens", 0L);
        usage->completion_tokens = reply["usage"].value("completion_tokens", 0L);
      }
    }
    const json& msg = reply["choices"][0];
    if (msg.contains("message") && msg["message"].contains("content")) {
      return msg["message"]["content"].get<std::string>();
    }
    throw PolicyFailure("completion response has no message content");
  }
  throw EndpointUnavailable("endpoint failed after " + std::to_string(cfg.max_retries + 1) +
                            " attempts (" + last_error + ")");
}

// ---------------------------------------------------------------- adapters

void UsageLog::record(const std::string& role, const RenderedPrompt& prompt,
                      const std::string& response, const TokenUsage& usage) {
  std::lock_guard<std::mutex> lock(mu);
  per_role[role].prompt_tokens += usage.prompt_tokens;
  per_role[role].completion_tokens += usage.completion_tokens;
  if (keep_payloads) {
    payloads.push_back({{"role", role},
                        {"prompt_text", prompt.system_message + "\n\n" + prompt.user_message},
                        {"response_text", response},
                        {"prompt_tokens", usage.prompt_tokens},
                        {"completion_tokens", usage.completion_tokens}});
  }
}

long UsageLog::total_tokens() {
  std::lock_guard<std::mutex> lock(mu);
  long total = 0;
  for (const auto& [role, u] : per_role) total += u.prompt_tokens + u.completion_tokens;
  return total;
}

json UsageLog::to_json() {
  std::lock_guard<std::mutex> lock(mu);
  json per = json::object();
  for (const auto& [role, u] : per_role) {
    per[role] = {{"prompt_tokens", u.prompt_tokens},
                 {"completion_tokens", u.completion_tokens}};
  }
  return {{"per_role", per}};
}

namespace {

// Counting semaphore bounding concurrent requests per bundle.
class InFlightLimit {
 public:
  explicit InFlightLimit(int max) : available_(max) {}
  void acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return available_ > 0; });
    --available_;
  }
  void release() {
    std::lock_guard<std::mutex> lock(mu_);
    ++available_;
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int available_;
};

struct LlmShared {
  AdapterConfig cfg;
  std::string goal;
  std::shared_ptr<UsageLog> log;
  InFlightLimit limit;

  LlmShared(AdapterConfig c, std::string g, std::shared_ptr<UsageLog> l)
      : cfg(std::move(c)), goal(std::move(g)), log(std::move(l)), limit(cfg.max_in_flight) {}

  std::string call(const std::string& role, const RenderedPrompt& prompt, double temperature) {
    limit.acquire();
    TokenUsage usage;
    std::string response;
    try {
      response = call_with_retry(cfg, prompt, temperature, &usage);
    } catch (...) {
      limit.release();
      throw;
    }
    limit.release();
    if (log) log->record(role, prompt, response, usage);
    return response;
  }
};

const char* kNoScreenshot = "(screenshot not available)";

std::string history_lines(const PlanHistory& history) {
  if (history.empty()) return "(none)";
  std::ostringstream out;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (i) out << "\n";
    out << "- " << history[i].text << " ["
        << (history[i].status == SubplanStatus::Completed ? "Completed" : "Not Completed")
        << "]";
  }
  return out.str();
}

std::string action_lines(const TrajectorySegment& seg, bool with_observations = false) {
  if (seg.actions.empty()) return "(none)";
  std::ostringstream out;
  for (std::size_t i = 0; i < seg.actions.size(); ++i) {
    if (i) out << "\n";
    out << (i + 1) << ". " << to_string(seg.actions[i]);
    if (i + 1 < seg.observations.size()) {
      const Observation& post = seg.observations[i + 1];
      if (post.last_action_error) out << "  -> ERROR: " << post.error_note;
      else if (with_observations) out << "  -> page: " << post.page_id;
    }
  }
  return out.str();
}

std::string state_block(const Observation& obs) {
  return std::string(kNoScreenshot) + "\n" + render_observation(obs);
}

const char* kActionSpace =
    "click(<element id>) - click the element with this numeric id\n"
    "type(<element id>, \"<text>\") - type text into a textbox\n"
    "scroll(\"up\"|\"down\") - scroll the page\n"
    "goto(\"<page id>\") - navigate directly to a known page\n"
    "send_msg_to_user(\"<answer>\") - report the final answer and stop\n"
    "noop() - declare the current subplan complete without acting";

struct LlmPlanner : Planner {
  std::shared_ptr<LlmShared> s;
  explicit LlmPlanner(std::shared_ptr<LlmShared> shared) : s(std::move(shared)) {}

  std::vector<Subplan> propose(const Observation& obs, const PlanHistory& history,
                               int k) override {
    Bindings b{{"branching_factor", std::to_string(k)},
               {"User Goal Description", s->goal},
               {"List of executed subplans with status: Completed / Not Completed",
                history_lines(history)},
               {"Input Image: Current Page Screenshot with SoM Overlays", kNoScreenshot},
               {"Text: Pruned Accessibility Tree Structure", render_observation(obs)}};
    RenderedPrompt prompt = render(prompt_template(RoleKind::Planner), b);
    return parse_planner(s->call("planner", prompt, s->cfg.planner_temperature), k);
  }
};

struct LlmOperator : Operator {
  std::shared_ptr<LlmShared> s;
  explicit LlmOperator(std::shared_ptr<LlmShared> shared) : s(std::move(shared)) {}

  OperatorDecision decide(const Observation& obs, const PlanHistory& history,
                          const TrajectorySegment& local, const Subplan& subplan) override {
    (void)history;
    Bindings b{{"Detailed Description of Action Space: click(), type(), etc.", kActionSpace},
               {"User Goal Description", s->goal},
               {"Natural Language Subplan generated by Planner", subplan.text},
               {"List of previously executed atomic actions within this subplan",
                action_lines(local)},
               {"Input Image: Current Page Screenshot with SoM Overlays", kNoScreenshot},
               {"Text: Pruned Accessibility Tree Structure", render_observation(obs)}};
    RenderedPrompt prompt = render(prompt_template(RoleKind::Operator), b);
    return parse_operator(s->call("operator", prompt, s->cfg.judge_temperature));
  }
};

struct LlmMicroJudge : MicroJudge {
  std::shared_ptr<LlmShared> s;
  explicit LlmMicroJudge(std::shared_ptr<LlmShared> shared) : s(std::move(shared)) {}

  int verify(const EvaluationContext& ctx) override {
    Bindings b{{"Target Subplan Text", ctx.subplan.text},
               {"List of atomic actions executed specifically for this subplan",
                action_lines(ctx.segment)},
               {"Image: Screenshot before execution", kNoScreenshot},
               {"Text: AxTree snippet before execution", render_observation(ctx.pre_obs)},
               {"Image: Screenshot after execution", kNoScreenshot},
               {"Text: AxTree snippet after execution", render_observation(ctx.post_obs)}};
    RenderedPrompt prompt = render(prompt_template(RoleKind::MicroJudge), b);
    return parse_micro(s->call("micro_judge", prompt, s->cfg.judge_temperature));
  }
};

struct LlmMacroJudge : MacroJudge {
  std::shared_ptr<LlmShared> s;
  explicit LlmMacroJudge(std::shared_ptr<LlmShared> shared) : s(std::move(shared)) {}

  MacroStatus assess(const EvaluationContext& ctx) override {
    Bindings b{{"User Goal Description", s->goal},
               {"History list with previous status codes and scores",
                history_lines(ctx.plan_history)},
               {"Image & Text: State before execution", state_block(ctx.pre_obs)},
               {"List of atomic actions executed in this step", action_lines(ctx.segment)},
               {"Target Subplan Text", ctx.subplan.text},
               {"Image & Text: State after execution", state_block(ctx.post_obs)}};
    RenderedPrompt prompt = render(prompt_template(RoleKind::MacroJudge), b);
    return parse_macro(s->call("macro_judge", prompt, s->cfg.judge_temperature));
  }
};

struct LlmReflector : Reflector {
  std::shared_ptr<LlmShared> s;
  explicit LlmReflector(std::shared_ptr<LlmShared> shared) : s(std::move(shared)) {}

  ReflectorVerdict revise(const Observation& obs, const PlanHistory& history,
                          const Subplan& subplan, const TrajectorySegment& failure) override {
    (void)history;
    Bindings b{{"Failed Subplan Text", subplan.text},
               {"List of attempted actions, observations, and specific error messages",
                action_lines(failure, true)},
               {"Image: Final state showing where it got stuck", kNoScreenshot},
               {"Text: Final AxTree snippet", render_observation(obs)}};
    RenderedPrompt prompt = render(prompt_template(RoleKind::Reflector), b);
    return parse_reflector(s->call("reflector", prompt, s->cfg.planner_temperature));
  }
};

}  // namespace

PolicyBundle make_llm_bundle(const AdapterConfig& cfg, const std::string& goal,
                             std::shared_ptr<UsageLog> log) {
  cfg.validate();
  auto shared = std::make_shared<LlmShared>(cfg, goal, std::move(log));
  PolicyBundle bundle;
  bundle.planner = std::make_shared<LlmPlanner>(shared);
  bundle.op = std::make_shared<LlmOperator>(shared);
  bundle.micro_judge = std::make_shared<LlmMicroJudge>(shared);
  bundle.macro_judge = std::make_shared<LlmMacroJudge>(shared);
  bundle.reflector = std::make_shared<LlmReflector>(shared);
  return bundle;
}

}  // namespace planmcts
