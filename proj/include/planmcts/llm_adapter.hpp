#pragma once

// LLM-backed policy adapters: chat-completion HTTP client with retry, the
// prompt templates for the five roles, placeholder rendering, and the
// structured-output parsers.

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "planmcts/policies.hpp"
#include "planmcts/trace.hpp"

namespace planmcts {

enum class RoleKind { Planner, Operator, MicroJudge, MacroJudge, Reflector };

struct PromptTemplate {
  RoleKind role_kind = RoleKind::Planner;
  std::string system_text;
  std::string user_text;
};

// Built-in template for a role. Texts carry the published wording; dynamic
// slots are single-brace placeholders like {User Goal Description}.
const PromptTemplate& prompt_template(RoleKind role);

struct RenderedPrompt {
  std::string system_message;
  std::string user_message;
};

using Bindings = std::map<std::string, std::string>;

// Substitutes every placeholder; a placeholder with no binding throws
// UnboundPlaceholder. Deterministic: identical bindings give identical bytes.
RenderedPrompt render(const PromptTemplate& tpl, const Bindings& bindings);
std::string substitute_placeholders(const std::string& text, const Bindings& bindings);

// ---- structured-output parsers (total: value or typed failure, no crash) ----

// Tolerates surrounding prose and code fences; takes the first balanced JSON
// object with a "subplans" array, truncates to k.
std::vector<Subplan> parse_planner(const std::string& raw, int k);
// Extracts the single action line from the "### Action ###" section.
OperatorDecision parse_operator(const std::string& raw);
// "Completed: yes"/"no"; anything ambiguous scores 0.
int parse_micro(const std::string& raw);
// "STATUS CODE: A".."E", case-insensitive; unknown letters throw
// StatusParseFailure (the dual gate redraws the sample).
MacroStatus parse_macro(const std::string& raw);
// JSON object with "reason" and "revised_plan".
ReflectorVerdict parse_reflector(const std::string& raw);

// ------------------------------------------------------------- HTTP client

struct AdapterConfig {
  std::string endpoint = "http://127.0.0.1:8080/v1/chat/completions";
  std::string model = "default";
  double planner_temperature = 0.7;   // planner + reflector (diversity)
  double judge_temperature = 0.0;     // operator + judges (determinism)
  int max_retries = 2;
  int timeout_ms = 30000;
  std::string api_key_env = "PLANMCTS_API_KEY";
  int max_in_flight = 4;

  void validate() const;  // throws InfeasibleParams
};

struct TokenUsage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

// Aggregated per-role token totals plus optional verbose request/response
// records, shared across the bundle's adapters. Thread-safe.
struct UsageLog {
  std::mutex mu;
  std::map<std::string, TokenUsage> per_role;
  bool keep_payloads = false;
  std::vector<nlohmann::json> payloads;

  void record(const std::string& role, const RenderedPrompt& prompt,
              const std::string& response, const TokenUsage& usage);
  long total_tokens();
  nlohmann::json to_json();
};

// POSTs a chat request; retries transport errors and HTTP 5xx/429 with
// exponential backoff (base_backoff_ms * 2^attempt). Throws
// EndpointUnavailable once max_retries extra attempts are spent.
std::string call_with_retry(const AdapterConfig& cfg, const RenderedPrompt& prompt,
                            double temperature, TokenUsage* usage,
                            int base_backoff_ms = 200);

// All five roles backed by the endpoint. `goal` is the task instruction
// rendered into every prompt.
PolicyBundle make_llm_bundle(const AdapterConfig& cfg, const std::string& goal,
                             std::shared_ptr<UsageLog> log);

}  // namespace planmcts
