#pragma once

// Deterministic scripted adapters for all five policy roles. They are backed
// by the simulator's ground truth (the brute-force oracle) so that search
// dynamics can be studied without any model in the loop.
//
// Subplan directive grammar understood by the scripted operator and judges:
//   click 'Label A' then click 'Label B'   -- click elements by label, in order
//   report the answer 'text'               -- terminal send_message
//   execute action: click(3)              -- action-space variant edge
//   follow the most promising route and finish the task   -- greedy rollout

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "planmcts/policies.hpp"
#include "planmcts/webworld.hpp"

namespace planmcts {

// Seeded pseudo-random corruption schedule: next() is true on "designated"
// calls at the configured rate, deterministically per seed.
class NoiseSchedule {
 public:
  NoiseSchedule(double rate, std::uint64_t seed) : rate_(rate), seed_(seed) {}
  bool next();

 private:
  double rate_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

struct ScriptedOptions {
  double epsilon = 0.0;       // operator click-corruption rate
  std::uint64_t seed = 0;
  int segment_len = 3;        // clicks per planner-proposed subplan
};

struct SubplanDirective {
  enum class Kind { ClickSequence, Answer, ExecuteAction, Rollout, Unknown };
  Kind kind = Kind::Unknown;
  std::vector<std::string> labels;  // ClickSequence
  std::string message;              // Answer
  AtomicAction action;              // ExecuteAction
};

SubplanDirective parse_directive(const std::string& subplan_text);

inline constexpr const char* kRolloutDirective =
    "follow the most promising route and finish the task";

// JSON-table-driven rules ("planmcts-policies-v1"), keyed by (page id,
// subplan pattern).
struct PolicyTable {
  struct PlannerRule {
    std::string page;
    bool only_after_failure = false;  // applies only when last history entry failed
    std::vector<std::string> subplans;
  };
  struct ReflectorRule {
    std::string subplan_contains;
    ReflectorReason reason_type = ReflectorReason::FeasibilityError;
    std::string reason;
    std::string revised_plan;
  };
  std::vector<PlannerRule> planner;
  std::vector<ReflectorRule> reflector;
};

PolicyTable load_policy_table(const std::string& path);
PolicyTable policy_table_from_json(const std::string& json_text);

// Ground-truth bundle for (graph, task). `env` is the live episode
// environment; the adapters read its current state to consult the oracle.
PolicyBundle make_scripted_bundle(std::shared_ptr<const PageGraph> graph,
                                  const std::string& task_id, const Environment* env,
                                  const ScriptedOptions& options = {});

// Same, but planner/reflector answers come from the table first, with the
// oracle adapters as fallback.
PolicyBundle make_table_bundle(std::shared_ptr<const PageGraph> graph,
                               const std::string& task_id, const Environment* env,
                               const PolicyTable& table, const ScriptedOptions& options = {});

}  // namespace planmcts
