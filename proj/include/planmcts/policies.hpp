#pragma once

// Policy role interfaces: Planner, Operator, Micro/Macro judges, Reflector.
// Scripted adapters live in scripted_policies.hpp, the LLM-backed ones in
// llm_adapter.hpp.

#include <memory>
#include <string>
#include <vector>

#include "planmcts/plan_tree.hpp"
#include "planmcts/webworld.hpp"

namespace planmcts {

struct OperatorDecision {
  AtomicAction action;
  std::string reason;
  bool subplan_done = false;  // done implies a no-op marker or terminal send_message
};

enum class ReflectorReason { FeasibilityError, ComplexityError };

struct ReflectorVerdict {
  ReflectorReason reason_type = ReflectorReason::FeasibilityError;
  std::string reason;
  std::string revised_plan;
};

enum class MacroCode { A, B, C, D, E };

struct MacroStatus {
  MacroCode code = MacroCode::E;
  std::string notes;
};

char to_char(MacroCode c);

// Inputs shared by both judges (Fig-style "before/after" evidence bundle).
struct EvaluationContext {
  std::string goal;
  PlanHistory plan_history;
  Subplan subplan;
  Observation pre_obs;
  Observation post_obs;
  TrajectorySegment segment;
  // Simulator-side extras used by the scripted ground-truth judges; LLM
  // judges ignore them.
  std::string post_state_key;
  bool env_success = false;
};

class Planner {
 public:
  virtual ~Planner() = default;
  virtual std::vector<Subplan> propose(const Observation& obs, const PlanHistory& history,
                                       int k) = 0;
};

class Operator {
 public:
  virtual ~Operator() = default;
  virtual OperatorDecision decide(const Observation& obs, const PlanHistory& history,
                                  const TrajectorySegment& local, const Subplan& subplan) = 0;
  // Candidate single actions for action-space search variants. The default
  // wraps decide() into a one-element list.
  virtual std::vector<AtomicAction> propose_actions(const Observation& obs,
                                                    const PlanHistory& history, int k);
};

class MicroJudge {
 public:
  virtual ~MicroJudge() = default;
  virtual int verify(const EvaluationContext& ctx) = 0;  // {0,1}
};

class MacroJudge {
 public:
  virtual ~MacroJudge() = default;
  virtual MacroStatus assess(const EvaluationContext& ctx) = 0;
};

class Reflector {
 public:
  virtual ~Reflector() = default;
  virtual ReflectorVerdict revise(const Observation& obs, const PlanHistory& history,
                                  const Subplan& subplan, const TrajectorySegment& failure) = 0;
};

struct PolicyBundle {
  std::shared_ptr<Planner> planner;
  std::shared_ptr<Operator> op;
  std::shared_ptr<MicroJudge> micro_judge;
  std::shared_ptr<MacroJudge> macro_judge;
  std::shared_ptr<Reflector> reflector;

  void require_complete() const;  // throws PolicyFailure on a missing role
};

}  // namespace planmcts
