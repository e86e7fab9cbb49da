#include "planmcts/dual_gate.hpp"

namespace planmcts {

char to_char(MacroCode c) { return "ABCDE"[static_cast<std::size_t>(c)]; }

void PolicyBundle::require_complete() const {
  if (!planner || !op || !micro_judge || !macro_judge || !reflector) {
    throw PolicyFailure("policy bundle is missing a role");
  }
}

std::vector<AtomicAction> Operator::propose_actions(const Observation& obs,
                                                    const PlanHistory& history, int /*k*/) {
  TrajectorySegment empty;
  empty.observations.push_back(obs);
  Subplan probe("take the single most promising next action");
  return {decide(obs, history, empty, probe).action};
}

int micro_verify(const EvaluationContext& ctx, MicroJudge& judge,
                 std::vector<std::string>* notes) {
  try {
    int v = judge.verify(ctx);
    return v == 1 ? 1 : 0;
  } catch (const Error& e) {
    if (notes) notes->push_back(std::string("micro judge failure -> 0: ") + e.what());
    return 0;
  }
}

MacroResult macro_assess(const EvaluationContext& ctx, MacroJudge& judge, int n_samples,
                         const MacroScale& scale) {
  if (n_samples < 1) throw Error("macro_assess needs n_samples >= 1");
  MacroResult result;
  double sum = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    bool scored = false;
    for (int attempt = 0; attempt < 3 && !scored; ++attempt) {
      try {
        ++result.judge_calls;
        MacroStatus s = judge.assess(ctx);
        result.samples.push_back(s);
        sum += scale.value(s.code);
        scored = true;
      } catch (const Error& e) {
        result.notes.push_back("macro sample redraw: " + std::string(e.what()));
      }
    }
    if (!scored) {
      result.samples.push_back({MacroCode::E, "unparseable sample, scored 0"});
      result.notes.push_back("macro sample exhausted retries, scored 0");
    }
  }
  result.mean = sum / static_cast<double>(n_samples);
  return result;
}

double gate(int r_micro, double r_macro) {
  return static_cast<double>(r_micro) * r_macro;
}

RewardRecord evaluate(const EvaluationContext& ctx, MicroJudge& micro, MacroJudge& macro,
                      int n_samples, const MacroScale& scale) {
  RewardRecord rec;
  rec.r_micro = micro_verify(ctx, micro, &rec.notes);
  if (rec.r_micro == 0) {
    rec.reward = 0.0;
    return rec;  // macro judge deliberately not consulted
  }
  MacroResult m = macro_assess(ctx, macro, n_samples, scale);
  for (const auto& s : m.samples) rec.macro_samples.push_back(scale.value(s.code));
  rec.notes.insert(rec.notes.end(), m.notes.begin(), m.notes.end());
  rec.r_macro = m.mean;
  rec.reward = gate(rec.r_micro, rec.r_macro);
  return rec;
}

}  // namespace planmcts
