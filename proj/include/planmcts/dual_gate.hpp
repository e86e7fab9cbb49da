#pragma once

// Dual-gated reward R = r_micro * r_macro: a binary completion check gating
// an averaged global-progress assessment.

#include <array>
#include <functional>
#include <vector>

#include "planmcts/policies.hpp"

namespace planmcts {

// Status-to-scalar map (uniform grid, overridable in config).
struct MacroScale {
  std::array<double, 5> values{1.0, 0.75, 0.5, 0.25, 0.0};  // A..E
  double value(MacroCode c) const { return values[static_cast<std::size_t>(c)]; }
};

struct MacroResult {
  double mean = 0.0;
  std::vector<MacroStatus> samples;
  std::vector<std::string> notes;
  int judge_calls = 0;
};

// 1 iff the judge answers yes; any ambiguity or judge failure collapses to 0.
int micro_verify(const EvaluationContext& ctx, MicroJudge& judge,
                 std::vector<std::string>* notes = nullptr);

// Mean of n_samples independent judge calls under the scale. A sample whose
// judge call throws is re-drawn up to 2 extra times, then scored 0.
MacroResult macro_assess(const EvaluationContext& ctx, MacroJudge& judge, int n_samples,
                         const MacroScale& scale = {});

double gate(int r_micro, double r_macro);

// Full dual-gated evaluation; skips the macro judge entirely when micro
// fails (the product is forced to 0 either way).
RewardRecord evaluate(const EvaluationContext& ctx, MicroJudge& micro, MacroJudge& macro,
                      int n_samples, const MacroScale& scale = {});

}  // namespace planmcts
