#pragma once

// Experiment harness: runs seeded task batches across search variants,
// aggregates the trace-derived metrics, and emits traces, CSV summaries and
// SVG charts.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "planmcts/llm_adapter.hpp"
#include "planmcts/scripted_policies.hpp"
#include "planmcts/search.hpp"
#include "planmcts/webworld.hpp"

namespace planmcts {

enum class VariantKind { PlanMCTS, PlanSearch, ActionMCTS, ActionSearch };

struct VariantSpec {
  std::string name;
  SearchConfig config;
};

VariantSpec make_variant(VariantKind kind, SearchConfig base);
VariantSpec variant_by_name(const std::string& name, SearchConfig base);

// Reward/refinement ablations: full, micro-only, macro-only, no-refinement,
// reflection-only. All plan-space UCT.
std::vector<VariantSpec> ablation_variants(const SearchConfig& base);

struct TaskRecord {
  std::string task_id;
  std::uint64_t seed = 0;
  bool success = false;
  long env_steps = 0;
  int solution_len = 0;
  int iterations_used = 0;
  int budget = 0;
  int subplans_grounded = 0;
  int subplans_completed = 0;
  long tokens = 0;
  std::string error;  // non-empty when the episode aborted
};

struct MetricSet {
  int episodes = 0;
  double success_rate = 0.0;            // percent
  double action_interactions = 0.0;     // mean env.step calls per episode
  double path_length = 0.0;             // mean solution steps over successes
  double budget_utilization = 0.0;      // mean percent of budget consumed
  double subplan_completion_rate = 0.0; // percent of grounded subplans verified
  long tokens = 0;
};

// Every metric is a pure function of the persisted trace; run_batch reports
// through this same path so a recompute from JSONL matches exactly.
TaskRecord record_from_trace(const EpisodeTrace& trace);
MetricSet metrics_from_records(const std::vector<TaskRecord>& records);
MetricSet metrics_from_traces(const std::vector<EpisodeTrace>& traces);

// Builds the per-episode policy bundle. The Environment pointer stays valid
// for the episode's lifetime; usage is null for token-free adapters.
struct EpisodePolicies {
  PolicyBundle bundle;
  std::shared_ptr<UsageLog> usage;
};
using BundleFactory = std::function<EpisodePolicies(
    std::shared_ptr<const PageGraph> graph, const std::string& task_id, const Environment* env,
    std::uint64_t seed)>;

BundleFactory scripted_factory(ScriptedOptions base = {});
BundleFactory llm_factory(AdapterConfig cfg);

struct BatchOptions {
  int jobs = 1;
  std::string out_dir;         // empty = nothing persisted
  bool verbose_traces = false;
};

struct BatchResult {
  VariantSpec variant;
  std::vector<TaskRecord> records;  // ordered by (task index, seed index)
  std::vector<EpisodeTrace> traces;
  MetricSet metrics;
};

// One episode per (task, seed). Episode failures are recorded per task and
// never abort the batch. Traces land in <out_dir>/traces/.
BatchResult run_batch(std::shared_ptr<const PageGraph> graph,
                      const std::vector<std::string>& task_ids, const VariantSpec& variant,
                      const std::vector<std::uint64_t>& seeds, const BundleFactory& factory,
                      const BatchOptions& opts = {});

// Comparison table over batches that share the same (task, seed) grid.
// Writes summary.csv and charts/*.svg under out_dir (when non-empty) and
// returns the CSV text. Throws MismatchedTaskSets on fewer than two batches
// or differing grids.
std::string compare(const std::vector<BatchResult>& batches, const std::string& out_dir);

std::string metrics_csv(const std::vector<BatchResult>& batches);

}  // namespace planmcts
