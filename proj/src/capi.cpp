#include "planmcts.h"

#include <cstring>
#include <string>

#include <json.hpp>

#include "planmcts/harness.hpp"

using nlohmann::json;
using namespace planmcts;

struct pmx_ctx {
  std::string last_error;
};

namespace {

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json parse_config(const char* config_json) {
  if (!config_json) throw InfeasibleParams("config must not be null");
  json cfg = json::parse(config_json, nullptr, false);
  if (cfg.is_discarded() || !cfg.is_object()) {
    throw InfeasibleParams("config must be a JSON object");
  }
  return cfg;
}

SearchConfig search_config(const json& cfg) {
  SearchConfig sc;
  sc.budget = cfg.value("budget", sc.budget);
  sc.max_depth = cfg.value("depth", sc.max_depth);
  sc.branch_width = cfg.value("width", sc.branch_width);
  sc.c = cfg.value("c", sc.c);
  sc.max_atomic_steps = cfg.value("max_atomic_steps", sc.max_atomic_steps);
  sc.refine_retries = cfg.value("refine_retries", sc.refine_retries);
  sc.macro_samples = cfg.value("macro_samples", sc.macro_samples);
  sc.exhaust_budget = cfg.value("exhaust_budget", sc.exhaust_budget);
  sc.full_history_context = cfg.value("full_history_context", sc.full_history_context);
  sc.policy_retries = cfg.value("policy_retries", sc.policy_retries);
  sc.validate();
  return sc;
}

std::vector<std::uint64_t> seed_list(const json& cfg) {
  std::vector<std::uint64_t> seeds;
  if (!cfg.contains("seeds")) return {0};
  const json& s = cfg["seeds"];
  if (s.is_number_integer()) {
    for (std::uint64_t i = 0; i < s.get<std::uint64_t>(); ++i) seeds.push_back(i);
  } else if (s.is_array()) {
    for (const auto& v : s) seeds.push_back(v.get<std::uint64_t>());
  } else {
    throw InfeasibleParams("seeds must be a count or an array");
  }
  if (seeds.empty()) throw InfeasibleParams("seed list is empty");
  return seeds;
}

std::shared_ptr<const PageGraph> load_env(const json& cfg) {
  if (cfg.contains("env_json")) {
    return std::make_shared<const PageGraph>(
        page_graph_from_json(cfg["env_json"].dump()));
  }
  if (!cfg.contains("env") || !cfg["env"].is_string()) {
    throw InfeasibleParams("config needs an \"env\" file path");
  }
  return std::make_shared<const PageGraph>(load_page_graph(cfg["env"].get<std::string>()));
}

std::vector<std::string> task_list(const json& cfg, const PageGraph& graph) {
  std::vector<std::string> tasks;
  if (cfg.contains("tasks") && !cfg["tasks"].is_null()) {
    for (const auto& t : cfg["tasks"]) {
      std::string id = t.get<std::string>();
      graph.task(id);  // throws UnknownTask for ids not in the environment
      tasks.push_back(std::move(id));
    }
  } else {
    for (const auto& t : graph.tasks) tasks.push_back(t.id);
  }
  if (tasks.empty()) throw InfeasibleParams("task list is empty");
  return tasks;
}

BundleFactory factory_from(const json& cfg, std::shared_ptr<const PageGraph> graph) {
  std::string adapter = cfg.value("adapter", std::string("scripted"));
  if (adapter == "llm") {
    AdapterConfig ac;
    if (cfg.contains("llm")) {
      const json& l = cfg["llm"];
      ac.endpoint = l.value("endpoint", ac.endpoint);
      ac.model = l.value("model", ac.model);
      ac.planner_temperature = l.value("planner_temperature", ac.planner_temperature);
      ac.judge_temperature = l.value("judge_temperature", ac.judge_temperature);
      ac.max_retries = l.value("max_retries", ac.max_retries);
      ac.timeout_ms = l.value("timeout_ms", ac.timeout_ms);
      ac.api_key_env = l.value("api_key_env", ac.api_key_env);
      ac.max_in_flight = l.value("max_in_flight", ac.max_in_flight);
    }
    ac.validate();
    return llm_factory(ac);
  }
  if (adapter != "scripted") throw InfeasibleParams("adapter must be scripted or llm");
  ScriptedOptions opt;
  opt.epsilon = cfg.value("epsilon", opt.epsilon);
  opt.seed = cfg.value("policy_seed", opt.seed);
  opt.segment_len = cfg.value("segment_len", opt.segment_len);
  if (cfg.contains("policies")) {
    PolicyTable table = load_policy_table(cfg["policies"].get<std::string>());
    return [graph, table, opt](std::shared_ptr<const PageGraph> g, const std::string& task,
                               const Environment* env, std::uint64_t seed) {
      ScriptedOptions o = opt;
      o.seed = opt.seed ^ seed;
      return EpisodePolicies{make_table_bundle(g, task, env, table, o), nullptr};
    };
  }
  return scripted_factory(opt);
}

json metrics_json(const MetricSet& m) {
  return {{"episodes", m.episodes},
          {"success_rate", m.success_rate},
          {"action_interactions", m.action_interactions},
          {"path_length", m.path_length},
          {"budget_utilization", m.budget_utilization},
          {"subplan_completion_rate", m.subplan_completion_rate},
          {"tokens", m.tokens}};
}

json records_json(const std::vector<TaskRecord>& records) {
  json out = json::array();
  for (const auto& r : records) {
    out.push_back({{"task", r.task_id},
                   {"seed", r.seed},
                   {"success", r.success},
                   {"env_steps", r.env_steps},
                   {"solution_len", r.solution_len},
                   {"iterations_used", r.iterations_used},
                   {"budget", r.budget},
                   {"subplans_grounded", r.subplans_grounded},
                   {"subplans_completed", r.subplans_completed},
                   {"tokens", r.tokens},
                   {"error", r.error}});
  }
  return out;
}

BatchResult run_variant(const json& cfg, std::shared_ptr<const PageGraph> graph,
                        const VariantSpec& variant) {
  BatchOptions opts;
  opts.jobs = cfg.value("jobs", 1);
  opts.out_dir = cfg.value("out", std::string());
  opts.verbose_traces = cfg.value("verbose", false);
  return run_batch(graph, task_list(cfg, *graph), variant, seed_list(cfg),
                   factory_from(cfg, graph), opts);
}

json compare_result(const json& cfg, const std::vector<VariantSpec>& variants) {
  auto graph = load_env(cfg);
  std::vector<BatchResult> batches;
  for (const auto& v : variants) batches.push_back(run_variant(cfg, graph, v));
  std::string csv = compare(batches, cfg.value("out", std::string()));
  json vj = json::array();
  for (const auto& b : batches) {
    vj.push_back({{"name", b.variant.name}, {"metrics", metrics_json(b.metrics)}});
  }
  return {{"csv", csv}, {"variants", vj}};
}

template <typename Fn>
int guarded(pmx_ctx* ctx, char** result_json, Fn&& fn) {
  if (!ctx) return PMX_EINVAL;
  if (!result_json) {
    ctx->last_error = "result output pointer must not be null";
    return PMX_EINVAL;
  }
  *result_json = nullptr;
  try {
    json result = fn();
    *result_json = dup_string(result.dump());
    ctx->last_error.clear();
    return PMX_OK;
  } catch (const InfeasibleParams& e) {
    ctx->last_error = e.what();
  } catch (const UnknownTask& e) {
    ctx->last_error = e.what();
  } catch (const SchemaError& e) {
    ctx->last_error = e.what();
  } catch (const MismatchedTaskSets& e) {
    ctx->last_error = e.what();
  } catch (const std::ios_base::failure& e) {
    ctx->last_error = e.what();
    return PMX_EIO;
  } catch (const Error& e) {
    ctx->last_error = e.what();
    std::string msg = e.what();
    return msg.find("cannot write") != std::string::npos ||
                   msg.find("cannot read") != std::string::npos ||
                   msg.find("cannot open") != std::string::npos
               ? PMX_EIO
               : PMX_EFAIL;
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    return PMX_EFAIL;
  }
  return PMX_EINVAL;
}

}  // namespace

extern "C" {

pmx_ctx* pmx_ctx_new(void) { return new pmx_ctx(); }

void pmx_ctx_free(pmx_ctx* ctx) { delete ctx; }

const char* pmx_last_error(const pmx_ctx* ctx) {
  return ctx ? ctx->last_error.c_str() : "null context";
}

void pmx_string_free(char* s) { delete[] s; }

int pmx_gen_env(pmx_ctx* ctx, const char* config_json, char** result_json) {
  return guarded(ctx, result_json, [&] {
    json cfg = parse_config(config_json);
    GeneratorParams params;
    params.seed = cfg.value("seed", params.seed);
    params.branching = cfg.value("branching", params.branching);
    params.depth = cfg.value("depth", params.depth);
    params.valid_paths = cfg.value("valid_paths", params.valid_paths);
    params.distractor_ratio = cfg.value("distractor_ratio", params.distractor_ratio);
    PageGraph g = generate_page_graph(params);
    if (cfg.contains("out")) {
      std::string path = cfg["out"].get<std::string>();
      save_page_graph(g, path);
      return json{{"path", path}};
    }
    return json{{"env", json::parse(page_graph_to_json(g))}};
  });
}

int pmx_run(pmx_ctx* ctx, const char* config_json, char** result_json) {
  return guarded(ctx, result_json, [&] {
    json cfg = parse_config(config_json);
    auto graph = load_env(cfg);
    VariantSpec variant =
        variant_by_name(cfg.value("variant", std::string("PlanMCTS")), search_config(cfg));
    BatchResult batch = run_variant(cfg, graph, variant);
    return json{{"variant", variant.name},
                {"metrics", metrics_json(batch.metrics)},
                {"records", records_json(batch.records)}};
  });
}

int pmx_compare(pmx_ctx* ctx, const char* config_json, char** result_json) {
  return guarded(ctx, result_json, [&] {
    json cfg = parse_config(config_json);
    std::vector<std::string> names{"PlanMCTS", "ActionMCTS"};
    if (cfg.contains("variants")) {
      names.clear();
      for (const auto& v : cfg["variants"]) names.push_back(v.get<std::string>());
    }
    SearchConfig sc = search_config(cfg);
    std::vector<VariantSpec> variants;
    for (const auto& n : names) variants.push_back(variant_by_name(n, sc));
    return compare_result(cfg, variants);
  });
}

int pmx_ablate(pmx_ctx* ctx, const char* config_json, char** result_json) {
  return guarded(ctx, result_json, [&] {
    json cfg = parse_config(config_json);
    return compare_result(cfg, ablation_variants(search_config(cfg)));
  });
}

}  // extern "C"
