// Command-line front end; all work goes through the shared-library C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "planmcts.h"

using nlohmann::json;

namespace {

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) {
    std::cerr << "cannot read config file: " << path << "\n";
    std::exit(2);
  }
  std::stringstream buf;
  buf << in.rdbuf();
  json cfg = json::parse(buf.str(), nullptr, false);
  if (cfg.is_discarded() || !cfg.is_object()) {
    std::cerr << "config file is not a JSON object: " << path << "\n";
    std::exit(2);
  }
  return cfg;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "0,1,5" -> [0,1,5]; "20" -> count 20 (seeds 0..19)
json parse_seeds(const std::string& s) {
  auto parts = split_csv(s);
  if (parts.size() == 1 && s.find(',') == std::string::npos) {
    return json(std::stoull(parts[0]));
  }
  json arr = json::array();
  for (const auto& p : parts) arr.push_back(std::stoull(p));
  return arr;
}

int invoke(int (*op)(pmx_ctx*, const char*, char**), const json& cfg) {
  pmx_ctx* ctx = pmx_ctx_new();
  char* result = nullptr;
  int rc = op(ctx, cfg.dump().c_str(), &result);
  if (rc != PMX_OK) {
    std::cerr << "error (" << rc << "): " << pmx_last_error(ctx) << "\n";
  } else {
    std::cout << result << "\n";
    pmx_string_free(result);
  }
  pmx_ctx_free(ctx);
  return rc == PMX_OK ? 0 : 1;
}

// Flags override config-file values; only flags the user actually passed
// are written into the merged config.
struct BatchFlags {
  std::string config_file, env, tasks, variant, seeds, adapter, out, policies, variants;
  int budget = 0, depth = 0, width = 0, jobs = 0, policy_seed_unused = 0;
  double c = 0.0, epsilon = 0.0;
  bool verbose = false, exhaust = false, full_history = false;

  void add_common(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "JSON config file; flags override its values");
    cmd->add_option("--env", env, "environment JSON file");
    cmd->add_option("--tasks", tasks, "comma-separated task ids (default: all)");
    cmd->add_option("--budget", budget, "search iteration budget");
    cmd->add_option("--depth", depth, "maximum tree depth");
    cmd->add_option("--width", width, "branching width (candidates per expansion)");
    cmd->add_option("--c", c, "UCT exploration constant");
    cmd->add_option("--seeds", seeds, "seed list '0,1,2' or a count '20'");
    cmd->add_option("--jobs", jobs, "parallel episodes");
    cmd->add_option("--adapter", adapter, "policy adapter: scripted | llm")
        ->check(CLI::IsMember({"scripted", "llm"}));
    cmd->add_option("--epsilon", epsilon, "scripted operator corruption rate");
    cmd->add_option("--policies", policies, "scripted policy table JSON file");
    cmd->add_option("--out", out, "output directory (traces, summary.csv, charts)");
    cmd->add_flag("--verbose", verbose, "keep full prompt/context text in traces");
    cmd->add_flag("--exhaust-budget", exhaust, "keep searching after the first solution");
    cmd->add_flag("--full-history-context", full_history,
                  "render all previous atomic actions into operator contexts");
  }

  json merge(const CLI::App* cmd) const {
    json cfg = load_config_file(config_file);
    auto set_if = [&](const char* flag, const char* key, const json& value) {
      if (cmd->count(flag) > 0) cfg[key] = value;
    };
    set_if("--env", "env", env);
    if (cmd->count("--tasks") > 0) cfg["tasks"] = split_csv(tasks);
    set_if("--budget", "budget", budget);
    set_if("--depth", "depth", depth);
    set_if("--width", "width", width);
    set_if("--c", "c", c);
    if (cmd->count("--seeds") > 0) cfg["seeds"] = parse_seeds(seeds);
    set_if("--jobs", "jobs", jobs);
    set_if("--adapter", "adapter", adapter);
    set_if("--epsilon", "epsilon", epsilon);
    set_if("--policies", "policies", policies);
    set_if("--out", "out", out);
    set_if("--verbose", "verbose", verbose);
    set_if("--exhaust-budget", "exhaust_budget", exhaust);
    set_if("--full-history-context", "full_history_context", full_history);
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"plan-space MCTS experiment runner"};
  app.require_subcommand(1);

  // run
  auto* run_cmd = app.add_subcommand("run", "run one search variant over a task/seed grid");
  BatchFlags run_flags;
  run_flags.add_common(run_cmd);
  run_cmd->add_option("--variant", run_flags.variant,
                      "PlanMCTS | PlanSearch | ActionMCTS | ActionSearch");

  // compare
  auto* cmp_cmd = app.add_subcommand("compare", "run several variants and emit the comparison");
  BatchFlags cmp_flags;
  cmp_flags.add_common(cmp_cmd);
  cmp_cmd->add_option("--variants", cmp_flags.variants,
                      "comma-separated variant names (default PlanMCTS,ActionMCTS)");

  // ablate
  auto* abl_cmd = app.add_subcommand("ablate", "reward/refinement ablation set");
  BatchFlags abl_flags;
  abl_flags.add_common(abl_cmd);

  // gen-env
  auto* gen_cmd = app.add_subcommand("gen-env", "generate a simulated web environment");
  std::uint64_t gen_seed = 0;
  int gen_branching = 10, gen_depth = 5, gen_paths = 1;
  double gen_rho = 0.5;
  std::string gen_out;
  gen_cmd->add_option("--seed", gen_seed, "generator seed");
  gen_cmd->add_option("--branching", gen_branching, "elements per page");
  gen_cmd->add_option("--depth", gen_depth, "valid path length");
  gen_cmd->add_option("--valid-paths", gen_paths, "number of disjoint valid paths");
  gen_cmd->add_option("--distractor-ratio", gen_rho, "fraction of distractors that dead-end");
  gen_cmd->add_option("--out", gen_out, "output environment file");

  CLI11_PARSE(app, argc, argv);

  if (run_cmd->parsed()) {
    json cfg = run_flags.merge(run_cmd);
    if (run_cmd->count("--variant") > 0) cfg["variant"] = run_flags.variant;
    return invoke(pmx_run, cfg);
  }
  if (cmp_cmd->parsed()) {
    json cfg = cmp_flags.merge(cmp_cmd);
    if (cmp_cmd->count("--variants") > 0) cfg["variants"] = split_csv(cmp_flags.variants);
    return invoke(pmx_compare, cfg);
  }
  if (abl_cmd->parsed()) {
    return invoke(pmx_ablate, abl_flags.merge(abl_cmd));
  }
  json cfg{{"seed", gen_seed},
           {"branching", gen_branching},
           {"depth", gen_depth},
           {"valid_paths", gen_paths},
           {"distractor_ratio", gen_rho}};
  if (gen_cmd->count("--out") > 0) cfg["out"] = gen_out;
  return invoke(pmx_gen_env, cfg);
}
