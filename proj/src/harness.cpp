#include "planmcts/harness.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

namespace planmcts {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- variants

VariantSpec make_variant(VariantKind kind, SearchConfig base) {
  switch (kind) {
    case VariantKind::PlanMCTS:
      base.space = SearchSpace::Plan;
      base.selection = SelectionRule::Uct;
      return {"PlanMCTS", base};
    case VariantKind::PlanSearch:
      base.space = SearchSpace::Plan;
      base.selection = SelectionRule::BestFirst;
      return {"PlanSearch", base};
    case VariantKind::ActionMCTS:
      base.space = SearchSpace::Action;
      base.selection = SelectionRule::Uct;
      base.refine_mode = RefineMode::Disabled;
      return {"ActionMCTS", base};
    case VariantKind::ActionSearch:
      base.space = SearchSpace::Action;
      base.selection = SelectionRule::BestFirst;
      base.refine_mode = RefineMode::Disabled;
      return {"ActionSearch", base};
  }
  throw Error("unknown variant kind");
}

VariantSpec variant_by_name(const std::string& name, SearchConfig base) {
  if (name == "PlanMCTS") return make_variant(VariantKind::PlanMCTS, base);
  if (name == "PlanSearch") return make_variant(VariantKind::PlanSearch, base);
  if (name == "ActionMCTS") return make_variant(VariantKind::ActionMCTS, base);
  if (name == "ActionSearch") return make_variant(VariantKind::ActionSearch, base);
  throw InfeasibleParams("unknown variant: " + name);
}

std::vector<VariantSpec> ablation_variants(const SearchConfig& base) {
  std::vector<VariantSpec> out;
  SearchConfig full = base;
  full.space = SearchSpace::Plan;
  full.selection = SelectionRule::Uct;
  full.reward_mode = RewardMode::Dual;
  full.refine_mode = RefineMode::Structural;
  out.push_back({"full", full});

  SearchConfig micro = full;
  micro.reward_mode = RewardMode::MicroOnly;
  out.push_back({"micro-only", micro});

  SearchConfig macro = full;
  macro.reward_mode = RewardMode::MacroOnly;
  out.push_back({"macro-only", macro});

  SearchConfig norefine = full;
  norefine.refine_mode = RefineMode::Disabled;
  out.push_back({"no-refinement", norefine});

  SearchConfig reflect = full;
  reflect.refine_mode = RefineMode::ReflectionOnly;
  out.push_back({"reflection-only", reflect});
  return out;
}

// ----------------------------------------------------------------- metrics

TaskRecord record_from_trace(const EpisodeTrace& trace) {
  TaskRecord rec;
  const TraceEvent* start = trace.find("episode_start");
  if (start) {
    rec.task_id = start->data.value("task", "");
    rec.seed = start->data.value("seed", 0ULL);
  }
  const TraceEvent* end = trace.find("episode_end");
  if (end) {
    rec.success = end->data.value("success", false);
    rec.env_steps = end->data.value("env_steps", 0L);
    rec.solution_len = end->data.value("solution_len", 0);
    rec.iterations_used = end->data.value("iterations_used", 0);
    rec.budget = end->data.value("budget", 0);
    rec.subplans_grounded = end->data.value("subplans_grounded", 0);
    rec.subplans_completed = end->data.value("subplans_completed", 0);
  }
  if (const TraceEvent* usage = trace.find("usage")) {
    rec.tokens = usage->data.value("total_tokens", 0L);
  }
  for (const auto& e : trace.events) {
    if (e.phase == "note" && e.data.contains("error")) {
      rec.error = e.data.value("detail", e.data["error"].get<std::string>());
    }
  }
  return rec;
}

MetricSet metrics_from_records(const std::vector<TaskRecord>& records) {
  MetricSet m;
  m.episodes = static_cast<int>(records.size());
  if (records.empty()) return m;
  int successes = 0;
  long grounded = 0;
  long completed = 0;
  double interactions = 0.0;
  double path = 0.0;
  double util = 0.0;
  for (const auto& r : records) {
    if (r.success) {
      ++successes;
      path += r.solution_len;
    }
    interactions += static_cast<double>(r.env_steps);
    util += r.budget > 0 ? 100.0 * r.iterations_used / r.budget : 0.0;
    grounded += r.subplans_grounded;
    completed += r.subplans_completed;
    m.tokens += r.tokens;
  }
  m.success_rate = 100.0 * successes / m.episodes;
  m.action_interactions = interactions / m.episodes;
  m.path_length = successes > 0 ? path / successes : 0.0;
  m.budget_utilization = util / m.episodes;
  m.subplan_completion_rate = grounded > 0 ? 100.0 * completed / grounded : 0.0;
  return m;
}

MetricSet metrics_from_traces(const std::vector<EpisodeTrace>& traces) {
  std::vector<TaskRecord> records;
  records.reserve(traces.size());
  for (const auto& t : traces) records.push_back(record_from_trace(t));
  return metrics_from_records(records);
}

// --------------------------------------------------------------- factories

BundleFactory scripted_factory(ScriptedOptions base) {
  return [base](std::shared_ptr<const PageGraph> graph, const std::string& task_id,
                const Environment* env, std::uint64_t seed) {
    ScriptedOptions opt = base;
    opt.seed = base.seed ^ seed;
    return EpisodePolicies{make_scripted_bundle(std::move(graph), task_id, env, opt), nullptr};
  };
}

BundleFactory llm_factory(AdapterConfig cfg) {
  return [cfg](std::shared_ptr<const PageGraph> graph, const std::string& task_id,
               const Environment*, std::uint64_t) {
    auto log = std::make_shared<UsageLog>();
    const TaskSpec& task = graph->task(task_id);
    return EpisodePolicies{make_llm_bundle(cfg, task.instruction, log), log};
  };
}

// ------------------------------------------------------------------- batch

namespace {

EpisodeTrace failure_trace(const std::string& task_id, std::uint64_t seed, int budget,
                           const std::string& error) {
  EpisodeTrace trace;
  trace.add(0, "episode_start", {{"task", task_id}, {"seed", seed}});
  trace.add(0, "note", {{"error", "episode_exception"}, {"detail", error}});
  trace.add(0, "episode_end",
            {{"success", false},
             {"answer", nullptr},
             {"iterations_used", 0},
             {"budget", budget},
             {"env_steps", 0},
             {"solution_len", 0},
             {"subplans_grounded", 0},
             {"subplans_completed", 0}});
  return trace;
}

EpisodeTrace run_one(std::shared_ptr<const PageGraph> graph, const std::string& task_id,
                     const VariantSpec& variant, std::uint64_t seed,
                     const BundleFactory& factory) {
  try {
    Environment env(graph, task_id, seed);
    EpisodePolicies policies = factory(graph, task_id, &env, seed);
    EpisodeResult result = run_episode(env, policies.bundle, variant.config);
    // seed goes into episode_start so a trace alone identifies its cell
    for (auto& e : result.trace.events) {
      if (e.phase == "episode_start") e.data["seed"] = seed;
    }
    if (policies.usage) {
      json u = policies.usage->to_json();
      u["total_tokens"] = policies.usage->total_tokens();
      result.trace.add(result.iterations_used, "usage", std::move(u));
    }
    return result.trace;
  } catch (const std::exception& e) {
    return failure_trace(task_id, seed, variant.config.budget, e.what());
  }
}

std::string trace_filename(const std::string& variant, const std::string& task,
                           std::uint64_t seed) {
  return variant + "_" + task + "_" + std::to_string(seed) + ".jsonl";
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

std::string fmt(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << v;
  return out.str();
}

}  // namespace

BatchResult run_batch(std::shared_ptr<const PageGraph> graph,
                      const std::vector<std::string>& task_ids, const VariantSpec& variant,
                      const std::vector<std::uint64_t>& seeds, const BundleFactory& factory,
                      const BatchOptions& opts) {
  if (task_ids.empty() || seeds.empty()) throw InfeasibleParams("empty task or seed list");
  struct Cell {
    std::string task;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const auto& t : task_ids) {
    for (auto s : seeds) cells.push_back({t, s});
  }

  std::vector<EpisodeTrace> traces(cells.size());
  int jobs = std::max(1, opts.jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      traces[i] = run_one(graph, cells[i].task, variant, cells[i].seed, factory);
    }
  } else {
    std::mutex mu;
    std::size_t next = 0;
    auto worker = [&] {
      while (true) {
        std::size_t i;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (next >= cells.size()) return;
          i = next++;
        }
        traces[i] = run_one(graph, cells[i].task, variant, cells[i].seed, factory);
      }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  BatchResult result;
  result.variant = variant;
  result.traces = std::move(traces);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    TaskRecord rec = record_from_trace(result.traces[i]);
    rec.task_id = cells[i].task;
    rec.seed = cells[i].seed;
    result.records.push_back(std::move(rec));
  }
  result.metrics = metrics_from_records(result.records);

  if (!opts.out_dir.empty()) {
    fs::path dir = fs::path(opts.out_dir) / "traces";
    for (std::size_t i = 0; i < cells.size(); ++i) {
      write_file(dir / trace_filename(variant.name, cells[i].task, cells[i].seed),
                 result.traces[i].to_jsonl(opts.verbose_traces));
    }
  }
  return result;
}

// ------------------------------------------------------------- comparison

std::string metrics_csv(const std::vector<BatchResult>& batches) {
  std::ostringstream out;
  out << "variant,episodes,success_rate,action_interactions,path_length,"
         "budget_utilization,subplan_completion_rate,tokens,"
         "d_success_rate,d_action_interactions\n";
  const MetricSet* baseline = batches.empty() ? nullptr : &batches.front().metrics;
  for (const auto& b : batches) {
    const MetricSet& m = b.metrics;
    out << b.variant.name << "," << m.episodes << "," << fmt(m.success_rate) << ","
        << fmt(m.action_interactions) << "," << fmt(m.path_length) << ","
        << fmt(m.budget_utilization) << "," << fmt(m.subplan_completion_rate) << ","
        << m.tokens << "," << fmt(m.success_rate - baseline->success_rate) << ","
        << fmt(m.action_interactions - baseline->action_interactions) << "\n";
  }
  return out.str();
}

namespace {

// Minimal static bar chart, one bar per batch.
std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
  const int bar_w = 80;
  const int gap = 30;
  const int height = 260;
  const int base_y = 210;
  int width = gap + static_cast<int>(values.size()) * (bar_w + gap);
  double max_v = 1e-9;
  for (double v : values) max_v = std::max(max_v, v);
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << std::max(width, 320)
      << "\" height=\"" << height << "\">\n";
  out << "<text x=\"10\" y=\"20\" font-size=\"14\" font-family=\"sans-serif\">" << title
      << "</text>\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    int x = gap + static_cast<int>(i) * (bar_w + gap);
    int h = static_cast<int>(160.0 * values[i] / max_v);
    out << "<rect x=\"" << x << "\" y=\"" << (base_y - h) << "\" width=\"" << bar_w
        << "\" height=\"" << h << "\" fill=\"#4a7fb5\"/>\n";
    out << "<text x=\"" << x << "\" y=\"" << (base_y - h - 6)
        << "\" font-size=\"12\" font-family=\"sans-serif\">" << fmt(values[i]) << "</text>\n";
    out << "<text x=\"" << x << "\" y=\"" << (base_y + 18)
        << "\" font-size=\"12\" font-family=\"sans-serif\">" << labels[i] << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

// Scaling view: success rate against search cost (tokens when any batch
// spent tokens, env steps otherwise).
std::string scaling_chart_svg(const std::vector<BatchResult>& batches) {
  bool use_tokens = std::any_of(batches.begin(), batches.end(),
                                [](const BatchResult& b) { return b.metrics.tokens > 0; });
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"420\" height=\"300\">\n";
  out << "<text x=\"10\" y=\"20\" font-size=\"14\" font-family=\"sans-serif\">success rate vs "
      << (use_tokens ? "tokens" : "env steps") << "</text>\n";
  out << "<line x1=\"50\" y1=\"250\" x2=\"400\" y2=\"250\" stroke=\"black\"/>\n";
  out << "<line x1=\"50\" y1=\"40\" x2=\"50\" y2=\"250\" stroke=\"black\"/>\n";
  double max_x = 1e-9;
  for (const auto& b : batches) {
    double x = use_tokens ? static_cast<double>(b.metrics.tokens) : b.metrics.action_interactions;
    max_x = std::max(max_x, x);
  }
  for (const auto& b : batches) {
    double xv = use_tokens ? static_cast<double>(b.metrics.tokens) : b.metrics.action_interactions;
    int x = 50 + static_cast<int>(340.0 * xv / max_x);
    int y = 250 - static_cast<int>(2.1 * b.metrics.success_rate);
    out << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"4\" fill=\"#b5544a\"/>\n";
    out << "<text x=\"" << (x + 6) << "\" y=\"" << y
        << "\" font-size=\"11\" font-family=\"sans-serif\">" << b.variant.name << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace

std::string compare(const std::vector<BatchResult>& batches, const std::string& out_dir) {
  if (batches.size() < 2) {
    throw MismatchedTaskSets("compare needs at least two variants");
  }
  auto grid = [](const BatchResult& b) {
    std::vector<std::pair<std::string, std::uint64_t>> g;
    for (const auto& r : b.records) g.emplace_back(r.task_id, r.seed);
    return g;
  };
  auto reference = grid(batches.front());
  for (const auto& b : batches) {
    if (grid(b) != reference) {
      throw MismatchedTaskSets("variants were run on different task/seed grids");
    }
  }
  std::string csv = metrics_csv(batches);
  if (!out_dir.empty()) {
    write_file(fs::path(out_dir) / "summary.csv", csv);
    std::vector<std::string> labels;
    std::vector<double> success, interactions, path;
    for (const auto& b : batches) {
      labels.push_back(b.variant.name);
      success.push_back(b.metrics.success_rate);
      interactions.push_back(b.metrics.action_interactions);
      path.push_back(b.metrics.path_length);
    }
    fs::path charts = fs::path(out_dir) / "charts";
    write_file(charts / "success_rate.svg", bar_chart_svg("success rate (%)", labels, success));
    write_file(charts / "action_interactions.svg",
               bar_chart_svg("mean action interactions", labels, interactions));
    write_file(charts / "path_length.svg",
               bar_chart_svg("mean solution path length", labels, path));
    write_file(charts / "success_vs_cost.svg", scaling_chart_svg(batches));
  }
  return csv;
}

}  // namespace planmcts
