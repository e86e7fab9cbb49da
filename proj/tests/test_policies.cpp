#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>
#include <string>
#include <vector>

#include "planmcts/dual_gate.hpp"
#include "planmcts/scripted_policies.hpp"

using namespace planmcts;

namespace {

std::shared_ptr<const PageGraph> fixture(const std::string& name) {
  return std::make_shared<PageGraph>(load_page_graph(std::string(FIXTURES_DIR) + "/" + name));
}

}  // namespace

TEST_CASE("parse_directive grammar") {
  auto click2 = parse_directive("click 'Menu' then click 'Catalog'");
  CHECK(click2.kind == SubplanDirective::Kind::ClickSequence);
  REQUIRE(click2.labels.size() == 2);
  CHECK(click2.labels[0] == "Menu");
  CHECK(click2.labels[1] == "Catalog");

  auto click1 = parse_directive("click 'Search'");
  CHECK(click1.kind == SubplanDirective::Kind::ClickSequence);
  CHECK(click1.labels == std::vector<std::string>{"Search"});

  auto answer = parse_directive("report the answer '42'");
  CHECK(answer.kind == SubplanDirective::Kind::Answer);
  CHECK(answer.message == "42");

  auto exec = parse_directive("execute action: click(3)");
  CHECK(exec.kind == SubplanDirective::Kind::ExecuteAction);
  CHECK(exec.action == AtomicAction::click(3));

  auto rollout = parse_directive(kRolloutDirective);
  CHECK(rollout.kind == SubplanDirective::Kind::Rollout);

  CHECK(parse_directive("ponder the meaning of it all").kind == SubplanDirective::Kind::Unknown);
}

TEST_CASE("noise schedule is deterministic per seed and roughly calibrated") {
  NoiseSchedule a(0.3, 17);
  NoiseSchedule b(0.3, 17);
  int hits = 0;
  for (int i = 0; i < 10000; ++i) {
    bool va = a.next();
    REQUIRE(va == b.next());
    hits += va ? 1 : 0;
  }
  CHECK(hits > 2700);
  CHECK(hits < 3300);

  NoiseSchedule other_seed(0.3, 18);
  int diff = 0;
  NoiseSchedule a2(0.3, 17);
  for (int i = 0; i < 1000; ++i) diff += a2.next() != other_seed.next() ? 1 : 0;
  CHECK(diff > 0);

  NoiseSchedule zero(0.0, 17);
  for (int i = 0; i < 100; ++i) CHECK(!zero.next());
}

TEST_CASE("oracle planner leads with the route and marks retries") {
  auto g = fixture("chain3.json");
  Environment env(g, "t0");
  env.reset();
  PolicyBundle b = make_scripted_bundle(g, "t0", &env);
  b.require_complete();

  auto fresh = b.planner->propose(env.observe(), {}, 3);
  REQUIRE(!fresh.empty());
  CHECK(fresh[0].text.find("Open records") != std::string::npos);
  CHECK(fresh[0].text.rfind("retry:", 0) == std::string::npos);
  CHECK(fresh.size() <= 3);

  PlanHistory failed{{"click 'Open records'", SubplanStatus::NotCompleted}};
  auto retry = b.planner->propose(env.observe(), failed, 3);
  REQUIRE(!retry.empty());
  CHECK(retry[0].text.rfind("retry: ", 0) == 0);
}

TEST_CASE("oracle planner caps decoys when a main route exists") {
  auto g = fixture("chain3.json");
  Environment env(g, "t0");
  env.reset();
  PolicyBundle b = make_scripted_bundle(g, "t0", &env);
  auto proposals = b.planner->propose(env.observe(), {}, 5);
  CHECK(proposals.size() <= 2);  // main route plus at most one alternative
}

TEST_CASE("oracle planner proposes the terminal report on the goal page") {
  auto g = fixture("chain3.json");
  Environment env(g, "t0");
  env.reset();
  env.step(AtomicAction::click(0));
  env.step(AtomicAction::click(0));
  PolicyBundle b = make_scripted_bundle(g, "t0", &env);
  auto proposals = b.planner->propose(env.observe(), {}, 3);
  REQUIRE(!proposals.empty());
  CHECK(proposals[0].text == "report the answer '42'");
}

TEST_CASE("noiseless operator walks a click directive and stops") {
  auto g = fixture("chain3.json");
  Environment env(g, "t0");
  env.reset();
  PolicyBundle b = make_scripted_bundle(g, "t0", &env);

  Subplan plan("click 'Open records' then click 'View access code'");
  TrajectorySegment local;
  local.observations.push_back(env.observe());

  auto d1 = b.op->decide(env.observe(), {}, local, plan);
  CHECK(!d1.subplan_done);
  CHECK(d1.action == AtomicAction::click(0));
  local.actions.push_back(d1.action);
  local.observations.push_back(env.step(d1.action).obs);

  auto d2 = b.op->decide(env.observe(), {}, local, plan);
  CHECK(d2.action == AtomicAction::click(0));
  local.actions.push_back(d2.action);
  local.observations.push_back(env.step(d2.action).obs);

  auto d3 = b.op->decide(env.observe(), {}, local, plan);
  CHECK(d3.subplan_done);
}

TEST_CASE("operator under full noise misclicks deterministically") {
  auto g = fixture("chain3.json");
  Environment env(g, "t0");
  env.reset();
  ScriptedOptions noisy;
  noisy.epsilon = 1.0;
  noisy.seed = 3;
  PolicyBundle b = make_scripted_bundle(g, "t0", &env, noisy);
  TrajectorySegment local;
  local.observations.push_back(env.observe());
  auto d = b.op->decide(env.observe(), {}, local, Subplan("click 'Open records'"));
  CHECK(d.action == AtomicAction::click(1));  // the other clickable element
}

TEST_CASE("micro judge accepts exact grounding and rejects deviations") {
  auto g = fixture("chain3.json");
  Environment env(g, "t0");
  env.reset();
  PolicyBundle b = make_scripted_bundle(g, "t0", &env);

  EvaluationContext ctx;
  ctx.subplan = Subplan("click 'Open records'");
  ctx.segment.observations.push_back(env.observe());
  ctx.segment.actions.push_back(AtomicAction::click(0));
  ctx.segment.observations.push_back(env.step(AtomicAction::click(0)).obs);
  ctx.segment.terminated = TrajectorySegment::Terminated::Fulfilled;
  CHECK(b.micro_judge->verify(ctx) == 1);

  EvaluationContext wrong = ctx;
  wrong.subplan = Subplan("click 'Banner ad'");
  CHECK(b.micro_judge->verify(wrong) == 0);

  EvaluationContext capped = ctx;
  capped.segment.terminated = TrajectorySegment::Terminated::StepCapReached;
  CHECK(b.micro_judge->verify(capped) == 0);

  EvaluationContext short_seg = ctx;
  short_seg.subplan = Subplan("click 'Open records' then click 'View access code'");
  CHECK(b.micro_judge->verify(short_seg) == 0);
}

TEST_CASE("macro judge dithers samples so the mean matches oracle progress") {
  // After one of three actions, oracle progress is 2/3 once the next two
  // remain; here progress after the first click of chain3 is 1/3. Use the
  // second click to land on 2/3 as in the worked example.
  auto g = fixture("chain3.json");
  Environment env(g, "t0");
  env.reset();
  PolicyBundle b = make_scripted_bundle(g, "t0", &env);
  env.step(AtomicAction::click(0));
  env.step(AtomicAction::click(0));

  EvaluationContext ctx;
  ctx.subplan = Subplan("click 'Open records' then click 'View access code'");
  ctx.post_state_key = env.state_key();
  ctx.segment.terminated = TrajectorySegment::Terminated::Fulfilled;

  MacroScale scale;
  double sum = 0.0;
  for (int i = 0; i < 3; ++i) sum += scale.value(b.macro_judge->assess(ctx).code);
  CHECK(sum / 3.0 == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("macro judge pins terminal outcomes to the extremes") {
  auto g = fixture("chain3.json");
  Environment env(g, "t0");
  env.reset();
  PolicyBundle b = make_scripted_bundle(g, "t0", &env);

  EvaluationContext ctx;
  ctx.subplan = Subplan("report the answer '42'");
  ctx.segment.terminated = TrajectorySegment::Terminated::AnswerEmitted;
  ctx.env_success = true;
  CHECK(b.macro_judge->assess(ctx).code == MacroCode::A);
  ctx.env_success = false;
  CHECK(b.macro_judge->assess(ctx).code == MacroCode::E);
}

TEST_CASE("reflector splits an overlong plan whose first segment worked") {
  auto g = fixture("chain3.json");
  Environment env(g, "t0");
  env.reset();
  PolicyBundle b = make_scripted_bundle(g, "t0", &env);

  Subplan plan("click 'Open records' then click 'View access code'");
  TrajectorySegment failure;
  failure.observations.push_back(env.observe());
  failure.actions.push_back(AtomicAction::click(0));
  failure.observations.push_back(env.step(AtomicAction::click(0)).obs);
  failure.terminated = TrajectorySegment::Terminated::StepCapReached;

  auto v = b.reflector->revise(env.observe(), {}, plan, failure);
  CHECK(v.reason_type == ReflectorReason::ComplexityError);
  CHECK(v.revised_plan == "click 'Open records'");
}

TEST_CASE("reflector flags feasibility when nothing was grounded") {
  auto g = fixture("chain3.json");
  Environment env(g, "t0");
  env.reset();
  PolicyBundle b = make_scripted_bundle(g, "t0", &env);

  TrajectorySegment failure;
  failure.observations.push_back(env.observe());
  failure.terminated = TrajectorySegment::Terminated::Fulfilled;
  auto v = b.reflector->revise(env.observe(), {}, Subplan("click 'Missing thing'"), failure);
  CHECK(v.reason_type == ReflectorReason::FeasibilityError);
  CHECK(!v.revised_plan.empty());
}

TEST_CASE("reflector routes around a blocking popup") {
  auto g = fixture("popup.json");
  Environment env(g, "t0");
  env.reset();
  PolicyBundle b = make_scripted_bundle(g, "t0", &env);

  TrajectorySegment failure;
  failure.observations.push_back(env.observe());
  failure.actions.push_back(AtomicAction::click(1));
  failure.observations.push_back(env.step(AtomicAction::click(1)).obs);
  failure.terminated = TrajectorySegment::Terminated::Fulfilled;

  auto v = b.reflector->revise(env.observe(), {}, Subplan("click 'Continue to records'"), failure);
  CHECK(v.revised_plan.find("Close notification") != std::string::npos);
  CHECK(v.revised_plan.find("Continue to records") != std::string::npos);
}

TEST_CASE("policy table parsing and precedence") {
  PolicyTable t = load_policy_table(std::string(FIXTURES_DIR) + "/dualpath_policies.json");
  REQUIRE(t.planner.size() == 1);
  CHECK(t.planner[0].page == "start");
  CHECK(t.planner[0].subplans.size() == 2);
  REQUIRE(t.reflector.size() == 2);
  CHECK(t.reflector[0].reason_type == ReflectorReason::FeasibilityError);

  PolicyTable popup = load_policy_table(std::string(FIXTURES_DIR) + "/popup_policies.json");
  CHECK(popup.reflector[0].reason_type == ReflectorReason::ComplexityError);

  CHECK_THROWS_AS(policy_table_from_json("{not json"), SchemaError);
  CHECK_THROWS_AS(policy_table_from_json("{\"format\": \"other\"}"), SchemaError);
  CHECK_THROWS_AS(load_policy_table("/nonexistent/table.json"), SchemaError);
}

TEST_CASE("table bundle overrides planner and reflector, keeps oracle judges") {
  auto g = fixture("dualpath.json");
  Environment env(g, "t0");
  env.reset();
  PolicyTable t = load_policy_table(std::string(FIXTURES_DIR) + "/dualpath_policies.json");
  PolicyBundle b = make_table_bundle(g, "t0", &env, t);

  auto proposals = b.planner->propose(env.observe(), {}, 3);
  REQUIRE(proposals.size() == 2);
  CHECK(proposals[0].text == "click 'Menu' then click 'Catalog'");
  CHECK(proposals[1].text == "click 'Browse' then click 'Search'");

  TrajectorySegment failure;
  failure.observations.push_back(env.observe());
  auto v = b.reflector->revise(env.observe(), {}, Subplan("click 'Menu' then click 'Catalog'"),
                               failure);
  CHECK(v.revised_plan == "click 'Search' then click 'Open top result'");
  CHECK(v.reason.rfind("Type A", 0) == 0);

  // unmatched subplans fall through to the oracle reflector
  auto fallback = b.reflector->revise(env.observe(), {}, Subplan("click 'Totally else'"), failure);
  CHECK(!fallback.revised_plan.empty());
}

TEST_CASE("bundle completeness check") {
  auto g = fixture("chain3.json");
  Environment env(g, "t0");
  env.reset();
  PolicyBundle b = make_scripted_bundle(g, "t0", &env);
  b.require_complete();
  b.reflector.reset();
  CHECK_THROWS_AS(b.require_complete(), PolicyFailure);
}
