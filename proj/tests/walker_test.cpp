#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "mbtcover/suite_gen.hpp"
#include "mbtcover/walker.hpp"
#include "test_support.hpp"

namespace mbtcover {
namespace {

using testing::collect_walk;
using testing::NullAdapter;

std::string vertex_json(const std::string& id, const std::string& extra = "") {
  return R"({"id":")" + id + R"(","name":")" + id + "\"" + extra + "}";
}

std::string edge_json(const std::string& id, const std::string& s, const std::string& t, const std::string& extra = "") {
  return R"({"id":")" + id + R"(","name":")" + id + R"(","sourceVertexId":")" + s + R"(","targetVertexId":")" + t +
         "\"" + extra + "}";
}

std::string model_json(const std::string& id, const std::string& start, const std::vector<std::string>& vs,
                       const std::vector<std::string>& es) {
  std::string out = R"({"id":")" + id + R"(","name":")" + id + R"j(","generator":"random(edge_coverage(100))")j";
  if (!start.empty()) out += R"(,"startElementId":")" + start + "\"";
  out += R"(,"vertices":[)";
  for (std::size_t i = 0; i < vs.size(); ++i) out += (i ? "," : "") + vs[i];
  out += R"(],"edges":[)";
  for (std::size_t i = 0; i < es.size(); ++i) out += (i ? "," : "") + es[i];
  return out + "]}";
}

ModelSuite suite_of(const std::vector<std::string>& models) {
  std::string out = R"({"models":[)";
  for (std::size_t i = 0; i < models.size(); ++i) out += (i ? "," : "") + models[i];
  return parse_model_suite(out + "]}");
}

ModelSuite triangle() {
  return suite_of({model_json("m", "A", {vertex_json("A"), vertex_json("B"), vertex_json("C")},
                              {edge_json("e1", "A", "B"), edge_json("e2", "B", "C"), edge_json("e3", "C", "A")})});
}

// ---------------------------------------------------------------------------

TEST(StopCondition, Grammar) {
  EXPECT_EQ(parse_stop_condition("edge_coverage(100)"), (StopCondition{StopKind::EdgeCoverage, 100}));
  EXPECT_EQ(parse_stop_condition("time(3600)"), (StopCondition{StopKind::Time, 3600}));
  EXPECT_EQ(parse_stop_condition("random(vertex_coverage(50))"), (StopCondition{StopKind::VertexCoverage, 50}));
  EXPECT_EQ(parse_stop_condition(" length( 12 ) "), (StopCondition{StopKind::Length, 12}));
  EXPECT_MBT_ERROR(parse_stop_condition("edge_coverage(0)"), ErrorCode::ThresholdOutOfRange);
  EXPECT_MBT_ERROR(parse_stop_condition("edge_coverage(101)"), ErrorCode::ThresholdOutOfRange);
  EXPECT_MBT_ERROR(parse_stop_condition("time(-1)"), ErrorCode::ThresholdOutOfRange);
  EXPECT_MBT_ERROR(parse_stop_condition("bogus(3)"), ErrorCode::UnknownKind);
  EXPECT_MBT_ERROR(parse_stop_condition("edge_coverage"), ErrorCode::MalformedSpec);
  EXPECT_MBT_ERROR(parse_stop_condition("edge_coverage(abc)"), ErrorCode::MalformedSpec);
  EXPECT_MBT_ERROR(parse_stop_condition("(5)"), ErrorCode::MalformedSpec);
}

TEST(StopCondition, TextRoundTrip) {
  for (const char* spec : {"edge_coverage(100)", "vertex_coverage(37.5)", "requirement_coverage(1)", "time(0.25)",
                           "length(400)"}) {
    EXPECT_EQ(to_string(parse_stop_condition(spec)), spec);
  }
}

TEST(EvaluateStop, Boundaries) {
  ModelCoverageStats s{.edges_covered = 259, .edges_total = 260};
  const auto stop = parse_stop_condition("edge_coverage(100)");
  EXPECT_FALSE(evaluate_stop(stop, s, 0, 0, std::chrono::milliseconds(0), 0));
  s.edges_covered = 260;
  EXPECT_TRUE(evaluate_stop(stop, s, 0, 0, std::chrono::milliseconds(0), 0));
  EXPECT_TRUE(evaluate_stop(parse_stop_condition("time(3600)"), s, 0, 0, std::chrono::seconds(3601), 0));
  EXPECT_FALSE(evaluate_stop(parse_stop_condition("time(3600)"), s, 0, 0, std::chrono::seconds(3599), 0));
  EXPECT_TRUE(evaluate_stop(parse_stop_condition("requirement_coverage(50)"), s, 3, 5, {}, 0));
  EXPECT_FALSE(evaluate_stop(parse_stop_condition("requirement_coverage(61)"), s, 3, 5, {}, 0));
  EXPECT_TRUE(evaluate_stop(parse_stop_condition("length(10)"), s, 0, 0, {}, 10));
  EXPECT_MBT_ERROR(evaluate_stop(parse_stop_condition("requirement_coverage(50)"), s, 0, 0, {}, 0),
                   ErrorCode::UndefinedRatio);
}

// ---------------------------------------------------------------------------

TEST(PlanNextStep, UniformChoiceFrequency) {
  const ModelSuite suite = suite_of({model_json("m", "A", {vertex_json("A"), vertex_json("B"), vertex_json("C")},
                                                {edge_json("e1", "A", "B"), edge_json("e2", "A", "C")})});
  constexpr int kTrials = 10000;
  std::map<std::size_t, int> counts;
  for (int seed = 0; seed < kTrials; ++seed) {
    WalkerState state;
    state.rng.seed(static_cast<std::uint64_t>(seed));
    const PlannedStep step = plan_next_step(suite, state);
    ASSERT_TRUE(std::holds_alternative<EdgeStep>(step));
    ++counts[std::get<EdgeStep>(step).edge];
  }
  ASSERT_EQ(counts.size(), 2u);
  for (const auto& [edge, n] : counts) EXPECT_NEAR(n / static_cast<double>(kTrials), 0.5, 0.02) << "edge " << edge;

  WalkerState a;
  WalkerState b;
  a.rng.seed(99);
  b.rng.seed(99);
  EXPECT_EQ(std::get<EdgeStep>(plan_next_step(suite, a)).edge, std::get<EdgeStep>(plan_next_step(suite, b)).edge);
}

TEST(PlanNextStep, GuardBlocksOnlyEdge) {
  const ModelSuite suite = suite_of({model_json("m", "A", {vertex_json("A"), vertex_json("B")},
                                                {edge_json("e1", "A", "B", R"(,"guard":"!flag")")})});
  WalkerState state;
  state.context["flag"] = true;
  EXPECT_TRUE(std::holds_alternative<Stalled>(plan_next_step(suite, state)));
  state.context["flag"] = false;
  EXPECT_TRUE(std::holds_alternative<EdgeStep>(plan_next_step(suite, state)));
}

TEST(PlanNextStep, UndefinedGuardVariableIsFalseAndWarnsOnce) {
  const ModelSuite suite = suite_of({model_json("m", "A", {vertex_json("A"), vertex_json("B")},
                                                {edge_json("e1", "A", "B", R"(,"guard":"ready")")})});
  WalkerState state;
  EXPECT_TRUE(std::holds_alternative<Stalled>(plan_next_step(suite, state)));
  EXPECT_TRUE(std::holds_alternative<Stalled>(plan_next_step(suite, state)));
  ASSERT_EQ(state.diagnostics.size(), 1u);
  EXPECT_EQ(state.diagnostics[0].code, "undefined_guard_variable");
}

TEST(PlanNextStep, SharedStateJumpToOtherModel) {
  const ModelSuite suite = suite_of({
      model_json("login", "L", {vertex_json("L", R"(,"sharedState":"LOGIN_DONE")")}, {}),
      model_json("shop", "", {vertex_json("S0"), vertex_json("S1", R"(,"sharedState":"LOGIN_DONE")")}, {}),
      model_json("other", "", {vertex_json("O", R"(,"sharedState":"ELSEWHERE")")}, {}),
  });
  std::set<std::pair<std::size_t, std::size_t>> targets;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    WalkerState state;
    state.rng.seed(seed);
    const PlannedStep step = plan_next_step(suite, state);
    ASSERT_TRUE(std::holds_alternative<SharedJump>(step));
    const VertexRef t = std::get<SharedJump>(step).target;
    targets.insert({t.model, t.vertex});
  }
  // The only other LOGIN_DONE vertex is shop/S1.
  EXPECT_EQ(targets, (std::set<std::pair<std::size_t, std::size_t>>{{1, 1}}));
}

// ---------------------------------------------------------------------------

TEST(ExecuteWalk, TriangleCoversAllEdges) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    NullAdapter adapter;
    WalkResult r;
    collect_walk(triangle(), adapter, parse_stop_condition("edge_coverage(100)"), seed, &r);
    EXPECT_EQ(r.status, RunStatus::Completed);
    EXPECT_EQ(r.stats.edges_covered, 3u);
    EXPECT_GE(r.stats.vertices_executed, 3u);
  }
}

TEST(ExecuteWalk, SingleVertexEmitsFourEvents) {
  NullAdapter adapter;
  const auto events = collect_walk(suite_of({model_json("m", "v", {vertex_json("v")}, {})}), adapter,
                                   parse_stop_condition("vertex_coverage(100)"), 1);
  ASSERT_EQ(events.size(), 4u);
  EXPECT_EQ(events[0].kind, EventKind::RunStarted);
  EXPECT_EQ(events[1].kind, EventKind::ModelEntered);
  EXPECT_EQ(events[2].kind, EventKind::VertexExecuted);
  EXPECT_EQ(events[3].kind, EventKind::RunFinished);
  EXPECT_EQ(events[3].status, RunStatus::Completed);
  for (std::size_t i = 0; i < events.size(); ++i) EXPECT_EQ(events[i].seq, i);
}

TEST(ExecuteWalk, PathValidityAndOrdering) {
  const ModelSuite suite = generate_suite({.models = 5, .vertices = 40, .edges = 60, .seed = 11, .pages = {}});
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    NullAdapter adapter;
    const auto events = collect_walk(suite, adapter, parse_stop_condition("edge_coverage(100)"), seed);
    ASSERT_GE(events.size(), 2u);
    EXPECT_EQ(events.front().kind, EventKind::RunStarted);
    EXPECT_EQ(events.back().kind, EventKind::RunFinished);
    const WalkEvent* last_vertex = nullptr;
    const WalkEvent* pending_edge = nullptr;
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (i > 0) {
        ASSERT_GT(events[i].seq, events[i - 1].seq);
        ASSERT_GE(events[i].t_ms, events[i - 1].t_ms);
      }
      const WalkEvent& e = events[i];
      if (e.kind == EventKind::EdgeExecuted) {
        ASSERT_NE(last_vertex, nullptr);
        const TestModel& m = suite.models()[*suite.model_index(*e.model)];
        const Edge& edge = m.edges[*m.edge_index(*e.element)];
        EXPECT_EQ(edge.source_vertex_id, *last_vertex->element);
        EXPECT_EQ(*e.model, *last_vertex->model);
        pending_edge = &e;
      } else if (e.kind == EventKind::VertexExecuted) {
        if (pending_edge) {
          const TestModel& m = suite.models()[*suite.model_index(*pending_edge->model)];
          const Edge& edge = m.edges[*m.edge_index(*pending_edge->element)];
          EXPECT_EQ(edge.target_vertex_id, *e.element);
          EXPECT_EQ(*e.model, *pending_edge->model);
          pending_edge = nullptr;
        }
        last_vertex = &e;
      }
    }
  }
}

TEST(ExecuteWalk, DeterministicExceptTimestamps) {
  const ModelSuite suite = generate_suite({.models = 4, .vertices = 30, .edges = 45, .seed = 2, .pages = {}});
  NullAdapter a1;
  NullAdapter a2;
  auto e1 = collect_walk(suite, a1, parse_stop_condition("edge_coverage(100)"), 77);
  auto e2 = collect_walk(suite, a2, parse_stop_condition("edge_coverage(100)"), 77);
  for (auto& e : e1) e.t_ms = 0;
  for (auto& e : e2) e.t_ms = 0;
  EXPECT_EQ(e1, e2);
}

TEST(ExecuteWalk, ReplayEquivalenceAndMonotoneCounters) {
  const ModelSuite suite = generate_suite({.models = 6, .vertices = 50, .edges = 80, .seed = 4, .pages = {}});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    NullAdapter adapter;
    WalkResult r;
    const auto events = collect_walk(suite, adapter, parse_stop_condition("edge_coverage(100)"), seed, &r);
    CoverageTracker tracker(suite);
    ModelCoverageStats prev;
    std::size_t prev_reqs = 0;
    for (const WalkEvent& e : events) {
      tracker.apply(e);
      const ModelCoverageStats s = tracker.stats();
      EXPECT_GE(s.models_reached, prev.models_reached);
      EXPECT_GE(s.vertices_covered, prev.vertices_covered);
      EXPECT_GE(s.edges_covered, prev.edges_covered);
      EXPECT_GE(s.vertices_executed, prev.vertices_executed);
      EXPECT_GE(s.vertices_executed, s.vertices_covered);
      EXPECT_GE(tracker.covered_requirements().size(), prev_reqs);
      prev = s;
      prev_reqs = tracker.covered_requirements().size();
    }
    EXPECT_EQ(tracker.stats(), r.stats);
    EXPECT_EQ(r.stats.edges_covered, r.stats.edges_total);
  }
}

TEST(CoverageTracker, OutOfOrderAndEmptyLog) {
  CoverageTracker tracker(triangle());
  tracker.apply({.seq = 7, .kind = EventKind::RunStarted});
  EXPECT_MBT_ERROR(tracker.apply({.seq = 5, .kind = EventKind::ModelEntered, .model = "m"}),
                   ErrorCode::OutOfOrderEvent);
  EXPECT_MBT_ERROR(tracker.apply({.seq = 7, .kind = EventKind::ModelEntered, .model = "m"}),
                   ErrorCode::OutOfOrderEvent);

  CoverageTracker empty(triangle());
  empty.apply({.seq = 0, .kind = EventKind::RunStarted});
  empty.apply({.seq = 1, .kind = EventKind::RunFinished, .status = RunStatus::Stalled});
  const ModelCoverageStats s = empty.stats();
  EXPECT_EQ(s.models_reached, 0u);
  EXPECT_EQ(s.vertices_covered, 0u);
  EXPECT_EQ(s.vertices_executed, 0u);
  EXPECT_EQ(s.edges_covered, 0u);
  EXPECT_EQ(s.edges_total, 3u);
}

// Independent ring-plus-chords model: strongly connected, unguarded.
ModelSuite random_strong_model(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(3, 15);
  const int n = size(rng);
  std::vector<std::string> vs;
  std::vector<std::string> es;
  std::set<std::pair<int, int>> used;
  for (int i = 0; i < n; ++i) {
    vs.push_back(vertex_json("v" + std::to_string(i)));
    used.insert({i, (i + 1) % n});
  }
  std::uniform_int_distribution<int> pick(0, n - 1);
  const int chords = std::min(50 - n, n * (n - 1) - n);
  for (int k = 0; k < chords * 2 && static_cast<int>(used.size()) < 50; ++k) {
    const int a = pick(rng);
    const int b = pick(rng);
    if (a != b) used.insert({a, b});
  }
  int id = 0;
  for (const auto& [a, b] : used) {
    es.push_back(edge_json("e" + std::to_string(id++), "v" + std::to_string(a), "v" + std::to_string(b)));
  }
  return suite_of({model_json("m", "v0", vs, es)});
}

TEST(ExecuteWalk, StronglyConnectedModelsNeverStall) {
  std::mt19937_64 rng(2024);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const ModelSuite suite = random_strong_model(rng);
    NullAdapter adapter;
    WalkResult r;
    collect_walk(suite, adapter, parse_stop_condition("edge_coverage(100)"), seed, &r);
    ASSERT_EQ(r.status, RunStatus::Completed) << "seed " << seed;
    EXPECT_EQ(r.stats.edges_covered, r.stats.edges_total);
  }
}

TEST(ExecuteWalk, StallsAtDeadEnd) {
  NullAdapter adapter;
  WalkResult r;
  const auto events = collect_walk(
      suite_of({model_json("m", "A", {vertex_json("A"), vertex_json("B"), vertex_json("C")},
                           {edge_json("e1", "A", "B"), edge_json("e2", "C", "A")})}),
      adapter, parse_stop_condition("edge_coverage(100)"), 3, &r);
  EXPECT_EQ(r.status, RunStatus::Stalled);
  EXPECT_EQ(events.back().status, RunStatus::Stalled);
  EXPECT_EQ(events[events.size() - 2].element, "B");
}

TEST(ExecuteWalk, SafetyCapStops) {
  StopCondition stop = parse_stop_condition("edge_coverage(100)");
  stop.safety_step_cap = 50;
  NullAdapter adapter;
  WalkResult r;
  const auto events = collect_walk(
      suite_of({model_json("m", "A", {vertex_json("A"), vertex_json("B"), vertex_json("C")},
                           {edge_json("e1", "A", "B"), edge_json("e2", "B", "A"), edge_json("e3", "C", "A")})}),
      adapter, stop, 3, &r);
  EXPECT_EQ(r.status, RunStatus::Stopped);
  EXPECT_GE(r.steps, 50u);
  EXPECT_LE(r.steps, 51u);
  EXPECT_EQ(events.back().status, RunStatus::Stopped);
}

TEST(ExecuteWalk, LengthStopCountsElements) {
  NullAdapter adapter;
  WalkResult r;
  collect_walk(triangle(), adapter, parse_stop_condition("length(9)"), 1, &r);
  EXPECT_EQ(r.status, RunStatus::Completed);
  // Stops are checked on vertices, so an odd count is reached exactly.
  EXPECT_EQ(r.steps, 9u);
}

TEST(ExecuteWalk, TimeStopUsesWallClock) {
  NullAdapter adapter;
  std::vector<WalkEvent> events;
  WalkOptions options;
  options.step_delay = std::chrono::milliseconds(5);
  const auto t0 = std::chrono::steady_clock::now();
  const WalkResult r = execute_walk(triangle(), adapter, parse_stop_condition("time(0.1)"), 1,
                                    [&](const WalkEvent& e) { events.push_back(e); }, options);
  const auto took = std::chrono::steady_clock::now() - t0;
  EXPECT_EQ(r.status, RunStatus::Completed);
  EXPECT_GE(took, std::chrono::milliseconds(100));
  EXPECT_LT(took, std::chrono::seconds(5));
}

TEST(ExecuteWalk, AssertionFailureRecordedAndRunContinues) {
  NullAdapter adapter;
  adapter.fail_vertices = {"B"};
  WalkResult r;
  const auto events = collect_walk(triangle(), adapter, parse_stop_condition("edge_coverage(100)"), 5, &r);
  EXPECT_EQ(r.status, RunStatus::Completed);
  int failures = 0;
  for (const WalkEvent& e : events) {
    if (e.failure) {
      ++failures;
      EXPECT_EQ(e.element, "B");
      EXPECT_EQ(e.kind, EventKind::VertexExecuted);
    }
  }
  EXPECT_GE(failures, 1);
}

class ThrowingAdapter : public NullAdapter {
 public:
  std::optional<std::string> execute_edge(const TestModel&, const Edge&) override {
    throw std::runtime_error("browser crashed");
  }
};

TEST(ExecuteWalk, AdapterExceptionEndsRun) {
  ThrowingAdapter adapter;
  std::vector<WalkEvent> events;
  EXPECT_MBT_ERROR(execute_walk(triangle(), adapter, parse_stop_condition("edge_coverage(100)"), 1,
                                [&](const WalkEvent& e) { events.push_back(e); }),
                   ErrorCode::AdapterFailure);
  ASSERT_FALSE(events.empty());
  EXPECT_EQ(events.back().kind, EventKind::RunFinished);
  EXPECT_EQ(events.back().status, RunStatus::Stopped);
}

TEST(ExecuteWalk, InvalidSuiteAndUndefinedRatio) {
  NullAdapter adapter;
  EXPECT_MBT_ERROR(collect_walk(suite_of({model_json("m", "", {vertex_json("A")}, {})}), adapter,
                                parse_stop_condition("edge_coverage(100)"), 1),
                   ErrorCode::InvalidSuite);
  EXPECT_MBT_ERROR(collect_walk(ModelSuite{}, adapter, parse_stop_condition("edge_coverage(100)"), 1),
                   ErrorCode::InvalidSuite);
  std::vector<WalkEvent> events;
  EXPECT_MBT_ERROR(execute_walk(triangle(), adapter, parse_stop_condition("requirement_coverage(50)"), 1,
                                [&](const WalkEvent& e) { events.push_back(e); }),
                   ErrorCode::UndefinedRatio);
  EXPECT_TRUE(events.empty());
}

class NavAdapter : public NullAdapter {
 public:
  std::optional<std::string> execute_edge(const TestModel&, const Edge& edge) override {
    if (edge.name.rfind("goto:", 0) == 0) return edge.name.substr(5);
    return std::nullopt;
  }
};

TEST(ExecuteWalk, NavigationAndModelEntryEvents) {
  const ModelSuite suite = suite_of({
      model_json("a", "A0", {vertex_json("A0"), vertex_json("A1", R"(,"sharedState":"X")")},
                 {R"({"id":"g","name":"goto:/next","sourceVertexId":"A0","targetVertexId":"A1"})"}),
      model_json("b", "", {vertex_json("B0", R"(,"sharedState":"X")"), vertex_json("B1")},
                 {edge_json("b1", "B0", "B1", R"(,"requirements":["R9"])")}),
  });
  NavAdapter adapter;
  WalkResult r;
  const auto events = collect_walk(suite, adapter, parse_stop_condition("edge_coverage(100)"), 1, &r);
  std::vector<std::string> kinds;
  for (const WalkEvent& e : events) kinds.emplace_back(to_string(e.kind));
  const std::vector<std::string> expected{"run_started",     "model_entered",   "vertex_executed", "edge_executed",
                                          "navigation",      "vertex_executed", "model_entered",   "vertex_executed",
                                          "edge_executed",   "vertex_executed", "run_finished"};
  EXPECT_EQ(kinds, expected);
  EXPECT_EQ(events[4].page, "/next");
  EXPECT_EQ(events[8].reqs, (std::set<std::string>{"R9"}));
  EXPECT_EQ(r.stats.models_reached, 2u);
}

TEST(WalkEvent, JsonLinesKeys) {
  WalkEvent e{.seq = 3, .t_ms = 12, .kind = EventKind::EdgeExecuted, .model = "m", .element = "e1", .reqs = {"R1"}};
  const nlohmann::json j = nlohmann::json::parse(to_jsonl(e));
  EXPECT_EQ(j.at("seq"), 3);
  EXPECT_EQ(j.at("t_ms"), 12);
  EXPECT_EQ(j.at("kind"), "edge_executed");
  EXPECT_EQ(j.at("model"), "m");
  EXPECT_EQ(j.at("element"), "e1");
  EXPECT_EQ(j.at("reqs"), nlohmann::json::array({"R1"}));
  EXPECT_FALSE(j.contains("page"));
  EXPECT_EQ(walk_event_from_json(j), e);

  WalkEvent fin{.seq = 9, .t_ms = 40, .kind = EventKind::RunFinished, .status = RunStatus::Stalled};
  EXPECT_EQ(walk_event_from_json(to_json(fin)), fin);
  EXPECT_EQ(to_json(fin).at("status"), "stalled");
}

}  // namespace
}  // namespace mbtcover
