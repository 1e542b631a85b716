#include "mbtcover/walker.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include "mbtcover/error.hpp"

namespace mbtcover {

namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_percent_kind(StopKind kind) {
  return kind == StopKind::EdgeCoverage || kind == StopKind::VertexCoverage ||
         kind == StopKind::RequirementCoverage;
}

}  // namespace

std::string_view to_string(StopKind kind) {
  switch (kind) {
    case StopKind::EdgeCoverage: return "edge_coverage";
    case StopKind::VertexCoverage: return "vertex_coverage";
    case StopKind::RequirementCoverage: return "requirement_coverage";
    case StopKind::Time: return "time";
    case StopKind::Length: return "length";
  }
  return "?";
}

StopCondition parse_stop_condition(std::string_view spec) {
  std::string_view s = trim(spec);
  constexpr std::string_view kRandom = "random(";
  if (s.starts_with(kRandom) && s.ends_with(")")) {
    s = trim(s.substr(kRandom.size(), s.size() - kRandom.size() - 1));
  }
  const auto open = s.find('(');
  if (open == std::string_view::npos || !s.ends_with(")")) {
    throw Error(ErrorCode::MalformedSpec, "expected kind(number), got '" + std::string(spec) + "'");
  }
  const std::string_view name = trim(s.substr(0, open));
  StopCondition stop;
  if (name == "edge_coverage") {
    stop.kind = StopKind::EdgeCoverage;
  } else if (name == "vertex_coverage") {
    stop.kind = StopKind::VertexCoverage;
  } else if (name == "requirement_coverage") {
    stop.kind = StopKind::RequirementCoverage;
  } else if (name == "time") {
    stop.kind = StopKind::Time;
  } else if (name == "length") {
    stop.kind = StopKind::Length;
  } else {
    if (name.empty()) throw Error(ErrorCode::MalformedSpec, "missing stop kind in '" + std::string(spec) + "'");
    throw Error(ErrorCode::UnknownKind, "unknown stop kind '" + std::string(name) + "'");
  }
  const std::string number(trim(s.substr(open + 1, s.size() - open - 2)));
  char* end = nullptr;
  const double value = number.empty() ? NAN : std::strtod(number.c_str(), &end);
  if (number.empty() || end != number.c_str() + number.size() || !std::isfinite(value)) {
    throw Error(ErrorCode::MalformedSpec, "threshold '" + number + "' is not a number");
  }
  if (is_percent_kind(stop.kind) ? (value <= 0.0 || value > 100.0) : value <= 0.0) {
    throw Error(ErrorCode::ThresholdOutOfRange,
                std::string(to_string(stop.kind)) + " threshold " + number + " out of range");
  }
  stop.threshold = value;
  return stop;
}

std::string to_string(const StopCondition& stop) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", stop.threshold);
  return std::string(to_string(stop.kind)) + "(" + buf + ")";
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::RunStarted: return "run_started";
    case EventKind::ModelEntered: return "model_entered";
    case EventKind::VertexExecuted: return "vertex_executed";
    case EventKind::EdgeExecuted: return "edge_executed";
    case EventKind::Navigation: return "navigation";
    case EventKind::RunFinished: return "run_finished";
  }
  return "?";
}

std::string_view to_string(RunStatus status) {
  switch (status) {
    case RunStatus::Completed: return "completed";
    case RunStatus::Stalled: return "stalled";
    case RunStatus::Stopped: return "stopped";
  }
  return "?";
}

EventKind event_kind_from_string(std::string_view s) {
  for (EventKind k : {EventKind::RunStarted, EventKind::ModelEntered, EventKind::VertexExecuted,
                      EventKind::EdgeExecuted, EventKind::Navigation, EventKind::RunFinished}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::SchemaViolation, "unknown event kind '" + std::string(s) + "'");
}

RunStatus run_status_from_string(std::string_view s) {
  for (RunStatus st : {RunStatus::Completed, RunStatus::Stalled, RunStatus::Stopped}) {
    if (to_string(st) == s) return st;
  }
  throw Error(ErrorCode::SchemaViolation, "unknown run status '" + std::string(s) + "'");
}

json to_json(const WalkEvent& event) {
  json j;
  j["seq"] = event.seq;
  j["t_ms"] = event.t_ms;
  j["kind"] = to_string(event.kind);
  if (event.model) j["model"] = *event.model;
  if (event.element) j["element"] = *event.element;
  if (event.page) j["page"] = *event.page;
  if (event.kind == EventKind::VertexExecuted || event.kind == EventKind::EdgeExecuted) {
    j["reqs"] = event.reqs;
  }
  if (event.status) j["status"] = to_string(*event.status);
  if (event.failure) j["fail"] = *event.failure;
  return j;
}

WalkEvent walk_event_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaViolation, "event: expected object");
  WalkEvent e;
  try {
    e.seq = j.at("seq").get<std::uint64_t>();
    e.t_ms = j.at("t_ms").get<std::int64_t>();
    e.kind = event_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("model")) e.model = j["model"].get<std::string>();
    if (j.contains("element")) e.element = j["element"].get<std::string>();
    if (j.contains("page")) e.page = j["page"].get<std::string>();
    if (j.contains("reqs")) e.reqs = j["reqs"].get<std::set<std::string>>();
    if (j.contains("status")) e.status = run_status_from_string(j["status"].get<std::string>());
    if (j.contains("fail")) e.failure = j["fail"].get<std::string>();
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::SchemaViolation, std::string("event: ") + ex.what());
  }
  return e;
}

std::string to_jsonl(const WalkEvent& event) { return to_json(event).dump() + "\n"; }

json to_json(const ModelCoverageStats& s) {
  return json{{"models_reached", s.models_reached},       {"models_total", s.models_total},
              {"vertices_covered", s.vertices_covered},   {"vertices_total", s.vertices_total},
              {"vertices_executed", s.vertices_executed}, {"edges_covered", s.edges_covered},
              {"edges_total", s.edges_total}};
}

ModelCoverageStats model_stats_from_json(const json& j) {
  ModelCoverageStats s;
  s.models_reached = j.at("models_reached").get<std::size_t>();
  s.models_total = j.at("models_total").get<std::size_t>();
  s.vertices_covered = j.at("vertices_covered").get<std::size_t>();
  s.vertices_total = j.at("vertices_total").get<std::size_t>();
  s.vertices_executed = j.at("vertices_executed").get<std::uint64_t>();
  s.edges_covered = j.at("edges_covered").get<std::size_t>();
  s.edges_total = j.at("edges_total").get<std::size_t>();
  return s;
}

CoverageTracker::CoverageTracker(const ModelSuite& suite) {
  models_total_ = suite.models().size();
  for (const TestModel& m : suite.models()) {
    vertices_total_ += m.vertices.size();
    edges_total_ += m.edges.size();
  }
}

void CoverageTracker::apply(const WalkEvent& event) {
  if (last_seq_ && event.seq <= *last_seq_) {
    throw Error(ErrorCode::OutOfOrderEvent,
                "event seq " + std::to_string(event.seq) + " after " + std::to_string(*last_seq_));
  }
  last_seq_ = event.seq;
  switch (event.kind) {
    case EventKind::ModelEntered:
      if (event.model) models_.insert(*event.model);
      break;
    case EventKind::VertexExecuted:
      vertices_.emplace(event.model.value_or(""), event.element.value_or(""));
      ++vertices_executed_;
      covered_reqs_.insert(event.reqs.begin(), event.reqs.end());
      break;
    case EventKind::EdgeExecuted:
      edges_.emplace(event.model.value_or(""), event.element.value_or(""));
      covered_reqs_.insert(event.reqs.begin(), event.reqs.end());
      break;
    default:
      break;
  }
}

ModelCoverageStats CoverageTracker::stats() const {
  return ModelCoverageStats{models_.size(),   models_total_,    vertices_.size(), vertices_total_,
                            vertices_executed_, edges_.size(), edges_total_};
}

bool evaluate_stop(const StopCondition& stop, const ModelCoverageStats& stats, std::size_t covered_reqs,
                   std::size_t total_reqs, std::chrono::milliseconds elapsed, std::uint64_t steps) {
  auto reached = [&](std::size_t covered, std::size_t total, const char* what) {
    if (total == 0) throw Error(ErrorCode::UndefinedRatio, std::string("no ") + what + " to cover");
    return 100.0 * static_cast<double>(covered) / static_cast<double>(total) >= stop.threshold;
  };
  switch (stop.kind) {
    case StopKind::EdgeCoverage: return reached(stats.edges_covered, stats.edges_total, "edges");
    case StopKind::VertexCoverage: return reached(stats.vertices_covered, stats.vertices_total, "vertices");
    case StopKind::RequirementCoverage: return reached(covered_reqs, total_reqs, "requirements");
    case StopKind::Time: return static_cast<double>(elapsed.count()) >= stop.threshold * 1000.0;
    case StopKind::Length: return static_cast<double>(steps) >= stop.threshold;
  }
  return false;
}

PlannedStep plan_next_step(const ModelSuite& suite, WalkerState& state) {
  const TestModel& model = suite.models()[state.model];
  std::vector<std::size_t> enabled;
  for (std::size_t e : model.out_edges(state.vertex)) {
    const auto& guard = model.edges[e].guard;
    if (!guard) {
      enabled.push_back(e);
      continue;
    }
    bool value = false;
    if (auto it = state.context.find(guard->variable); it != state.context.end()) {
      value = it->second;
    } else if (state.undefined_guard_vars.insert(guard->variable).second) {
      state.diagnostics.push_back({Severity::Warning, "undefined_guard_variable", model.id, model.edges[e].id,
                                   "guard variable '" + guard->variable + "' is undefined; treated as false"});
    }
    if (value != guard->negated) enabled.push_back(e);
  }
  if (!enabled.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, enabled.size() - 1);
    return EdgeStep{enabled[pick(state.rng)]};
  }
  if (const auto& shared = model.vertices[state.vertex].shared_state) {
    std::vector<VertexRef> candidates;
    for (const VertexRef& ref : suite.shared_state_vertices(*shared)) {
      if (!(ref.model == state.model && ref.vertex == state.vertex)) candidates.push_back(ref);
    }
    if (!candidates.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      return SharedJump{candidates[pick(state.rng)]};
    }
  }
  return Stalled{};
}

ModelCoverageStats stats_of(const ModelSuite& suite, const WalkerState& state) {
  ModelCoverageStats s;
  s.models_total = suite.models().size();
  for (const TestModel& m : suite.models()) {
    s.vertices_total += m.vertices.size();
    s.edges_total += m.edges.size();
  }
  s.models_reached = state.models_entered.size();
  s.vertices_covered = state.vertex_visits.size();
  for (const auto& [key, count] : state.vertex_visits) s.vertices_executed += count;
  s.edges_covered = state.edge_visits.size();
  return s;
}

namespace {

class WalkRun {
 public:
  WalkRun(const ModelSuite& suite, Adapter& adapter, const EventSink& sink, const WalkOptions& options)
      : suite_(suite), adapter_(adapter), sink_(sink), options_(options) {
    if (!options_.clock) {
      const auto start = std::chrono::steady_clock::now();
      options_.clock = [start] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
            .count();
      };
    }
    started_ms_ = options_.clock();
  }

  WalkerState state;

  // Adapter exceptions end the run with status stopped.
  template <typename F>
  auto guarded(F&& call) {
    try {
      return call();
    } catch (const std::exception& ex) {
      finish(RunStatus::Stopped);
      throw Error(ErrorCode::AdapterFailure, ex.what());
    }
  }

  void emit(WalkEvent event) {
    event.seq = next_seq_++;
    event.t_ms = options_.clock();
    state.elapsed = std::chrono::milliseconds(event.t_ms - started_ms_);
    if (sink_) sink_(event);
  }

  void enter_model(std::size_t m) {
    const TestModel& model = suite_.models()[m];
    if (state.models_entered.insert(model.id).second) {
      emit({.kind = EventKind::ModelEntered, .model = model.id});
    }
  }

  void execute_vertex() {
    const TestModel& model = suite_.models()[state.model];
    const Vertex& vertex = model.vertices[state.vertex];
    AssertionOutcome outcome = guarded([&] { return adapter_.execute_vertex(model, vertex); });
    ++state.vertex_visits[{model.id, vertex.id}];
    state.covered_reqs.insert(vertex.requirement_tags.begin(), vertex.requirement_tags.end());
    ++state.steps;
    WalkEvent event{.kind = EventKind::VertexExecuted, .model = model.id, .element = vertex.id,
                    .reqs = vertex.requirement_tags};
    if (!outcome.passed) event.failure = outcome.detail.empty() ? "assertion failed" : outcome.detail;
    emit(std::move(event));
    after_element();
  }

  void execute_edge(std::size_t e) {
    const TestModel& model = suite_.models()[state.model];
    const Edge& edge = model.edges[e];
    std::optional<std::string> page = guarded([&] { return adapter_.execute_edge(model, edge); });
    for (const Action& a : edge.actions) state.context[a.variable] = a.value;
    ++state.edge_visits[{model.id, edge.id}];
    state.covered_reqs.insert(edge.requirement_tags.begin(), edge.requirement_tags.end());
    ++state.steps;
    emit({.kind = EventKind::EdgeExecuted, .model = model.id, .element = edge.id, .reqs = edge.requirement_tags});
    if (page) emit({.kind = EventKind::Navigation, .model = model.id, .page = *page});
    state.vertex = model.target_index(e);
    after_element();
  }

  void finish(RunStatus status) { emit({.kind = EventKind::RunFinished, .status = status}); }

  bool cancelled() const { return options_.cancel && options_.cancel->load(); }

  void pause() const {
    if (options_.step_delay.count() > 0) std::this_thread::sleep_for(options_.step_delay);
  }

 private:
  void after_element() {
    if (options_.after_element) options_.after_element();
  }

  const ModelSuite& suite_;
  Adapter& adapter_;
  const EventSink& sink_;
  WalkOptions options_;
  std::uint64_t next_seq_ = 0;
  std::int64_t started_ms_ = 0;
};

}  // namespace

WalkResult execute_walk(const ModelSuite& suite, Adapter& adapter, const StopCondition& stop,
                        std::uint64_t seed, const EventSink& sink, const WalkOptions& options) {
  if (suite.models().empty()) throw Error(ErrorCode::InvalidSuite, "suite has no models");
  const TestModel& entry = suite.models().front();
  if (!entry.start_vertex_id) {
    throw Error(ErrorCode::InvalidSuite, "entry model '" + entry.id + "' has no start vertex");
  }
  const std::size_t total_reqs = build_requirement_registry(suite).size();
  // Surface UndefinedRatio before the run starts rather than mid-walk.
  evaluate_stop(stop, stats_of(suite, WalkerState{}), 0, total_reqs, std::chrono::milliseconds(0), 0);

  WalkRun run(suite, adapter, sink, options);
  WalkerState& state = run.state;
  state.rng.seed(seed);
  state.model = 0;
  state.vertex = *entry.vertex_index(*entry.start_vertex_id);

  run.emit({.kind = EventKind::RunStarted});
  run.enter_model(0);
  run.execute_vertex();

  RunStatus status = RunStatus::Completed;
  while (true) {
    if (evaluate_stop(stop, stats_of(suite, state), state.covered_reqs.size(), total_reqs, state.elapsed,
                      state.steps)) {
      status = RunStatus::Completed;
      break;
    }
    if (state.steps >= stop.safety_step_cap || run.cancelled()) {
      status = RunStatus::Stopped;
      break;
    }
    run.pause();
    PlannedStep step = plan_next_step(suite, state);
    if (std::holds_alternative<Stalled>(step)) {
      status = RunStatus::Stalled;
      break;
    }
    if (const auto* edge = std::get_if<EdgeStep>(&step)) {
      run.execute_edge(edge->edge);
    } else {
      const VertexRef target = std::get<SharedJump>(step).target;
      state.model = target.model;
      state.vertex = target.vertex;
      run.enter_model(target.model);
    }
    run.execute_vertex();
  }
  run.finish(status);
  return WalkResult{stats_of(suite, state), status, state.steps, state.diagnostics};
}

}  // namespace mbtcover
