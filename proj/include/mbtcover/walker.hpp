#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mbtcover/model.hpp"

namespace mbtcover {

// ---------------------------------------------------------------------------
// Stop conditions
// ---------------------------------------------------------------------------

enum class StopKind { EdgeCoverage, VertexCoverage, RequirementCoverage, Time, Length };

struct StopCondition {
  StopKind kind = StopKind::EdgeCoverage;
  // Percent for the coverage kinds, seconds for Time, executed elements for Length.
  double threshold = 100.0;
  std::uint64_t safety_step_cap = 100000;

  bool operator==(const StopCondition&) const = default;
};

/// Grammar: `kind '(' number ')'`, optionally wrapped as `random(...)` the way
/// model files spell their generator.
StopCondition parse_stop_condition(std::string_view spec);
std::string to_string(const StopCondition& stop);
std::string_view to_string(StopKind kind);

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

enum class EventKind { RunStarted, ModelEntered, VertexExecuted, EdgeExecuted, Navigation, RunFinished };
enum class RunStatus { Completed, Stalled, Stopped };

std::string_view to_string(EventKind kind);
std::string_view to_string(RunStatus status);
EventKind event_kind_from_string(std::string_view s);
RunStatus run_status_from_string(std::string_view s);

struct WalkEvent {
  std::uint64_t seq = 0;
  std::int64_t t_ms = 0;
  EventKind kind = EventKind::RunStarted;
  std::optional<std::string> model;
  std::optional<std::string> element;
  std::optional<std::string> page;
  std::set<std::string> reqs;
  std::optional<RunStatus> status;
  // Assertion failure detail; only on vertex_executed.
  std::optional<std::string> failure;

  bool operator==(const WalkEvent&) const = default;
};

nlohmann::json to_json(const WalkEvent& event);
WalkEvent walk_event_from_json(const nlohmann::json& j);
std::string to_jsonl(const WalkEvent& event);

using EventSink = std::function<void(const WalkEvent&)>;

// ---------------------------------------------------------------------------
// Model coverage counters
// ---------------------------------------------------------------------------

struct ModelCoverageStats {
  std::size_t models_reached = 0;
  std::size_t models_total = 0;
  std::size_t vertices_covered = 0;
  std::size_t vertices_total = 0;
  std::uint64_t vertices_executed = 0;
  std::size_t edges_covered = 0;
  std::size_t edges_total = 0;

  bool operator==(const ModelCoverageStats&) const = default;
};

nlohmann::json to_json(const ModelCoverageStats& stats);
ModelCoverageStats model_stats_from_json(const nlohmann::json& j);

/// Rebuilds ModelCoverageStats from an event stream. Feeding a run's full log
/// reproduces the stats execute_walk returned.
class CoverageTracker {
 public:
  CoverageTracker() = default;
  explicit CoverageTracker(const ModelSuite& suite);

  // Throws Error(OutOfOrderEvent) unless event.seq exceeds every seq applied so far.
  void apply(const WalkEvent& event);

  ModelCoverageStats stats() const;
  const std::set<std::string>& covered_requirements() const { return covered_reqs_; }
  std::optional<std::uint64_t> last_seq() const { return last_seq_; }

 private:
  std::size_t models_total_ = 0;
  std::size_t vertices_total_ = 0;
  std::size_t edges_total_ = 0;
  std::set<std::string> models_;
  std::set<std::pair<std::string, std::string>> vertices_;
  std::set<std::pair<std::string, std::string>> edges_;
  std::uint64_t vertices_executed_ = 0;
  std::set<std::string> covered_reqs_;
  std::optional<std::uint64_t> last_seq_;
};

bool evaluate_stop(const StopCondition& stop, const ModelCoverageStats& stats, std::size_t covered_reqs,
                   std::size_t total_reqs, std::chrono::milliseconds elapsed, std::uint64_t steps);

// ---------------------------------------------------------------------------
// Adapter contract
// ---------------------------------------------------------------------------

struct AssertionOutcome {
  bool passed = true;
  std::string detail;
};

/// Executes model elements against the system under test. Implementations
/// must be deterministic for a given call sequence when runs are seeded.
class Adapter {
 public:
  virtual ~Adapter() = default;
  virtual AssertionOutcome execute_vertex(const TestModel& model, const Vertex& vertex) = 0;
  // Returns the new page URL when the transition navigated.
  virtual std::optional<std::string> execute_edge(const TestModel& model, const Edge& edge) = 0;
};

// ---------------------------------------------------------------------------
// Walk
// ---------------------------------------------------------------------------

struct WalkerState {
  std::size_t model = 0;
  std::size_t vertex = 0;
  std::map<std::string, bool> context;
  std::map<std::pair<std::string, std::string>, std::uint64_t> vertex_visits;
  std::map<std::pair<std::string, std::string>, std::uint64_t> edge_visits;
  std::set<std::string> models_entered;
  std::set<std::string> covered_reqs;
  std::mt19937_64 rng;
  std::chrono::milliseconds elapsed{0};
  std::uint64_t steps = 0;
  // Guard variables read before any action assigned them; reported once each.
  std::set<std::string> undefined_guard_vars;
  std::vector<Diagnostic> diagnostics;
};

struct EdgeStep {
  std::size_t edge = 0;
};
struct SharedJump {
  VertexRef target;
};
struct Stalled {};
using PlannedStep = std::variant<EdgeStep, SharedJump, Stalled>;

PlannedStep plan_next_step(const ModelSuite& suite, WalkerState& state);

ModelCoverageStats stats_of(const ModelSuite& suite, const WalkerState& state);

struct WalkOptions {
  // Milliseconds since run start; defaults to a steady clock started with the walk.
  std::function<std::int64_t()> clock;
  std::chrono::milliseconds step_delay{0};
  // Called after every executed element (vertex or edge), after its events were emitted.
  std::function<void()> after_element;
  const std::atomic<bool>* cancel = nullptr;
};

struct WalkResult {
  ModelCoverageStats stats;
  RunStatus status = RunStatus::Completed;
  std::uint64_t steps = 0;
  std::vector<Diagnostic> diagnostics;
};

/// Random walk from the entry model's start vertex. The stop condition is
/// evaluated whenever the walker rests on a vertex, so every run ends on a
/// vertex_executed event followed by run_finished.
WalkResult execute_walk(const ModelSuite& suite, Adapter& adapter, const StopCondition& stop,
                        std::uint64_t seed, const EventSink& sink, const WalkOptions& options = {});

}  // namespace mbtcover
