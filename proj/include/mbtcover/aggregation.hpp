#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mbtcover/coverage.hpp"
#include "mbtcover/model.hpp"
#include "mbtcover/walker.hpp"

namespace mbtcover {

enum class CoverageSource { Frontend, Backend };
std::string_view to_string(CoverageSource source);
CoverageSource coverage_source_from_string(std::string_view s);

struct CoverageSnapshot {
  CoverageSource source = CoverageSource::Frontend;
  std::string collector_id;
  std::int64_t t_ms = 0;
  std::optional<std::string> page_url;
  FileCoverageList files;
};

/// A collector payload exactly as received. Decoding is deterministic, so the
/// raw form is what gets logged and replayed.
struct RawSnapshot {
  CoverageSource source = CoverageSource::Frontend;
  std::string collector_id;
  std::int64_t t_ms = 0;
  std::string content_type;
  std::string body;
};

/// Frontend: `{"pageUrl", "scripts":[{"url","source","coverage":{"functions":[...]}}]}`.
/// Backend: JaCoCo XML, or LCOV when the content type is text/plain.
/// Throws Error(MalformedDocument / SchemaViolation) on bad payloads.
CoverageSnapshot decode_snapshot(const RawSnapshot& raw);

/// decode_snapshot that reuses the previous result when a collector sends the
/// same payload again. Not thread-safe.
class SnapshotDecoder {
 public:
  CoverageSnapshot decode(const RawSnapshot& raw);

 private:
  struct Last {
    std::string content_type;
    std::string body;
    CoverageSnapshot decoded;
  };
  std::map<std::pair<CoverageSource, std::string>, Last> last_;
};

struct SnapshotRecord {
  RawSnapshot raw;
  CoverageSnapshot decoded;
};

enum class Metric {
  FeCumulativePct,
  FePagePct,
  BeCumulativePct,
  ReqPct,
  ModelsReached,
  VerticesCovered,
  VerticesExecuted,
  EdgesCovered,
};
std::string_view to_string(Metric metric);
Metric metric_from_string(std::string_view s);
inline constexpr Metric kAllMetrics[] = {Metric::FeCumulativePct, Metric::FePagePct,       Metric::BeCumulativePct,
                                         Metric::ReqPct,          Metric::ModelsReached,   Metric::VerticesCovered,
                                         Metric::VerticesExecuted, Metric::EdgesCovered};

struct MetricPoint {
  std::int64_t t_ms = 0;
  Metric metric = Metric::FeCumulativePct;
  double value = 0.0;
  std::optional<std::string> page_url;  // fe_page_pct only
  bool no_data = false;

  bool operator==(const MetricPoint&) const = default;
};

nlohmann::json to_json(const MetricPoint& point);
MetricPoint metric_point_from_json(const nlohmann::json& j);

using FileStore = std::map<std::string, FileLineCoverage>;

struct RequirementCoverage {
  std::size_t covered = 0;
  std::size_t total = 0;
  double percent = 0.0;
  bool no_data = true;
};

/// Live metric state. Not thread-safe; LiveAggregator provides the
/// single-writer wrapper.
class Aggregator {
 public:
  static constexpr double kDefaultRefreshIntervalS = 5.0;
  static constexpr double kMinRefreshIntervalS = 0.5;
  static constexpr double kMaxRefreshIntervalS = 3600.0;

  explicit Aggregator(const ModelSuite& suite, double refresh_interval_s = kDefaultRefreshIntervalS);

  // Throws Error(OutOfOrderEvent) when seq does not increase.
  void ingest_walk_event(const WalkEvent& event);
  void ingest_snapshot(const CoverageSnapshot& snapshot);
  std::vector<MetricPoint> sample_metrics(std::int64_t now_ms);
  // Throws Error(OutOfRange) outside [0.5, 3600] seconds.
  void set_refresh_interval(double seconds);
  static void check_refresh_interval(double seconds);

  double refresh_interval_s() const { return refresh_interval_s_; }
  CoverageRatio fe_cumulative() const;
  CoverageRatio fe_page() const;
  CoverageRatio be_cumulative() const;
  RequirementCoverage requirements() const;
  ModelCoverageStats model_stats() const { return tracker_.stats(); }

  const FileStore& fe_cumulative_files() const { return fe_cumulative_; }
  const FileStore& fe_page_files() const { return fe_page_session_; }
  const FileStore& be_cumulative_files() const { return be_cumulative_; }
  const std::set<std::string>& covered_requirements() const { return covered_requirements_; }
  const RequirementRegistry& registry() const { return registry_; }
  const std::optional<std::string>& current_page() const { return current_page_; }
  std::optional<std::uint64_t> be_total_baseline() const { return be_total_baseline_; }
  const std::vector<MetricPoint>& series() const { return series_; }
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }
  bool started() const { return started_; }
  bool frozen() const { return finished_.has_value(); }
  std::optional<RunStatus> run_status() const { return finished_; }
  std::optional<std::uint64_t> last_seq() const { return tracker_.last_seq(); }
  std::int64_t last_t_ms() const { return last_t_ms_; }

 private:
  RequirementRegistry registry_;
  CoverageTracker tracker_;
  FileStore fe_cumulative_;
  FileStore fe_page_session_;
  std::optional<std::string> current_page_;
  FileStore be_cumulative_;
  std::optional<std::uint64_t> be_total_baseline_;
  std::set<std::string> covered_requirements_;
  std::vector<MetricPoint> series_;
  std::vector<std::string> diagnostics_;
  double refresh_interval_s_;
  bool started_ = false;
  std::optional<RunStatus> finished_;
  std::int64_t last_t_ms_ = 0;
};

/// Why a sample was taken. Tick samples follow the refresh interval; the
/// others are taken on demand.
enum class SampleReason { Tick, Navigation, Step, Final, Manual };
std::string_view to_string(SampleReason reason);

struct SampleRecord {
  std::int64_t t_ms = 0;
  SampleReason reason = SampleReason::Tick;
  std::vector<MetricPoint> points;
};

struct IntervalChange {
  double seconds = 0;
};

using AppliedItem = std::variant<WalkEvent, SnapshotRecord, SampleRecord, IntervalChange>;

/// Single-writer front end for Aggregator. Producers post items from any
/// thread; one worker applies them in arrival order and then notifies
/// listeners on the same thread, so listeners observe a total order. Readers
/// take a shared lock and never see a partially applied update.
class LiveAggregator {
 public:
  using Listener = std::function<void(const AppliedItem&)>;

  explicit LiveAggregator(const ModelSuite& suite, double refresh_interval_s = Aggregator::kDefaultRefreshIntervalS);
  ~LiveAggregator();
  LiveAggregator(const LiveAggregator&) = delete;
  LiveAggregator& operator=(const LiveAggregator&) = delete;

  // Must be registered before the first post.
  void add_listener(Listener listener);

  void post_event(WalkEvent event);
  void post_snapshot(SnapshotRecord snapshot);
  void post_sample(std::int64_t t_ms, SampleReason reason);
  // Validates synchronously (throws Error(OutOfRange)), then applies in order.
  void post_refresh_interval(double seconds);

  // Blocks until every item posted before the call has been applied.
  void flush();
  void stop();

  template <typename F>
  auto read(F&& f) const {
    std::shared_lock lock(state_mutex_);
    return f(static_cast<const Aggregator&>(aggregator_));
  }

  double refresh_interval_s() const {
    return read([](const Aggregator& a) { return a.refresh_interval_s(); });
  }
  // Errors raised by the writer (e.g. out-of-order events), in arrival order.
  std::vector<std::string> errors() const;

 private:
  struct SampleRequest {
    std::int64_t t_ms;
    SampleReason reason;
  };
  struct Barrier {
    std::uint64_t ticket;
  };
  using Item = std::variant<WalkEvent, SnapshotRecord, SampleRequest, IntervalChange, Barrier>;

  void post(Item item);
  void run();
  void apply(Item& item);

  Aggregator aggregator_;
  mutable std::shared_mutex state_mutex_;
  std::vector<Listener> listeners_;

  mutable std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::condition_variable done_cv_;
  std::deque<Item> queue_;
  std::uint64_t next_ticket_ = 0;
  std::uint64_t done_ticket_ = 0;
  bool stopping_ = false;
  std::vector<std::string> errors_;
  std::thread worker_;
};

}  // namespace mbtcover
