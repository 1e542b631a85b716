#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mbtcover/aggregation.hpp"
#include "mbtcover/collector.hpp"
#include "mbtcover/model.hpp"
#include "mbtcover/report.hpp"
#include "mbtcover/run_log.hpp"
#include "mbtcover/walker.hpp"

namespace mbtcover {

struct SessionConfig {
  RunInfo info;
  std::filesystem::path out_dir;
  std::optional<std::string> fe_collector_url;
  std::optional<std::string> be_collector_url;
  // Collector cadence in timer mode; defaults to the refresh interval.
  std::optional<double> poll_interval_s;
  std::chrono::milliseconds step_delay{0};
};

struct ExportResult {
  ExportPaths paths;
  RunReport report;
};

/// One message on the live stream. `type` is metric, walk, page or status.
struct StreamMessage {
  std::string type;
  nlohmann::json data;
};

/// A run in progress: walker thread, collectors, sampler, run log and the
/// live aggregator. In lockstep mode collectors are polled after every
/// executed element and a sample follows each poll; otherwise collectors and
/// the sampler run on their own timers.
class RunSession {
 public:
  using StreamListener = std::function<void(const StreamMessage&)>;

  RunSession(ModelSuite suite, Adapter& adapter, SessionConfig config);
  ~RunSession();
  RunSession(const RunSession&) = delete;
  RunSession& operator=(const RunSession&) = delete;

  // Returns a handle for unsubscribe. Listeners run on the aggregator thread
  // and must not block.
  std::uint64_t subscribe(StreamListener listener);
  void unsubscribe(std::uint64_t handle);

  void start();
  // Blocks until the walk ended and the final report was written.
  void wait();
  void cancel();

  bool started() const;
  bool finished() const { return finished_.load(); }
  std::optional<RunStatus> status() const;
  std::optional<std::string> error() const;
  int exit_code() const;

  // Throws Error(NotStarted) before run_started was applied.
  ExportResult export_report();
  RunReport current_report();
  void set_refresh_interval(double seconds);

  const ModelSuite& suite() const { return suite_; }
  const SessionConfig& config() const { return config_; }
  LiveAggregator& live() { return live_; }
  std::int64_t now_ms() const;

  nlohmann::json status_json() const;
  nlohmann::json frontend_json() const;
  nlohmann::json backend_json() const;
  nlohmann::json model_json() const;
  nlohmann::json requirements_json() const;
  // Points of the live series with t_ms >= from.
  nlohmann::json metrics_json(std::int64_t from_ms) const;
  std::vector<CollectorStats> collector_stats() const;

 private:
  void on_applied(const AppliedItem& item);
  void broadcast(const StreamMessage& message);
  void poll_collectors_now();
  void walk_thread();
  void tick_thread();

  ModelSuite suite_;
  Adapter& adapter_;
  SessionConfig config_;
  std::chrono::steady_clock::time_point t0_;
  RunLogWriter writer_;
  LiveAggregator live_;
  std::vector<std::unique_ptr<HttpPollCollector>> collectors_;

  mutable std::mutex listeners_mutex_;
  std::vector<std::pair<std::uint64_t, StreamListener>> listeners_;
  std::uint64_t next_listener_ = 1;

  std::atomic<bool> cancel_{false};
  std::atomic<bool> finished_{false};
  std::atomic<bool> started_thread_{false};
  std::thread walker_;
  std::thread ticker_;
  std::mutex tick_mutex_;
  std::condition_variable tick_cv_;
  bool tick_stop_ = false;

  mutable std::mutex result_mutex_;
  std::optional<WalkResult> result_;
  std::optional<std::string> error_;
  std::mutex export_mutex_;
};

}  // namespace mbtcover
