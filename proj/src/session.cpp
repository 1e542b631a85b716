#include "mbtcover/session.hpp"

#include "mbtcover/error.hpp"

namespace mbtcover {

using nlohmann::json;

namespace {

json file_table(const FileStore& store) {
  json rows = json::array();
  std::uint64_t covered = 0;
  std::uint64_t instrumented = 0;
  for (const auto& [id, f] : store) {
    const CoverageRatio r = ratio_of(f);
    rows.push_back({{"id", id}, {"covered", r.covered}, {"instrumented", r.total}, {"percent", r.percent}});
    covered += r.covered;
    instrumented += r.total;
  }
  const double pct = instrumented ? 100.0 * static_cast<double>(covered) / static_cast<double>(instrumented) : 0.0;
  return {{"files", std::move(rows)},
          {"totals", {{"covered", covered}, {"instrumented", instrumented}, {"percent", pct}, {"no_data", instrumented == 0}}}};
}

json points_json(const std::vector<MetricPoint>& points) {
  json arr = json::array();
  for (const MetricPoint& p : points) arr.push_back(to_json(p));
  return arr;
}

bool has_run_started(const RunLogs& logs) {
  for (const WalkEvent& e : logs.events) {
    if (e.kind == EventKind::RunStarted) return true;
  }
  return false;
}

}  // namespace

RunSession::RunSession(ModelSuite suite, Adapter& adapter, SessionConfig config)
    : suite_(std::move(suite)),
      adapter_(adapter),
      config_(std::move(config)),
      t0_(std::chrono::steady_clock::now()),
      writer_(config_.out_dir),
      live_(suite_, config_.info.refresh_interval_s) {
  live_.add_listener([this](const AppliedItem& item) { on_applied(item); });
  writer_.write_suite(suite_);
  writer_.write_run_info(config_.info);
  auto clock = [this] { return now_ms(); };
  if (config_.fe_collector_url) {
    collectors_.push_back(
        std::make_unique<HttpPollCollector>(*config_.fe_collector_url, CoverageSource::Frontend, "fe", clock));
  }
  if (config_.be_collector_url) {
    collectors_.push_back(
        std::make_unique<HttpPollCollector>(*config_.be_collector_url, CoverageSource::Backend, "be", clock));
  }
}

RunSession::~RunSession() {
  cancel();
  if (walker_.joinable()) walker_.join();
  {
    std::lock_guard lock(tick_mutex_);
    tick_stop_ = true;
  }
  tick_cv_.notify_all();
  if (ticker_.joinable()) ticker_.join();
  for (auto& c : collectors_) c->stop();
  live_.stop();
}

std::int64_t RunSession::now_ms() const {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0_).count();
}

std::uint64_t RunSession::subscribe(StreamListener listener) {
  std::lock_guard lock(listeners_mutex_);
  const std::uint64_t handle = next_listener_++;
  listeners_.emplace_back(handle, std::move(listener));
  return handle;
}

void RunSession::unsubscribe(std::uint64_t handle) {
  std::lock_guard lock(listeners_mutex_);
  std::erase_if(listeners_, [&](const auto& entry) { return entry.first == handle; });
}

void RunSession::broadcast(const StreamMessage& message) {
  std::lock_guard lock(listeners_mutex_);
  for (const auto& [handle, listener] : listeners_) listener(message);
}

void RunSession::on_applied(const AppliedItem& item) {
  if (const auto* event = std::get_if<WalkEvent>(&item)) {
    writer_.append_event(*event);
    broadcast({"walk", to_json(*event)});
    if (event->kind == EventKind::RunStarted) {
      broadcast({"status", {{"state", "running"}, {"t_ms", event->t_ms}}});
    }
  } else if (const auto* snap = std::get_if<SnapshotRecord>(&item)) {
    writer_.append_snapshot(snap->raw, snap->decoded.page_url);
  } else if (const auto* sample = std::get_if<SampleRecord>(&item)) {
    json data{{"t_ms", sample->t_ms}, {"reason", to_string(sample->reason)}, {"points", points_json(sample->points)}};
    if (sample->reason == SampleReason::Navigation) {
      const auto& page = sample->points.at(1).page_url;
      data["page"] = page ? json(*page) : json(nullptr);
      broadcast({"page", std::move(data)});
      return;
    }
    broadcast({"metric", std::move(data)});
    if (sample->reason == SampleReason::Final) broadcast({"status", status_json()});
  } else if (const auto* change = std::get_if<IntervalChange>(&item)) {
    broadcast({"status", {{"state", "running"}, {"refresh_interval_s", change->seconds}}});
    tick_cv_.notify_all();
  }
}

void RunSession::poll_collectors_now() {
  for (auto& c : collectors_) {
    if (auto record = c->poll()) live_.post_snapshot(std::move(*record));
  }
}

void RunSession::start() {
  if (started_thread_.exchange(true)) return;
  if (!config_.info.lockstep) {
    const double poll_s = config_.poll_interval_s.value_or(config_.info.refresh_interval_s);
    for (auto& c : collectors_) {
      c->start(poll_s, [this](SnapshotRecord record) { live_.post_snapshot(std::move(record)); });
    }
    ticker_ = std::thread([this] { tick_thread(); });
  }
  walker_ = std::thread([this] { walk_thread(); });
}

void RunSession::tick_thread() {
  using clock = std::chrono::steady_clock;
  auto last = clock::now();
  std::unique_lock lock(tick_mutex_);
  while (!tick_stop_) {
    const auto interval = std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(live_.refresh_interval_s()));
    // Woken early by interval changes; the deadline is recomputed from the last tick.
    if (tick_cv_.wait_until(lock, last + interval, [&] { return tick_stop_; })) return;
    if (clock::now() < last + interval) continue;
    last += interval;
    if (clock::now() - last > interval) last = clock::now();
    live_.post_sample(now_ms(), SampleReason::Tick);
  }
}

void RunSession::walk_thread() {
  WalkOptions options;
  options.clock = [this] { return now_ms(); };
  options.step_delay = config_.step_delay;
  options.cancel = &cancel_;
  if (config_.info.lockstep) {
    options.after_element = [this] {
      poll_collectors_now();
      live_.post_sample(now_ms(), SampleReason::Step);
    };
  }
  auto sink = [this](const WalkEvent& event) {
    if (event.kind == EventKind::RunFinished) {
      // Last coverage state must land before the run is frozen.
      for (auto& c : collectors_) c->stop();
      poll_collectors_now();
    }
    live_.post_event(event);
  };

  std::optional<WalkResult> result;
  std::optional<std::string> error;
  try {
    result = execute_walk(suite_, adapter_, config_.info.stop, config_.info.seed, sink, options);
  } catch (const std::exception& ex) {
    error = ex.what();
  }

  for (auto& c : collectors_) c->stop();
  {
    std::lock_guard lock(tick_mutex_);
    tick_stop_ = true;
  }
  tick_cv_.notify_all();
  if (ticker_.joinable()) ticker_.join();
  live_.flush();

  {
    std::lock_guard lock(result_mutex_);
    result_ = result;
    error_ = error;
  }
  RunInfo info = config_.info;
  info.status = live_.read([](const Aggregator& a) { return a.run_status(); });
  try {
    writer_.write_run_info(info);
    if (has_run_started(writer_.logs())) export_report();
  } catch (const std::exception& ex) {
    std::lock_guard lock(result_mutex_);
    if (!error_) error_ = ex.what();
  }
  {
    std::lock_guard lock(result_mutex_);
    finished_ = true;
  }
  // The terminal status message goes out right after this sample.
  live_.post_sample(now_ms(), SampleReason::Final);
  live_.flush();
}

void RunSession::wait() {
  if (walker_.joinable()) walker_.join();
}

void RunSession::cancel() { cancel_ = true; }

bool RunSession::started() const {
  return live_.read([](const Aggregator& a) { return a.started(); });
}

std::optional<RunStatus> RunSession::status() const {
  return live_.read([](const Aggregator& a) { return a.run_status(); });
}

std::optional<std::string> RunSession::error() const {
  std::lock_guard lock(result_mutex_);
  return error_;
}

int RunSession::exit_code() const {
  std::lock_guard lock(result_mutex_);
  if (error_) return 1;
  if (!result_) return 1;
  return result_->status == RunStatus::Completed ? 0 : 2;
}

RunReport RunSession::current_report() {
  const RunLogs logs = writer_.logs();
  if (!has_run_started(logs)) throw Error(ErrorCode::NotStarted, "run has not started");
  return build_report(suite_, config_.info, logs);
}

ExportResult RunSession::export_report() {
  std::lock_guard lock(export_mutex_);
  RunReport report = current_report();
  ExportPaths paths = write_report(config_.out_dir, report);
  return {std::move(paths), std::move(report)};
}

void RunSession::set_refresh_interval(double seconds) { live_.post_refresh_interval(seconds); }

json RunSession::status_json() const {
  json j = live_.read([](const Aggregator& a) {
    std::string state = "pending";
    if (a.run_status()) {
      state = std::string(to_string(*a.run_status()));
    } else if (a.started()) {
      state = "running";
    }
    const ModelCoverageStats stats = a.model_stats();
    json out{{"state", state},
             {"refresh_interval_s", a.refresh_interval_s()},
             {"t_ms", a.last_t_ms()},
             {"model", to_json(stats)},
             {"percentages",
              {{"fe_cumulative_pct", a.fe_cumulative().percent},
               {"fe_page_pct", a.fe_page().percent},
               {"be_cumulative_pct", a.be_cumulative().percent},
               {"req_pct", a.requirements().percent}}},
             {"diagnostics", a.diagnostics().size()}};
    out["current_page"] = a.current_page() ? json(*a.current_page()) : json(nullptr);
    out["last_seq"] = a.last_seq() ? json(*a.last_seq()) : json(nullptr);
    out["progress"] = stats.edges_total ? 100.0 * static_cast<double>(stats.edges_covered) /
                                              static_cast<double>(stats.edges_total)
                                        : 0.0;
    return out;
  });
  j["seed"] = config_.info.seed;
  j["stop"] = to_string(config_.info.stop);
  j["lockstep"] = config_.info.lockstep;
  j["run_dir"] = config_.out_dir.string();
  {
    std::lock_guard lock(result_mutex_);
    j["finished"] = finished_.load();
    if (error_) {
      j["error"] = *error_;
      if (finished_) j["state"] = "error";
    }
  }
  if (finished_) {
    j["report"] = {{"json_path", (config_.out_dir / "report.json").string()},
                   {"html_path", (config_.out_dir / "report.html").string()}};
  }
  return j;
}

json RunSession::frontend_json() const {
  return live_.read([](const Aggregator& a) {
    json j = file_table(a.fe_cumulative_files());
    json page = file_table(a.fe_page_files());
    page["url"] = a.current_page() ? json(*a.current_page()) : json(nullptr);
    j["page"] = std::move(page);
    return j;
  });
}

json RunSession::backend_json() const {
  return live_.read([](const Aggregator& a) {
    json j = file_table(a.be_cumulative_files());
    j["baseline"] = a.be_total_baseline() ? json(*a.be_total_baseline()) : json(nullptr);
    return j;
  });
}

json RunSession::model_json() const {
  return live_.read([](const Aggregator& a) { return to_json(a.model_stats()); });
}

json RunSession::requirements_json() const {
  return live_.read([](const Aggregator& a) {
    json rows = json::array();
    for (const auto& [id, entry] : a.registry().entries) {
      json elements = json::array();
      for (const ElementRef& ref : entry.tagged_elements) elements.push_back(ref.model_id + "/" + ref.element_id);
      rows.push_back({{"id", id}, {"covered", a.covered_requirements().contains(id)}, {"elements", elements}});
    }
    const RequirementCoverage r = a.requirements();
    return json{{"requirements", std::move(rows)},
                {"covered", r.covered},
                {"total", r.total},
                {"percent", r.percent},
                {"no_data", r.no_data}};
  });
}

json RunSession::metrics_json(std::int64_t from_ms) const {
  return live_.read([from_ms](const Aggregator& a) {
    json points = json::array();
    const auto& series = a.series();
    auto it = std::lower_bound(series.begin(), series.end(), from_ms,
                               [](const MetricPoint& p, std::int64_t t) { return p.t_ms < t; });
    for (; it != series.end(); ++it) points.push_back(to_json(*it));
    return json{{"points", std::move(points)}};
  });
}

std::vector<CollectorStats> RunSession::collector_stats() const {
  std::vector<CollectorStats> out;
  for (const auto& c : collectors_) out.push_back(c->stats());
  return out;
}

}  // namespace mbtcover
