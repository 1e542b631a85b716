#include "mbtcover/aggregation.hpp"

#include <algorithm>

#include "mbtcover/error.hpp"

namespace mbtcover {

namespace {

using nlohmann::json;

void merge_into(FileStore& store, const FileCoverageList& files) {
  for (const FileLineCoverage& f : files) {
    FileLineCoverage& dst = store[f.file_id];
    dst.file_id = f.file_id;
    dst.instrumented.insert(f.instrumented.begin(), f.instrumented.end());
    dst.instrumented.insert(f.covered.begin(), f.covered.end());
    dst.covered.insert(f.covered.begin(), f.covered.end());
  }
}

CoverageRatio ratio_of_store(const FileStore& store) {
  CoverageRatio r;
  for (const auto& [id, f] : store) {
    r.covered += f.covered.size();
    r.total += f.instrumented.size();
  }
  r.no_data = r.total == 0;
  r.percent = r.no_data ? 0.0 : 100.0 * static_cast<double>(r.covered) / static_cast<double>(r.total);
  return r;
}

std::uint64_t instrumented_total(const FileStore& store) {
  std::uint64_t total = 0;
  for (const auto& [id, f] : store) total += f.instrumented.size();
  return total;
}

bool content_type_is(const std::string& content_type, std::string_view expected) {
  return content_type.substr(0, content_type.find(';')) == expected;
}

FileCoverageList decode_frontend_scripts(const json& doc) {
  FileCoverageList files;
  for (const json& script : doc.at("scripts")) {
    const std::string url = script.at("url").get<std::string>();
    const std::string source = script.at("source").get<std::string>();
    const json& coverage = script.at("coverage");
    const json& functions = coverage.is_array() ? coverage : coverage.at("functions");
    std::vector<V8Range> ranges;
    for (const json& fn : functions) {
      for (const json& r : fn.at("ranges")) {
        ranges.push_back({r.at("startOffset").get<std::int64_t>(), r.at("endOffset").get<std::int64_t>(),
                          r.at("count").get<std::int64_t>()});
      }
    }
    files = merge_coverage(files, {v8_ranges_to_lines(url, source, std::move(ranges))});
  }
  return files;
}

}  // namespace

std::string_view to_string(CoverageSource source) {
  return source == CoverageSource::Frontend ? "frontend" : "backend";
}

CoverageSource coverage_source_from_string(std::string_view s) {
  if (s == "frontend") return CoverageSource::Frontend;
  if (s == "backend") return CoverageSource::Backend;
  throw Error(ErrorCode::SchemaViolation, "unknown coverage source '" + std::string(s) + "'");
}

CoverageSnapshot decode_snapshot(const RawSnapshot& raw) {
  CoverageSnapshot snap;
  snap.source = raw.source;
  snap.collector_id = raw.collector_id;
  snap.t_ms = raw.t_ms;
  if (raw.source == CoverageSource::Frontend) {
    try {
      const json doc = json::parse(raw.body);
      if (doc.contains("pageUrl") && doc["pageUrl"].is_string()) snap.page_url = doc["pageUrl"].get<std::string>();
      snap.files = decode_frontend_scripts(doc);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedDocument, std::string("frontend payload: ") + e.what());
    }
  } else if (content_type_is(raw.content_type, "text/plain")) {
    snap.files = parse_lcov(raw.body);
  } else {
    snap.files = parse_jacoco_xml(raw.body);
  }
  return snap;
}

CoverageSnapshot SnapshotDecoder::decode(const RawSnapshot& raw) {
  auto key = std::make_pair(raw.source, raw.collector_id);
  auto it = last_.find(key);
  if (it == last_.end() || it->second.content_type != raw.content_type || it->second.body != raw.body) {
    CoverageSnapshot decoded = decode_snapshot(raw);
    last_[key] = Last{raw.content_type, raw.body, decoded};
    return decoded;
  }
  CoverageSnapshot snap = it->second.decoded;
  snap.t_ms = raw.t_ms;
  return snap;
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::FeCumulativePct: return "fe_cumulative_pct";
    case Metric::FePagePct: return "fe_page_pct";
    case Metric::BeCumulativePct: return "be_cumulative_pct";
    case Metric::ReqPct: return "req_pct";
    case Metric::ModelsReached: return "models_reached";
    case Metric::VerticesCovered: return "vertices_covered";
    case Metric::VerticesExecuted: return "vertices_executed";
    case Metric::EdgesCovered: return "edges_covered";
  }
  return "?";
}

Metric metric_from_string(std::string_view s) {
  for (Metric m : kAllMetrics) {
    if (to_string(m) == s) return m;
  }
  throw Error(ErrorCode::SchemaViolation, "unknown metric '" + std::string(s) + "'");
}

json to_json(const MetricPoint& p) {
  json j{{"t_ms", p.t_ms}, {"metric", to_string(p.metric)}, {"value", p.value}};
  if (p.page_url) j["page_url"] = *p.page_url;
  if (p.no_data) j["no_data"] = true;
  return j;
}

MetricPoint metric_point_from_json(const json& j) {
  MetricPoint p;
  p.t_ms = j.at("t_ms").get<std::int64_t>();
  p.metric = metric_from_string(j.at("metric").get<std::string>());
  p.value = j.at("value").get<double>();
  if (j.contains("page_url")) p.page_url = j["page_url"].get<std::string>();
  p.no_data = j.value("no_data", false);
  return p;
}

std::string_view to_string(SampleReason reason) {
  switch (reason) {
    case SampleReason::Tick: return "tick";
    case SampleReason::Navigation: return "navigation";
    case SampleReason::Step: return "step";
    case SampleReason::Final: return "final";
    case SampleReason::Manual: return "manual";
  }
  return "?";
}

Aggregator::Aggregator(const ModelSuite& suite, double refresh_interval_s)
    : registry_(build_requirement_registry(suite)), tracker_(suite), refresh_interval_s_(Aggregator::kDefaultRefreshIntervalS) {
  set_refresh_interval(refresh_interval_s);
}

void Aggregator::ingest_walk_event(const WalkEvent& event) {
  if (finished_) {
    diagnostics_.push_back("walk event seq " + std::to_string(event.seq) + " after run_finished ignored");
    return;
  }
  tracker_.apply(event);
  last_t_ms_ = std::max(last_t_ms_, event.t_ms);
  switch (event.kind) {
    case EventKind::RunStarted:
      started_ = true;
      break;
    case EventKind::VertexExecuted:
    case EventKind::EdgeExecuted:
      for (const auto& tag : event.reqs) {
        if (registry_.contains(tag)) covered_requirements_.insert(tag);
      }
      break;
    case EventKind::Navigation:
      fe_page_session_.clear();
      current_page_ = event.page;
      break;
    case EventKind::RunFinished:
      finished_ = event.status.value_or(RunStatus::Completed);
      break;
    case EventKind::ModelEntered:
      break;
  }
}

void Aggregator::ingest_snapshot(const CoverageSnapshot& snapshot) {
  if (finished_) {
    diagnostics_.push_back("snapshot from '" + snapshot.collector_id + "' after run_finished ignored");
    return;
  }
  last_t_ms_ = std::max(last_t_ms_, snapshot.t_ms);
  if (snapshot.source == CoverageSource::Frontend) {
    merge_into(fe_cumulative_, snapshot.files);
    if (!current_page_ && snapshot.page_url) current_page_ = snapshot.page_url;
    if (snapshot.page_url && current_page_ && *snapshot.page_url != *current_page_) {
      // Polled before the walker's navigation was applied; belongs to the previous page.
      diagnostics_.push_back("StalePageSnapshot: frontend snapshot for '" + *snapshot.page_url +
                             "' while current page is '" + *current_page_ + "'");
    } else {
      merge_into(fe_page_session_, snapshot.files);
    }
    return;
  }
  merge_into(be_cumulative_, snapshot.files);
  const std::uint64_t total = instrumented_total(be_cumulative_);
  if (!be_total_baseline_) {
    be_total_baseline_ = total;
  } else if (total != *be_total_baseline_) {
    diagnostics_.push_back("DenominatorDrift: backend instrumented total " + std::to_string(*be_total_baseline_) +
                           " -> " + std::to_string(total));
    be_total_baseline_ = total;
  }
}

CoverageRatio Aggregator::fe_cumulative() const { return ratio_of_store(fe_cumulative_); }
CoverageRatio Aggregator::fe_page() const { return ratio_of_store(fe_page_session_); }
CoverageRatio Aggregator::be_cumulative() const { return ratio_of_store(be_cumulative_); }

RequirementCoverage Aggregator::requirements() const {
  RequirementCoverage r;
  r.covered = covered_requirements_.size();
  r.total = registry_.size();
  r.no_data = r.total == 0;
  r.percent = r.no_data ? 0.0 : 100.0 * static_cast<double>(r.covered) / static_cast<double>(r.total);
  return r;
}

std::vector<MetricPoint> Aggregator::sample_metrics(std::int64_t now_ms) {
  if (!series_.empty()) now_ms = std::max(now_ms, series_.back().t_ms);
  const CoverageRatio fe = fe_cumulative();
  const CoverageRatio page = fe_page();
  const CoverageRatio be = be_cumulative();
  const RequirementCoverage req = requirements();
  const ModelCoverageStats stats = tracker_.stats();
  std::vector<MetricPoint> points{
      {now_ms, Metric::FeCumulativePct, fe.percent, std::nullopt, fe.no_data},
      {now_ms, Metric::FePagePct, page.percent, current_page_, page.no_data},
      {now_ms, Metric::BeCumulativePct, be.percent, std::nullopt, be.no_data},
      {now_ms, Metric::ReqPct, req.percent, std::nullopt, req.no_data},
      {now_ms, Metric::ModelsReached, static_cast<double>(stats.models_reached)},
      {now_ms, Metric::VerticesCovered, static_cast<double>(stats.vertices_covered)},
      {now_ms, Metric::VerticesExecuted, static_cast<double>(stats.vertices_executed)},
      {now_ms, Metric::EdgesCovered, static_cast<double>(stats.edges_covered)},
  };
  series_.insert(series_.end(), points.begin(), points.end());
  return points;
}

void Aggregator::check_refresh_interval(double seconds) {
  if (!(seconds >= kMinRefreshIntervalS && seconds <= kMaxRefreshIntervalS)) {
    throw Error(ErrorCode::OutOfRange, "refresh interval must be within [0.5, 3600] seconds");
  }
}

void Aggregator::set_refresh_interval(double seconds) {
  check_refresh_interval(seconds);
  refresh_interval_s_ = seconds;
}

// ---------------------------------------------------------------------------

LiveAggregator::LiveAggregator(const ModelSuite& suite, double refresh_interval_s)
    : aggregator_(suite, refresh_interval_s) {
  worker_ = std::thread([this] { run(); });
}

LiveAggregator::~LiveAggregator() { stop(); }

void LiveAggregator::add_listener(Listener listener) { listeners_.push_back(std::move(listener)); }

void LiveAggregator::post(Item item) {
  {
    std::lock_guard lock(queue_mutex_);
    if (stopping_) return;
    queue_.push_back(std::move(item));
  }
  queue_cv_.notify_one();
}

void LiveAggregator::post_event(WalkEvent event) { post(std::move(event)); }
void LiveAggregator::post_snapshot(SnapshotRecord snapshot) { post(std::move(snapshot)); }
void LiveAggregator::post_sample(std::int64_t t_ms, SampleReason reason) { post(SampleRequest{t_ms, reason}); }

void LiveAggregator::post_refresh_interval(double seconds) {
  Aggregator::check_refresh_interval(seconds);
  post(IntervalChange{seconds});
}

void LiveAggregator::flush() {
  std::unique_lock lock(queue_mutex_);
  if (stopping_ && queue_.empty()) return;
  const std::uint64_t ticket = ++next_ticket_;
  queue_.push_back(Barrier{ticket});
  queue_cv_.notify_one();
  done_cv_.wait(lock, [&] { return done_ticket_ >= ticket || (stopping_ && queue_.empty()); });
}

void LiveAggregator::stop() {
  {
    std::lock_guard lock(queue_mutex_);
    if (stopping_ && !worker_.joinable()) return;
    stopping_ = true;
  }
  queue_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
  done_cv_.notify_all();
}

std::vector<std::string> LiveAggregator::errors() const {
  std::lock_guard lock(queue_mutex_);
  return errors_;
}

void LiveAggregator::run() {
  while (true) {
    Item item;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;  // stopping and drained
      item = std::move(queue_.front());
      queue_.pop_front();
    }
    if (auto* barrier = std::get_if<Barrier>(&item)) {
      std::lock_guard lock(queue_mutex_);
      done_ticket_ = std::max(done_ticket_, barrier->ticket);
      done_cv_.notify_all();
      continue;
    }
    apply(item);
  }
}

void LiveAggregator::apply(Item& item) {
  std::optional<AppliedItem> applied;
  std::optional<SampleRecord> nav_sample;
  try {
    std::unique_lock lock(state_mutex_);
    if (auto* event = std::get_if<WalkEvent>(&item)) {
      aggregator_.ingest_walk_event(*event);
      applied = *event;
      if (event->kind == EventKind::Navigation) {
        // The page chart restarts at 0 on every navigation.
        nav_sample = SampleRecord{event->t_ms, SampleReason::Navigation, aggregator_.sample_metrics(event->t_ms)};
        nav_sample->t_ms = nav_sample->points.front().t_ms;
      }
    } else if (auto* snap = std::get_if<SnapshotRecord>(&item)) {
      aggregator_.ingest_snapshot(snap->decoded);
      applied = std::move(*snap);
    } else if (auto* req = std::get_if<SampleRequest>(&item)) {
      SampleRecord record{req->t_ms, req->reason, aggregator_.sample_metrics(req->t_ms)};
      record.t_ms = record.points.front().t_ms;
      applied = std::move(record);
    } else if (auto* change = std::get_if<IntervalChange>(&item)) {
      aggregator_.set_refresh_interval(change->seconds);
      applied = *change;
    }
  } catch (const std::exception& ex) {
    std::lock_guard lock(queue_mutex_);
    errors_.push_back(ex.what());
    return;
  }
  for (const auto& listener : listeners_) {
    listener(*applied);
    if (nav_sample) listener(AppliedItem{*nav_sample});
  }
}

}  // namespace mbtcover
