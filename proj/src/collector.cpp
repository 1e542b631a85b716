#include "mbtcover/collector.hpp"

#include <chrono>

#include <httplib.h>

#include "mbtcover/error.hpp"

namespace mbtcover {

namespace {
constexpr std::size_t kMaxDiagnostics = 200;
}

HttpUrl split_http_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::MalformedSpec, "URL without scheme: '" + url + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

HttpPollCollector::HttpPollCollector(std::string endpoint_url, CoverageSource source, std::string collector_id,
                                     Clock clock)
    : endpoint_url_(std::move(endpoint_url)),
      url_(split_http_url(endpoint_url_)),
      source_(source),
      collector_id_(std::move(collector_id)),
      clock_(std::move(clock)) {}

HttpPollCollector::~HttpPollCollector() { stop(); }

void HttpPollCollector::note(std::string message) {
  std::lock_guard lock(stats_mutex_);
  if (stats_.diagnostics.size() < kMaxDiagnostics) stats_.diagnostics.push_back(std::move(message));
}

std::optional<SnapshotRecord> HttpPollCollector::poll() {
  std::lock_guard poll_lock(poll_mutex_);
  {
    std::lock_guard lock(stats_mutex_);
    ++stats_.polls;
  }
  httplib::Client client(url_.scheme_host_port);
  client.set_connection_timeout(2, 0);
  client.set_read_timeout(10, 0);
  const std::int64_t t_ms = clock_();
  auto res = client.Get(url_.path);
  if (!res) {
    {
      std::lock_guard lock(stats_mutex_);
      ++stats_.failures;
    }
    note("EndpointUnreachable: " + endpoint_url_ + " (" + httplib::to_string(res.error()) + ")");
    return std::nullopt;
  }
  if (res->status < 200 || res->status >= 300) {
    {
      std::lock_guard lock(stats_mutex_);
      ++stats_.failures;
    }
    note("EndpointUnreachable: " + endpoint_url_ + " returned HTTP " + std::to_string(res->status));
    return std::nullopt;
  }
  RawSnapshot raw{source_, collector_id_, t_ms, res->get_header_value("Content-Type"), res->body};
  try {
    CoverageSnapshot decoded = decoder_.decode(raw);
    std::lock_guard lock(stats_mutex_);
    ++stats_.delivered;
    return SnapshotRecord{std::move(raw), std::move(decoded)};
  } catch (const Error& err) {
    {
      std::lock_guard lock(stats_mutex_);
      ++stats_.malformed;
    }
    note(std::string("MalformedPayload: ") + endpoint_url_ + ": " + err.what());
    return std::nullopt;
  }
}

void HttpPollCollector::start(double interval_s, Sink sink) {
  stop();
  {
    std::lock_guard lock(wait_mutex_);
    stopping_ = false;
  }
  const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(interval_s));
  thread_ = std::thread([this, interval, sink = std::move(sink)] {
    auto next = std::chrono::steady_clock::now();
    while (true) {
      if (auto record = poll()) sink(std::move(*record));
      next += interval;
      std::unique_lock lock(wait_mutex_);
      if (wait_cv_.wait_until(lock, next, [&] { return stopping_; })) return;
    }
  });
}

void HttpPollCollector::stop() {
  {
    std::lock_guard lock(wait_mutex_);
    stopping_ = true;
  }
  wait_cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

CollectorStats HttpPollCollector::stats() const {
  std::lock_guard lock(stats_mutex_);
  return stats_;
}

}  // namespace mbtcover
