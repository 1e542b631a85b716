#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mbtcover/aggregation.hpp"

namespace mbtcover {

struct HttpUrl {
  std::string scheme_host_port;  // e.g. "http://127.0.0.1:8080"
  std::string path;              // e.g. "/coverage/frontend"
};

HttpUrl split_http_url(const std::string& url);

struct CollectorStats {
  std::uint64_t polls = 0;
  std::uint64_t delivered = 0;
  std::uint64_t failures = 0;   // unreachable endpoint or non-2xx status
  std::uint64_t malformed = 0;  // payload did not decode
  std::vector<std::string> diagnostics;
};

/// Polls one coverage endpoint (GET) on a fixed cadence. Failed or
/// undecodable polls are counted and skipped; the next tick retries.
class HttpPollCollector {
 public:
  using Sink = std::function<void(SnapshotRecord)>;
  using Clock = std::function<std::int64_t()>;

  HttpPollCollector(std::string endpoint_url, CoverageSource source, std::string collector_id, Clock clock);
  ~HttpPollCollector();
  HttpPollCollector(const HttpPollCollector&) = delete;
  HttpPollCollector& operator=(const HttpPollCollector&) = delete;

  // One synchronous poll.
  std::optional<SnapshotRecord> poll();

  // Polls at t0, t0 + interval, ... on a background thread until stop().
  void start(double interval_s, Sink sink);
  void stop();

  CollectorStats stats() const;
  const std::string& id() const { return collector_id_; }
  CoverageSource source() const { return source_; }

 private:
  void note(std::string message);

  std::string endpoint_url_;
  HttpUrl url_;
  CoverageSource source_;
  std::string collector_id_;
  Clock clock_;

  std::mutex poll_mutex_;  // serialises background and synchronous polls
  SnapshotDecoder decoder_;
  mutable std::mutex stats_mutex_;
  CollectorStats stats_;

  std::mutex wait_mutex_;
  std::condition_variable wait_cv_;
  bool stopping_ = false;
  std::thread thread_;
};

}  // namespace mbtcover
