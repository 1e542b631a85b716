#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mbtcover/session.hpp"

namespace httplib {
class Server;
}

namespace mbtcover {

// --port wins over MBTCOV_PORT, which wins over `fallback`.
int resolve_port(std::optional<int> flag, int fallback);

struct ApiServerOptions {
  std::optional<std::filesystem::path> static_dir;
  std::chrono::milliseconds heartbeat{15000};
  // Messages buffered per stream client before it is dropped as too slow.
  std::size_t max_queued_messages = 4096;
};

/// HTTP API and event stream over one RunSession. Handlers only read
/// aggregator state or post commands to its queue.
class ApiServer {
 public:
  ApiServer(RunSession& session, ApiServerOptions options = {});
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Port 0 picks a free port. Throws Error(IoFailure) when binding fails.
  int start(const std::string& host, int port);
  void stop();
  int port() const { return port_; }
  std::string base_url() const;
  std::size_t stream_clients() const;
  std::uint64_t dropped_clients() const;

 private:
  struct StreamClient;

  void register_routes();
  void push(const StreamMessage& message);

  RunSession& session_;
  ApiServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
  std::uint64_t subscription_ = 0;

  mutable std::mutex clients_mutex_;
  std::vector<std::shared_ptr<StreamClient>> clients_;
  std::uint64_t dropped_ = 0;
  bool closing_ = false;
};

}  // namespace mbtcover
