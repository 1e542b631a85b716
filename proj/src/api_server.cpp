#include "mbtcover/api_server.hpp"

#include <charconv>
#include <condition_variable>
#include <cstdlib>
#include <deque>

#include <httplib.h>

#include "mbtcover/error.hpp"

namespace mbtcover {

using nlohmann::json;

int resolve_port(std::optional<int> flag, int fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MBTCOV_PORT"); env && *env) {
    int port = 0;
    const std::string_view text(env);
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), port);
    if (ec != std::errc() || ptr != text.data() + text.size() || port < 0 || port > 65535) {
      throw Error(ErrorCode::MalformedSpec, "MBTCOV_PORT is not a port number: '" + std::string(text) + "'");
    }
    return port;
  }
  return fallback;
}

struct ApiServer::StreamClient {
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<std::string> queue;
  bool closed = false;    // no further messages; end after draining
  bool dropped = false;   // too slow; end immediately
};

namespace {

std::string sse_frame(const StreamMessage& message) {
  return "event: " + message.type + "\ndata: " + message.data.dump() + "\n\n";
}

void reply_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
  reply_json(res, json{{"error", message}}, status);
}

bool is_terminal(const StreamMessage& message) {
  return message.type == "status" && message.data.value("finished", false);
}

}  // namespace

ApiServer::ApiServer(RunSession& session, ApiServerOptions options)
    : session_(session), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  subscription_ = session_.subscribe([this](const StreamMessage& message) { push(message); });
  register_routes();
}

ApiServer::~ApiServer() {
  session_.unsubscribe(subscription_);
  stop();
}

void ApiServer::push(const StreamMessage& message) {
  const std::string frame = sse_frame(message);
  const bool terminal = is_terminal(message);
  std::lock_guard lock(clients_mutex_);
  for (auto it = clients_.begin(); it != clients_.end();) {
    StreamClient& client = **it;
    bool drop = false;
    {
      std::lock_guard client_lock(client.mutex);
      if (client.queue.size() >= options_.max_queued_messages) {
        client.dropped = true;
        drop = true;
      } else {
        client.queue.push_back(frame);
        if (terminal) client.closed = true;
      }
    }
    client.cv.notify_all();
    if (drop) {
      ++dropped_;
      it = clients_.erase(it);
    } else {
      ++it;
    }
  }
}

std::size_t ApiServer::stream_clients() const {
  std::lock_guard lock(clients_mutex_);
  return clients_.size();
}

std::uint64_t ApiServer::dropped_clients() const {
  std::lock_guard lock(clients_mutex_);
  return dropped_;
}

void ApiServer::register_routes() {
  httplib::Server& srv = *server_;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});

  srv.Get("/api/status", [this](const httplib::Request&, httplib::Response& res) {
    reply_json(res, session_.status_json());
  });

  srv.Get("/api/metrics", [this](const httplib::Request& req, httplib::Response& res) {
    std::int64_t from = 0;
    if (req.has_param("from")) {
      const std::string text = req.get_param_value("from");
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), from);
      if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
        reply_error(res, 400, "query parameter 'from' must be an integer t_ms");
        return;
      }
    }
    reply_json(res, session_.metrics_json(from));
  });

  srv.Get("/api/coverage/frontend", [this](const httplib::Request&, httplib::Response& res) {
    reply_json(res, session_.frontend_json());
  });
  srv.Get("/api/coverage/backend", [this](const httplib::Request&, httplib::Response& res) {
    reply_json(res, session_.backend_json());
  });
  srv.Get("/api/coverage/model", [this](const httplib::Request&, httplib::Response& res) {
    reply_json(res, session_.model_json());
  });
  srv.Get("/api/coverage/requirements", [this](const httplib::Request&, httplib::Response& res) {
    reply_json(res, session_.requirements_json());
  });

  srv.Post("/api/export", [this](const httplib::Request&, httplib::Response& res) {
    try {
      const ExportResult result = session_.export_report();
      const RunReport& r = result.report;
      reply_json(res, {{"json_path", result.paths.json_path.string()},
                       {"html_path", result.paths.html_path.string()},
                       {"status", r.status},
                       {"model", to_json(r.model)},
                       {"percentages",
                        {{"fe_cumulative_pct", r.fe_cumulative_pct},
                         {"fe_page_pct", r.fe_page_pct},
                         {"be_cumulative_pct", r.be_cumulative_pct},
                         {"req_pct", r.req_pct}}}});
    } catch (const Error& e) {
      reply_error(res, e.code() == ErrorCode::NotStarted ? 409 : 500, e.what());
    }
  });

  srv.Post("/api/config/refresh-interval", [this](const httplib::Request& req, httplib::Response& res) {
    double seconds = 0;
    try {
      const json body = json::parse(req.body);
      if (!body.is_object() || !body.contains("seconds") || !body["seconds"].is_number()) {
        reply_error(res, 400, "body must be {\"seconds\": number}");
        return;
      }
      seconds = body["seconds"].get<double>();
    } catch (const json::exception& e) {
      reply_error(res, 400, std::string("malformed JSON body: ") + e.what());
      return;
    }
    try {
      session_.set_refresh_interval(seconds);
    } catch (const Error& e) {
      reply_error(res, 400, e.what());
      return;
    }
    reply_json(res, {{"refresh_interval_s", seconds}});
  });

  srv.Get("/api/stream", [this](const httplib::Request&, httplib::Response& res) {
    auto client = std::make_shared<StreamClient>();
    {
      // The current status opens every stream, so late subscribers know where the run is.
      StreamMessage hello{"status", session_.status_json()};
      std::lock_guard lock(clients_mutex_);
      client->queue.push_back(sse_frame(hello));
      if (closing_ || is_terminal(hello)) {
        client->closed = true;
      } else {
        clients_.push_back(client);
      }
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_header("X-Accel-Buffering", "no");
    const auto heartbeat = options_.heartbeat;
    res.set_chunked_content_provider(
        "text/event-stream",
        [client, heartbeat](std::size_t, httplib::DataSink& sink) {
          std::unique_lock lock(client->mutex);
          client->cv.wait_for(lock, heartbeat,
                              [&] { return !client->queue.empty() || client->closed || client->dropped; });
          if (client->dropped) return false;
          if (client->queue.empty() && !client->closed) {
            lock.unlock();
            return sink.write(": heartbeat\n\n", 12);
          }
          std::deque<std::string> batch;
          batch.swap(client->queue);
          const bool closed = client->closed;
          lock.unlock();
          for (const std::string& frame : batch) {
            if (!sink.write(frame.data(), frame.size())) return false;
          }
          if (closed) sink.done();
          return true;
        },
        [this, client](bool) {
          std::lock_guard lock(clients_mutex_);
          std::erase(clients_, client);
        });
  });

  if (options_.static_dir) {
    if (!srv.set_mount_point("/", options_.static_dir->string())) {
      throw Error(ErrorCode::IoFailure, "static directory '" + options_.static_dir->string() + "' does not exist");
    }
  } else {
    srv.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("MBTCover service. See /api/status and /api/stream.\n", "text/plain");
    });
  }
}

int ApiServer::start(const std::string& host, int port) {
  host_ = host;
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
    if (port_ < 0) throw Error(ErrorCode::IoFailure, "cannot bind API server on " + host);
  } else {
    if (!server_->bind_to_port(host, port)) {
      throw Error(ErrorCode::IoFailure, "cannot bind API server on port " + std::to_string(port));
    }
    port_ = port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void ApiServer::stop() {
  {
    std::lock_guard lock(clients_mutex_);
    closing_ = true;
    for (auto& client : clients_) {
      std::lock_guard client_lock(client->mutex);
      client->closed = true;
      client->cv.notify_all();
    }
    clients_.clear();
  }
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string ApiServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace mbtcover
