#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mbtcover/walker.hpp"

namespace httplib {
class Server;
}

namespace mbtcover {

struct SimScript {
  std::string url;
  std::uint32_t line_count = 0;
  std::uint32_t lines_covered_per_visit = 0;
};

struct SimPage {
  std::string url;
  std::vector<SimScript> scripts;
};

struct SimBackend {
  std::uint32_t total_lines = 0;
  std::uint32_t lines_covered_per_action = 0;
  std::uint32_t files = 4;
  // Lines already executed at startup, before any action.
  std::uint32_t initial_covered_lines = 0;
  std::string package = "app";
};

struct SimConfig {
  std::vector<SimPage> pages;  // pages[0] is the landing page
  SimBackend backend;
  std::uint64_t seed = 1;
  std::set<std::string> fail_vertices;
};

// Throws Error(SchemaViolation) when a script covers more lines per visit
// than it has, or a script url is declared with two different sizes.
void validate(const SimConfig& config);
SimConfig sim_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimConfig& config);

/// Built-in configurations: "default" (four pages sharing a vendor bundle) and
/// "shape" (page /a with one 100-line script, page /b with one 200-line
/// script). Throws Error(UnknownKind) for other names.
SimConfig named_sim_config(const std::string& name);
// Name of a built-in config, or a path to a JSON config file.
SimConfig load_sim_config(const std::string& name_or_path);
std::vector<std::string> page_urls(const SimConfig& config);

/// Deterministic mock web application. All state changes and payload reads
/// are serialised by one mutex, so concurrent polling is safe.
class SimSut {
 public:
  explicit SimSut(SimConfig config);

  AssertionOutcome apply_vertex(const std::string& model_id, const std::string& vertex_id);
  // `goto:<url>` navigates and returns the url (Error(UnknownPage) if absent
  // from the config); any other name accrues coverage on the current page.
  // Every edge touches backend lines.
  std::optional<std::string> apply_edge(const std::string& edge_name);

  std::string frontend_payload() const;
  std::string backend_jacoco_xml() const;
  std::string backend_lcov() const;
  std::string current_page() const;
  // Source text served for a script url (empty when unknown).
  std::string script_source(const std::string& url) const;

  // The next `count` coverage polls answer with HTTP `status`.
  void inject_poll_failures(int status, int count);
  // Returns the injected status for this poll, if any, consuming it.
  std::optional<int> take_poll_failure();

  const SimConfig& config() const { return config_; }

 private:
  struct ScriptState {
    std::uint32_t line_count = 0;
    std::string source;
    std::vector<std::int64_t> line_starts;
    std::vector<std::uint32_t> order;  // seeded permutation of line numbers
    std::size_t next = 0;
    std::set<std::uint32_t> covered;
  };
  struct BackendLine {
    std::uint32_t file = 0;
    std::uint32_t nr = 0;
  };

  void accrue_backend(std::size_t count);

  SimConfig config_;
  mutable std::mutex mutex_;
  std::size_t current_page_ = 0;
  std::map<std::string, ScriptState> scripts_;
  std::vector<std::uint32_t> file_line_counts_;
  std::vector<BackendLine> backend_order_;
  std::size_t backend_next_ = 0;
  std::vector<std::set<std::uint32_t>> backend_covered_;
  int fail_status_ = 0;
  int fail_remaining_ = 0;
};

/// Serves a SimSut over HTTP:
///   GET  /coverage/frontend  -> collector frontend wire format (JSON)
///   GET  /coverage/backend   -> JaCoCo XML (`?format=lcov` for LCOV)
///   POST /sim/action         -> {"type":"vertex"|"edge", ...}
///   POST /sim/fault          -> {"status":500,"count":1}
class SimServer {
 public:
  explicit SimServer(SimSut& sut);
  ~SimServer();
  SimServer(const SimServer&) = delete;
  SimServer& operator=(const SimServer&) = delete;

  // Binds (port 0 picks a free port) and serves on a background thread.
  // Returns the bound port; throws Error(IoFailure) when the port is in use.
  int start(const std::string& host, int port);
  void stop();
  // Blocks until the server stops.
  void wait();
  int port() const { return port_; }
  std::string base_url() const;

 private:
  SimSut& sut_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
};

/// In-process adapter driving a SimSut directly.
class SimAdapter : public Adapter {
 public:
  explicit SimAdapter(SimSut& sut) : sut_(sut) {}
  AssertionOutcome execute_vertex(const TestModel& model, const Vertex& vertex) override;
  std::optional<std::string> execute_edge(const TestModel& model, const Edge& edge) override;

 private:
  SimSut& sut_;
};

/// Adapter for an out-of-process sim: POSTs each element to `<base>/sim/action`.
class HttpSimAdapter : public Adapter {
 public:
  explicit HttpSimAdapter(std::string base_url);
  AssertionOutcome execute_vertex(const TestModel& model, const Vertex& vertex) override;
  std::optional<std::string> execute_edge(const TestModel& model, const Edge& edge) override;

 private:
  nlohmann::json post(const nlohmann::json& body);
  std::string base_url_;
};

}  // namespace mbtcover
