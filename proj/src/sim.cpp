#include "mbtcover/sim.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include <httplib.h>

#include "mbtcover/collector.hpp"
#include "mbtcover/error.hpp"

namespace mbtcover {

namespace {

using nlohmann::json;

std::uint64_t fnv1a(std::string_view text, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL ^ seed;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string generate_source(const std::string& url, std::uint32_t lines, std::uint64_t seed) {
  static const char* kTemplates[] = {
      "function handler_%u(event) {",
      "  const value_%u = compute(%u, \"%s\");",
      "  if (state.%s) { render(%u); }",
      "  return items.filter((x) => x.id !== %u);",
      "}",
      "  // %s",
      "export const %s_%u = () => fetch(\"/api/%s\");",
  };
  std::mt19937_64 rng(fnv1a(url, seed) ^ 0x5eedULL);
  std::uniform_int_distribution<int> pick(0, std::size(kTemplates) - 1);
  std::uniform_int_distribution<int> word_len(3, 14);
  std::uniform_int_distribution<int> letter(0, 25);
  std::string out;
  char buf[256];
  for (std::uint32_t n = 1; n <= lines; ++n) {
    std::string word;
    for (int i = word_len(rng); i > 0; --i) word.push_back(static_cast<char>('a' + letter(rng)));
    switch (pick(rng)) {
      case 0: std::snprintf(buf, sizeof buf, kTemplates[0], n); break;
      case 1: std::snprintf(buf, sizeof buf, kTemplates[1], n, n, word.c_str()); break;
      case 2: std::snprintf(buf, sizeof buf, kTemplates[2], word.c_str(), n); break;
      case 3: std::snprintf(buf, sizeof buf, kTemplates[3], n); break;
      case 4: std::snprintf(buf, sizeof buf, "%s", kTemplates[4]); break;
      case 5: std::snprintf(buf, sizeof buf, kTemplates[5], word.c_str()); break;
      default: std::snprintf(buf, sizeof buf, kTemplates[6], word.c_str(), n, word.c_str()); break;
    }
    out += buf;
    out += '\n';
  }
  return out;
}

}  // namespace

void validate(const SimConfig& config) {
  if (config.pages.empty()) throw Error(ErrorCode::SchemaViolation, "sim config needs at least one page");
  std::map<std::string, std::uint32_t> sizes;
  std::set<std::string> urls;
  for (const SimPage& page : config.pages) {
    if (!urls.insert(page.url).second) throw Error(ErrorCode::DuplicateId, "duplicate page url '" + page.url + "'");
    for (const SimScript& s : page.scripts) {
      if (s.lines_covered_per_visit > s.line_count) {
        throw Error(ErrorCode::SchemaViolation,
                    "script '" + s.url + "': lines_covered_per_visit exceeds line_count");
      }
      auto [it, inserted] = sizes.emplace(s.url, s.line_count);
      if (!inserted && it->second != s.line_count) {
        throw Error(ErrorCode::SchemaViolation, "script '" + s.url + "' declared with two sizes");
      }
    }
  }
  const SimBackend& b = config.backend;
  if (b.lines_covered_per_action > b.total_lines || b.initial_covered_lines > b.total_lines) {
    throw Error(ErrorCode::SchemaViolation, "backend covers more lines than it has");
  }
  if (b.total_lines > 0 && b.files == 0) throw Error(ErrorCode::SchemaViolation, "backend needs at least one file");
}

SimConfig sim_config_from_json(const json& j) {
  SimConfig c;
  try {
    for (const json& p : j.at("pages")) {
      SimPage page;
      page.url = p.at("url").get<std::string>();
      for (const json& s : p.at("scripts")) {
        page.scripts.push_back({s.at("url").get<std::string>(), s.at("line_count").get<std::uint32_t>(),
                                s.at("lines_covered_per_visit").get<std::uint32_t>()});
      }
      c.pages.push_back(std::move(page));
    }
    const json& b = j.at("backend");
    c.backend.total_lines = b.at("total_lines").get<std::uint32_t>();
    c.backend.lines_covered_per_action = b.at("lines_covered_per_action").get<std::uint32_t>();
    c.backend.files = b.value("files", 4u);
    c.backend.initial_covered_lines = b.value("initial_covered_lines", 0u);
    c.backend.package = b.value("package", std::string("app"));
    c.seed = j.value("seed", std::uint64_t{1});
    if (j.contains("fail_vertices")) c.fail_vertices = j["fail_vertices"].get<std::set<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("sim config: ") + e.what());
  }
  validate(c);
  return c;
}

json to_json(const SimConfig& c) {
  json pages = json::array();
  for (const SimPage& p : c.pages) {
    json scripts = json::array();
    for (const SimScript& s : p.scripts) {
      scripts.push_back({{"url", s.url}, {"line_count", s.line_count}, {"lines_covered_per_visit", s.lines_covered_per_visit}});
    }
    pages.push_back({{"url", p.url}, {"scripts", std::move(scripts)}});
  }
  return json{{"pages", std::move(pages)},
              {"backend",
               {{"total_lines", c.backend.total_lines},
                {"lines_covered_per_action", c.backend.lines_covered_per_action},
                {"files", c.backend.files},
                {"initial_covered_lines", c.backend.initial_covered_lines},
                {"package", c.backend.package}}},
              {"seed", c.seed},
              {"fail_vertices", c.fail_vertices}};
}

SimConfig named_sim_config(const std::string& name) {
  SimConfig c;
  if (name == "shape") {
    c.pages = {{"/a", {{"/static/a.js", 100, 15}}}, {"/b", {{"/static/b.js", 200, 10}}}};
    c.backend = {1000, 5, 4, 100, "app"};
    c.seed = 11;
  } else if (name == "default") {
    c.pages = {
        {"/login", {{"/static/vendor.js", 400, 8}, {"/static/login.js", 80, 10}}},
        {"/dashboard", {{"/static/vendor.js", 400, 8}, {"/static/dashboard.js", 250, 12}}},
        {"/projects", {{"/static/vendor.js", 400, 8}, {"/static/projects.js", 180, 9}}},
        {"/reports", {{"/static/vendor.js", 400, 8}, {"/static/reports.js", 300, 15}}},
    };
    c.backend = {5000, 6, 12, 0, "app"};
    c.seed = 3;
  } else {
    throw Error(ErrorCode::UnknownKind, "unknown sim config '" + name + "'");
  }
  validate(c);
  return c;
}

SimConfig load_sim_config(const std::string& name_or_path) {
  if (name_or_path == "shape" || name_or_path == "default") return named_sim_config(name_or_path);
  std::ifstream in(name_or_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open sim config '" + name_or_path + "'");
  try {
    return sim_config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedDocument, e.what());
  }
}

std::vector<std::string> page_urls(const SimConfig& config) {
  std::vector<std::string> urls;
  for (const SimPage& p : config.pages) urls.push_back(p.url);
  return urls;
}

// ---------------------------------------------------------------------------

SimSut::SimSut(SimConfig config) : config_(std::move(config)) {
  validate(config_);
  for (const SimPage& page : config_.pages) {
    for (const SimScript& s : page.scripts) {
      if (scripts_.contains(s.url)) continue;
      ScriptState state;
      state.line_count = s.line_count;
      state.source = generate_source(s.url, s.line_count, config_.seed);
      state.line_starts.push_back(0);
      for (std::size_t i = 0; i < state.source.size(); ++i) {
        if (state.source[i] == '\n' && i + 1 < state.source.size()) {
          state.line_starts.push_back(static_cast<std::int64_t>(i + 1));
        }
      }
      for (std::uint32_t n = 1; n <= s.line_count; ++n) state.order.push_back(n);
      std::mt19937_64 rng(fnv1a(s.url, config_.seed));
      std::shuffle(state.order.begin(), state.order.end(), rng);
      scripts_.emplace(s.url, std::move(state));
    }
  }

  const SimBackend& b = config_.backend;
  backend_covered_.assign(b.files, {});
  file_line_counts_.assign(b.files, 0);
  for (std::uint32_t i = 0; i < b.total_lines; ++i) ++file_line_counts_[i % b.files];
  for (std::uint32_t f = 0; f < b.files; ++f) {
    for (std::uint32_t nr = 1; nr <= file_line_counts_[f]; ++nr) backend_order_.push_back({f, nr});
  }
  std::mt19937_64 rng(fnv1a("backend", config_.seed));
  std::shuffle(backend_order_.begin(), backend_order_.end(), rng);
  accrue_backend(b.initial_covered_lines);
}

void SimSut::accrue_backend(std::size_t count) {
  for (; count > 0 && backend_next_ < backend_order_.size(); --count, ++backend_next_) {
    const BackendLine& line = backend_order_[backend_next_];
    backend_covered_[line.file].insert(line.nr);
  }
}

AssertionOutcome SimSut::apply_vertex(const std::string& model_id, const std::string& vertex_id) {
  std::lock_guard lock(mutex_);
  if (config_.fail_vertices.contains(vertex_id)) {
    return {false, "injected failure at " + model_id + "/" + vertex_id};
  }
  return {true, {}};
}

std::optional<std::string> SimSut::apply_edge(const std::string& edge_name) {
  std::lock_guard lock(mutex_);
  std::optional<std::string> navigated;
  if (edge_name.starts_with("goto:")) {
    const std::string url = edge_name.substr(5);
    auto it = std::find_if(config_.pages.begin(), config_.pages.end(),
                           [&](const SimPage& p) { return p.url == url; });
    if (it == config_.pages.end()) throw Error(ErrorCode::UnknownPage, "no page '" + url + "' in sim config");
    current_page_ = static_cast<std::size_t>(it - config_.pages.begin());
    navigated = url;
  } else {
    for (const SimScript& s : config_.pages[current_page_].scripts) {
      ScriptState& state = scripts_.at(s.url);
      for (std::uint32_t i = 0; i < s.lines_covered_per_visit && state.next < state.order.size(); ++i) {
        state.covered.insert(state.order[state.next++]);
      }
    }
  }
  accrue_backend(config_.backend.lines_covered_per_action);
  return navigated;
}

std::string SimSut::current_page() const {
  std::lock_guard lock(mutex_);
  return config_.pages[current_page_].url;
}

std::string SimSut::script_source(const std::string& url) const {
  std::lock_guard lock(mutex_);
  auto it = scripts_.find(url);
  return it == scripts_.end() ? std::string{} : it->second.source;
}

std::string SimSut::frontend_payload() const {
  std::lock_guard lock(mutex_);
  const SimPage& page = config_.pages[current_page_];
  json scripts = json::array();
  std::set<std::string> seen;
  for (const SimScript& s : page.scripts) {
    if (!seen.insert(s.url).second) continue;
    const ScriptState& state = scripts_.at(s.url);
    const auto length = static_cast<std::int64_t>(state.source.size());
    auto line_end = [&](std::uint32_t line) {
      return line < state.line_starts.size() ? state.line_starts[line] : length;
    };
    // V8 block-coverage style: the script body counts once it ran, and
    // unexecuted blocks are reported as nested zero-count ranges.
    json ranges = json::array();
    ranges.push_back({{"startOffset", 0}, {"endOffset", length}, {"count", state.covered.empty() ? 0 : 1}});
    if (!state.covered.empty()) {
      std::uint32_t line = 1;
      while (line <= state.line_count) {
        if (state.covered.contains(line)) {
          ++line;
          continue;
        }
        const std::uint32_t first = line;
        while (line <= state.line_count && !state.covered.contains(line)) ++line;
        ranges.push_back(
            {{"startOffset", state.line_starts[first - 1]}, {"endOffset", line_end(line - 1)}, {"count", 0}});
      }
    }
    json functions = json::array();
    functions.push_back({{"functionName", ""}, {"isBlockCoverage", true}, {"ranges", std::move(ranges)}});
    scripts.push_back({{"url", s.url}, {"source", state.source}, {"coverage", {{"functions", std::move(functions)}}}});
  }
  return json{{"pageUrl", page.url}, {"scripts", std::move(scripts)}}.dump();
}

std::string SimSut::backend_jacoco_xml() const {
  std::lock_guard lock(mutex_);
  const SimBackend& b = config_.backend;
  std::ostringstream out;
  out << R"(<?xml version="1.0" encoding="UTF-8" standalone="yes"?>)"
      << R"(<!DOCTYPE report PUBLIC "-//JACOCO//DTD Report 1.1//EN" "report.dtd">)"
      << R"(<report name="sim"><sessioninfo id="sim" start="0" dump="0"/>)"
      << "<package name=\"" << b.package << "\">";
  constexpr int kInstructionsPerLine = 3;
  for (std::uint32_t f = 0; f < b.files; ++f) {
    out << "<sourcefile name=\"Service" << f << ".java\">";
    std::uint32_t covered = 0;
    for (std::uint32_t nr = 1; nr <= file_line_counts_[f]; ++nr) {
      const bool hit = backend_covered_[f].contains(nr);
      covered += hit;
      out << "<line nr=\"" << nr << "\" mi=\"" << (hit ? 0 : kInstructionsPerLine) << "\" ci=\""
          << (hit ? kInstructionsPerLine : 0) << "\" mb=\"0\" cb=\"0\"/>";
    }
    out << "<counter type=\"LINE\" missed=\"" << file_line_counts_[f] - covered << "\" covered=\"" << covered
        << "\"/></sourcefile>";
  }
  out << "</package></report>";
  return out.str();
}

std::string SimSut::backend_lcov() const {
  std::lock_guard lock(mutex_);
  const SimBackend& b = config_.backend;
  std::ostringstream out;
  for (std::uint32_t f = 0; f < b.files; ++f) {
    out << "SF:" << b.package << "/Service" << f << ".java\n";
    for (std::uint32_t nr = 1; nr <= file_line_counts_[f]; ++nr) {
      out << "DA:" << nr << "," << (backend_covered_[f].contains(nr) ? 1 : 0) << "\n";
    }
    out << "end_of_record\n";
  }
  return out.str();
}

void SimSut::inject_poll_failures(int status, int count) {
  std::lock_guard lock(mutex_);
  fail_status_ = status;
  fail_remaining_ = count;
}

std::optional<int> SimSut::take_poll_failure() {
  std::lock_guard lock(mutex_);
  if (fail_remaining_ <= 0) return std::nullopt;
  --fail_remaining_;
  return fail_status_;
}

// ---------------------------------------------------------------------------

SimServer::SimServer(SimSut& sut) : sut_(sut), server_(std::make_unique<httplib::Server>()) {
  server_->Get("/coverage/frontend", [this](const httplib::Request&, httplib::Response& res) {
    if (auto status = sut_.take_poll_failure()) {
      res.status = *status;
      res.set_content("injected failure", "text/plain");
      return;
    }
    res.set_content(sut_.frontend_payload(), "application/json");
  });
  server_->Get("/coverage/backend", [this](const httplib::Request& req, httplib::Response& res) {
    if (auto status = sut_.take_poll_failure()) {
      res.status = *status;
      res.set_content("injected failure", "text/plain");
      return;
    }
    if (req.get_param_value("format") == "lcov") {
      res.set_content(sut_.backend_lcov(), "text/plain");
    } else {
      res.set_content(sut_.backend_jacoco_xml(), "application/xml");
    }
  });
  server_->Get("/sim/source", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string source = sut_.script_source(req.get_param_value("url"));
    if (source.empty()) {
      res.status = 404;
      return;
    }
    res.set_content(source, "application/javascript");
  });
  server_->Post("/sim/action", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
      const std::string type = body.at("type").get<std::string>();
      json reply;
      if (type == "vertex") {
        const AssertionOutcome outcome =
            sut_.apply_vertex(body.value("model", std::string{}), body.at("element").get<std::string>());
        reply = {{"passed", outcome.passed}, {"detail", outcome.detail}};
      } else if (type == "edge") {
        const auto page = sut_.apply_edge(body.at("name").get<std::string>());
        reply = {{"page", page ? json(*page) : json(nullptr)}};
      } else {
        res.status = 400;
        res.set_content(json{{"error", "unknown action type"}}.dump(), "application/json");
        return;
      }
      res.set_content(reply.dump(), "application/json");
    } catch (const Error& e) {
      res.status = e.code() == ErrorCode::UnknownPage ? 404 : 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  });
  server_->Post("/sim/fault", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const json body = json::parse(req.body);
      sut_.inject_poll_failures(body.value("status", 500), body.value("count", 1));
      res.set_content("{}", "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  });
}

SimServer::~SimServer() { stop(); }

int SimServer::start(const std::string& host, int port) {
  host_ = host;
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
    if (port_ < 0) throw Error(ErrorCode::IoFailure, "cannot bind sim server");
  } else {
    if (!server_->bind_to_port(host, port)) {
      throw Error(ErrorCode::IoFailure, "port " + std::to_string(port) + " is in use");
    }
    port_ = port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void SimServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

void SimServer::wait() {
  if (thread_.joinable()) thread_.join();
}

std::string SimServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

// ---------------------------------------------------------------------------

AssertionOutcome SimAdapter::execute_vertex(const TestModel& model, const Vertex& vertex) {
  return sut_.apply_vertex(model.id, vertex.id);
}

std::optional<std::string> SimAdapter::execute_edge(const TestModel&, const Edge& edge) {
  return sut_.apply_edge(edge.name);
}

HttpSimAdapter::HttpSimAdapter(std::string base_url) : base_url_(std::move(base_url)) {}

json HttpSimAdapter::post(const json& body) {
  const HttpUrl url = split_http_url(base_url_);
  httplib::Client client(url.scheme_host_port);
  std::string prefix = url.path == "/" ? "" : url.path;
  auto res = client.Post(prefix + "/sim/action", body.dump(), "application/json");
  if (!res) throw Error(ErrorCode::AdapterFailure, "sim action endpoint unreachable: " + httplib::to_string(res.error()));
  if (res->status == 404) throw Error(ErrorCode::UnknownPage, res->body);
  if (res->status != 200) throw Error(ErrorCode::AdapterFailure, "sim action returned HTTP " + std::to_string(res->status));
  return json::parse(res->body);
}

AssertionOutcome HttpSimAdapter::execute_vertex(const TestModel& model, const Vertex& vertex) {
  const json reply = post({{"type", "vertex"}, {"model", model.id}, {"element", vertex.id}});
  return {reply.value("passed", true), reply.value("detail", std::string{})};
}

std::optional<std::string> HttpSimAdapter::execute_edge(const TestModel& model, const Edge& edge) {
  const json reply = post({{"type", "edge"}, {"model", model.id}, {"element", edge.id}, {"name", edge.name}});
  if (reply.contains("page") && reply["page"].is_string()) return reply["page"].get<std::string>();
  return std::nullopt;
}

}  // namespace mbtcover
