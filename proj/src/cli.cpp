#include "mbtcover/cli.hpp"

#include <atomic>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <memory>
#include <thread>

#include <CLI11.hpp>

#include "mbtcover/api_server.hpp"
#include "mbtcover/coverage.hpp"
#include "mbtcover/error.hpp"
#include "mbtcover/model.hpp"
#include "mbtcover/report.hpp"
#include "mbtcover/run_log.hpp"
#include "mbtcover/session.hpp"
#include "mbtcover/sim.hpp"
#include "mbtcover/suite_gen.hpp"
#include "mbtcover/walker.hpp"

namespace mbtcover {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunArgs {
  std::string models;
  std::string adapter = "sim";
  std::string stop = "edge_coverage(100)";
  std::uint64_t seed = 1;
  double refresh_interval = Aggregator::kDefaultRefreshIntervalS;
  std::optional<int> port;
  std::string host = "127.0.0.1";
  std::optional<std::string> fe_collector;
  std::optional<std::string> be_collector;
  std::string out = "mbtcover-run";
  std::string sim_config = "default";
  std::optional<std::string> adapter_url;
  int step_delay_ms = 0;
  bool lockstep = false;
  std::optional<double> poll_interval;
  double linger_s = 0;
  std::optional<std::string> static_dir;
  std::uint64_t step_cap = 100000;
};

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  StopCondition stop;
  try {
    stop = parse_stop_condition(a.stop);
  } catch (const Error& e) {
    throw UsageError(std::string("--stop: ") + e.what());
  }
  stop.safety_step_cap = a.step_cap;
  try {
    Aggregator::check_refresh_interval(a.refresh_interval);
  } catch (const Error& e) {
    throw UsageError(std::string("--refresh-interval: ") + e.what());
  }
  if (a.adapter == "http" && !a.adapter_url) throw UsageError("--adapter http needs --adapter-url");

  ModelSuite suite = load_model_suite(a.models);
  for (const Diagnostic& d : validate_suite(suite)) {
    err << (d.severity == Severity::Error ? "error" : "warning") << ": " << d.code << ": " << d.message << "\n";
  }

  std::unique_ptr<SimSut> sut;
  std::unique_ptr<SimServer> sim_server;
  std::unique_ptr<Adapter> adapter;
  std::optional<std::string> fe = a.fe_collector;
  std::optional<std::string> be = a.be_collector;
  if (a.adapter == "sim") {
    sut = std::make_unique<SimSut>(load_sim_config(a.sim_config));
    adapter = std::make_unique<SimAdapter>(*sut);
    if (!fe || !be) {
      sim_server = std::make_unique<SimServer>(*sut);
      sim_server->start("127.0.0.1", 0);
      if (!fe) fe = sim_server->base_url() + "/coverage/frontend";
      if (!be) be = sim_server->base_url() + "/coverage/backend";
    }
  } else {
    adapter = std::make_unique<HttpSimAdapter>(*a.adapter_url);
  }

  SessionConfig config;
  config.info.seed = a.seed;
  config.info.stop = stop;
  config.info.refresh_interval_s = a.refresh_interval;
  config.info.lockstep = a.lockstep;
  config.out_dir = a.out;
  config.fe_collector_url = fe;
  config.be_collector_url = be;
  config.poll_interval_s = a.poll_interval;
  config.step_delay = std::chrono::milliseconds(a.step_delay_ms);

  RunSession session(std::move(suite), *adapter, config);
  ApiServerOptions api_options;
  if (a.static_dir) api_options.static_dir = *a.static_dir;
  ApiServer api(session, api_options);
  const int port = api.start(a.host, resolve_port(a.port, 8080));
  out << "api: http://" << a.host << ":" << port << "\n" << std::flush;

  g_interrupted = false;
  auto previous = std::signal(SIGINT, on_signal);
  session.start();
  std::atomic<bool> done{false};
  std::thread watcher([&] {
    while (!done) {
      if (g_interrupted) session.cancel();
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  });
  session.wait();
  done = true;
  watcher.join();

  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(a.linger_s);
  while (!g_interrupted && std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  std::signal(SIGINT, previous);
  api.stop();
  if (sim_server) sim_server->stop();

  for (const CollectorStats& s : session.collector_stats()) {
    for (const std::string& d : s.diagnostics) err << "collector: " << d << "\n";
  }
  const json status = session.status_json();
  out << "status: " << status.value("state", "?") << "\n";
  out << "model: " << status["model"].dump() << "\n";
  out << "percentages: " << status["percentages"].dump() << "\n";
  out << "run directory: " << a.out << "\n";
  if (auto e = session.error()) err << "error: " << *e << "\n";
  return session.exit_code();
}

std::map<std::string, std::string> load_sources(const fs::path& dir, const json& doc) {
  std::map<std::string, std::string> sources;
  const json& scripts = doc.is_object() && doc.contains("result") ? doc["result"] : doc;
  if (!scripts.is_array()) return sources;
  for (const json& script : scripts) {
    if (!script.is_object() || !script.contains("url") || !script["url"].is_string()) continue;
    const std::string url = script["url"].get<std::string>();
    std::string path = url;
    if (auto scheme = path.find("://"); scheme != std::string::npos) {
      const auto slash = path.find('/', scheme + 3);
      path = slash == std::string::npos ? "" : path.substr(slash);
    }
    path = path.substr(0, path.find_first_of("?#"));
    while (!path.empty() && path.front() == '/') path.erase(0, 1);
    for (const fs::path& candidate : {dir / path, dir / fs::path(path).filename()}) {
      if (!path.empty() && fs::is_regular_file(candidate)) {
        sources.emplace(url, read_file(candidate));
        break;
      }
    }
  }
  return sources;
}

int cmd_parse(const std::string& format, const std::string& input, const std::optional<std::string>& sources_dir,
              const std::string& output, std::ostream& out, std::ostream& err) {
  const std::string text = read_file(input);
  FileCoverageList files;
  if (format == "jacoco") {
    files = parse_jacoco_xml(text);
  } else if (format == "lcov") {
    files = parse_lcov(text);
  } else {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedDocument, e.what());
    }
    if (doc.is_object() && doc.contains("scripts")) {
      // Collector wire format: sources travel with the coverage.
      files = decode_snapshot({CoverageSource::Frontend, "cli", 0, "application/json", text}).files;
    } else {
      const auto sources = sources_dir ? load_sources(*sources_dir, doc) : std::map<std::string, std::string>{};
      ParseOutput parsed = parse_v8_coverage(text, sources);
      for (const std::string& d : parsed.diagnostics) err << d << "\n";
      files = std::move(parsed.files);
    }
  }
  const std::string body = to_json(files).dump(2) + "\n";
  if (output == "-") {
    out << body;
  } else {
    write_file(output, body);
  }
  return kExitOk;
}

int cmd_replay(const std::string& events, const std::optional<std::string>& snapshots,
               const std::optional<std::string>& models, const std::optional<std::string>& run_info,
               const std::string& out_dir, std::ostream& out) {
  const fs::path events_path(events);
  const fs::path run_dir = events_path.parent_path();
  const ModelSuite suite = load_model_suite(models.value_or((run_dir / "suite.json").string()));
  const fs::path info_path = run_info ? fs::path(*run_info) : run_dir / "run.json";
  RunInfo info;
  try {
    info = run_info_from_json(json::parse(read_file(info_path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedDocument, info_path.string() + ": " + e.what());
  }
  const RunLogs logs = read_run_logs(events_path, snapshots ? std::optional<fs::path>(*snapshots) : std::nullopt);
  const RunReport report = build_report(suite, info, logs);
  const ExportPaths paths = write_report(out_dir, report);
  out << paths.json_path.string() << "\n" << paths.html_path.string() << "\n";
  return kExitOk;
}

int cmd_gen_suite(const SuiteGenParams& params, const std::string& out_path, std::ostream& out) {
  const ModelSuite suite = generate_suite(params);
  const std::string body = serialize_model_suite(suite);
  if (out_path == "-") {
    out << body;
  } else {
    write_file(out_path, body);
    const SuiteStats s = suite_stats(suite);
    out << "models=" << s.model_count << " vertices=" << s.vertex_count << " edges=" << s.edge_count
        << " requirements=" << s.requirement_count << "\n";
  }
  return kExitOk;
}

int cmd_sim(std::optional<int> port, const std::string& host, const std::string& config, std::ostream& out) {
  SimSut sut(load_sim_config(config));
  SimServer server(sut);
  const int bound = server.start(host, resolve_port(port, 8090));
  out << "sim: " << server.base_url() << "\n" << std::flush;
  g_interrupted = false;
  auto previous = std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  std::signal(SIGINT, previous);
  server.stop();
  (void)bound;
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Model-based test runner with live code and requirement coverage", "mbtcover"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "walk a model suite against an adapter and record coverage");
  run_cmd->add_option("--models", run.models, "model suite JSON")->required();
  run_cmd->add_option("--adapter", run.adapter, "sim | http")->check(CLI::IsMember({"sim", "http"}));
  run_cmd->add_option("--stop", run.stop, "stop condition, e.g. edge_coverage(100)");
  run_cmd->add_option("--seed", run.seed);
  run_cmd->add_option("--refresh-interval", run.refresh_interval, "seconds between metric samples");
  run_cmd->add_option("--port", run.port, "API port (default MBTCOV_PORT or 8080; 0 picks one)");
  run_cmd->add_option("--host", run.host);
  run_cmd->add_option("--fe-collector", run.fe_collector, "front-end coverage endpoint URL");
  run_cmd->add_option("--be-collector", run.be_collector, "back-end coverage endpoint URL");
  run_cmd->add_option("--out", run.out, "run directory");
  run_cmd->add_option("--sim-config", run.sim_config, "built-in sim config name or JSON path");
  run_cmd->add_option("--adapter-url", run.adapter_url, "base URL of an out-of-process sim");
  run_cmd->add_option("--step-delay", run.step_delay_ms, "pause before each step, ms");
  run_cmd->add_flag("--lockstep", run.lockstep, "poll collectors and sample after every element");
  run_cmd->add_option("--poll-interval", run.poll_interval, "collector cadence, seconds");
  run_cmd->add_option("--linger", run.linger_s, "keep serving the API this many seconds after the run");
  run_cmd->add_option("--static-dir", run.static_dir, "dashboard assets served at /");
  run_cmd->add_option("--step-cap", run.step_cap, "safety cap on executed elements");

  std::string format;
  std::string input;
  std::optional<std::string> sources;
  std::string output = "-";
  auto* parse_cmd = app.add_subcommand("parse", "convert a coverage report to the unified JSON form");
  parse_cmd->add_option("--format", format)->required()->check(CLI::IsMember({"v8", "jacoco", "lcov"}));
  parse_cmd->add_option("--input", input)->required();
  parse_cmd->add_option("--sources", sources, "directory with script sources (v8)");
  parse_cmd->add_option("--output", output);

  std::string events;
  std::optional<std::string> snapshots;
  std::optional<std::string> replay_models;
  std::optional<std::string> replay_info;
  std::string replay_out;
  auto* replay_cmd = app.add_subcommand("replay", "rebuild the report of a recorded run");
  replay_cmd->add_option("--events", events)->required();
  replay_cmd->add_option("--snapshots", snapshots, "snapshots directory or its index.jsonl");
  replay_cmd->add_option("--models", replay_models, "defaults to suite.json beside the events");
  replay_cmd->add_option("--run-info", replay_info, "defaults to run.json beside the events");
  replay_cmd->add_option("--out", replay_out)->required();

  SuiteGenParams gen;
  std::string gen_out = "-";
  auto* gen_cmd = app.add_subcommand("gen-suite", "generate a synthetic model suite");
  gen_cmd->add_option("--models", gen.models)->required();
  gen_cmd->add_option("--vertices", gen.vertices)->required();
  gen_cmd->add_option("--edges", gen.edges)->required();
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--out", gen_out);
  std::string gen_sim = "default";
  gen_cmd->add_option("--sim-config", gen_sim, "sim config whose pages goto: edges target");

  std::optional<int> sim_port;
  std::string sim_host = "127.0.0.1";
  std::string sim_config = "default";
  auto* sim_cmd = app.add_subcommand("sim", "serve the simulated system under test");
  sim_cmd->add_option("--port", sim_port);
  sim_cmd->add_option("--host", sim_host);
  sim_cmd->add_option("--config", sim_config);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run, out, err);
    if (*parse_cmd) return cmd_parse(format, input, sources, output, out, err);
    if (*replay_cmd) return cmd_replay(events, snapshots, replay_models, replay_info, replay_out, out);
    if (*gen_cmd) {
      gen.pages = page_urls(load_sim_config(gen_sim));
      return cmd_gen_suite(gen, gen_out, out);
    }
    if (*sim_cmd) return cmd_sim(sim_port, sim_host, sim_config, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitUsage;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace mbtcover
