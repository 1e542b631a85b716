#include "mbtcover/run_log.hpp"

#include <cstdio>
#include <map>
#include <sstream>

#include "mbtcover/error.hpp"

namespace mbtcover {

namespace fs = std::filesystem;
using nlohmann::json;

json to_json(const SnapshotIndexEntry& e) {
  json j{{"n", e.n},
         {"source", to_string(e.source)},
         {"collector", e.collector},
         {"t_ms", e.t_ms},
         {"content_type", e.content_type},
         {"file", e.file}};
  if (e.page) j["page"] = *e.page;
  if (e.after_seq) j["after_seq"] = *e.after_seq;
  return j;
}

SnapshotIndexEntry snapshot_index_entry_from_json(const json& j) {
  try {
    SnapshotIndexEntry e;
    e.n = j.at("n").get<std::uint64_t>();
    e.source = coverage_source_from_string(j.at("source").get<std::string>());
    e.collector = j.at("collector").get<std::string>();
    e.t_ms = j.at("t_ms").get<std::int64_t>();
    e.content_type = j.at("content_type").get<std::string>();
    e.file = j.at("file").get<std::string>();
    if (j.contains("page")) e.page = j["page"].get<std::string>();
    if (j.contains("after_seq")) e.after_seq = j["after_seq"].get<std::uint64_t>();
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::SchemaViolation, std::string("snapshot index entry: ") + ex.what());
  }
}

json to_json(const RunInfo& info) {
  json j{{"seed", info.seed},
         {"stop", to_string(info.stop)},
         {"safety_step_cap", info.stop.safety_step_cap},
         {"refresh_interval_s", info.refresh_interval_s},
         {"lockstep", info.lockstep}};
  if (info.status) j["status"] = to_string(*info.status);
  return j;
}

RunInfo run_info_from_json(const json& j) {
  try {
    RunInfo info;
    info.seed = j.at("seed").get<std::uint64_t>();
    info.stop = parse_stop_condition(j.at("stop").get<std::string>());
    info.stop.safety_step_cap = j.value("safety_step_cap", info.stop.safety_step_cap);
    info.refresh_interval_s = j.value("refresh_interval_s", Aggregator::kDefaultRefreshIntervalS);
    info.lockstep = j.value("lockstep", false);
    if (j.contains("status")) info.status = run_status_from_string(j["status"].get<std::string>());
    return info;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::SchemaViolation, std::string("run info: ") + ex.what());
  }
}

std::vector<LogItem> interleave(const RunLogs& logs) {
  std::map<std::uint64_t, std::vector<const LoggedSnapshot*>> after;
  SnapshotDecoder decoder;
  std::vector<LogItem> out;
  out.reserve(logs.events.size() + logs.snapshots.size());
  for (const LoggedSnapshot& s : logs.snapshots) {
    if (s.entry.after_seq) {
      after[*s.entry.after_seq].push_back(&s);
    } else {
      out.emplace_back(SnapshotRecord{s.raw, decoder.decode(s.raw)});
    }
  }
  for (const WalkEvent& e : logs.events) {
    out.emplace_back(e);
    auto it = after.find(e.seq);
    if (it == after.end()) continue;
    for (const LoggedSnapshot* s : it->second) out.emplace_back(SnapshotRecord{s->raw, decoder.decode(s->raw)});
    after.erase(it);
  }
  // Snapshots pointing at events missing from the log keep their relative order at the end.
  for (const auto& [seq, list] : after) {
    for (const LoggedSnapshot* s : list) out.emplace_back(SnapshotRecord{s->raw, decoder.decode(s->raw)});
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, std::string_view content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write '" + path.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write '" + path.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot write '" + path.string() + "': " + ec.message());
}

namespace {

std::string extension_for(const RawSnapshot& raw) {
  const std::string type = raw.content_type.substr(0, raw.content_type.find(';'));
  if (type == "application/json") return "json";
  if (type == "text/plain") return "txt";
  return "xml";
}

}  // namespace

RunLogWriter::RunLogWriter(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_ / "snapshots", ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create run directory '" + dir_.string() + "': " + ec.message());
  events_.open(dir_ / "events.jsonl", std::ios::binary | std::ios::trunc);
  index_.open(dir_ / "snapshots" / "index.jsonl", std::ios::binary | std::ios::trunc);
  if (!events_ || !index_) throw Error(ErrorCode::IoFailure, "cannot open logs in '" + dir_.string() + "'");
}

void RunLogWriter::write_suite(const ModelSuite& suite) {
  write_file(dir_ / "suite.json", serialize_model_suite(suite));
}

void RunLogWriter::write_run_info(const RunInfo& info) {
  write_file(dir_ / "run.json", to_json(info).dump(2) + "\n");
}

void RunLogWriter::append_event(const WalkEvent& event) {
  std::lock_guard lock(mutex_);
  events_ << to_jsonl(event);
  events_.flush();
  logs_.events.push_back(event);
  last_seq_ = event.seq;
}

void RunLogWriter::append_snapshot(const RawSnapshot& raw, const std::optional<std::string>& page) {
  std::lock_guard lock(mutex_);
  SnapshotIndexEntry entry;
  entry.n = logs_.snapshots.size() + 1;
  entry.source = raw.source;
  entry.collector = raw.collector_id;
  entry.t_ms = raw.t_ms;
  entry.page = page;
  entry.content_type = raw.content_type;
  entry.after_seq = last_seq_;
  char name[32];
  std::snprintf(name, sizeof name, "%06llu.", static_cast<unsigned long long>(entry.n));
  entry.file = name + extension_for(raw);
  write_file(dir_ / "snapshots" / entry.file, raw.body);
  index_ << to_json(entry).dump() << '\n';
  index_.flush();
  logs_.snapshots.push_back({std::move(entry), raw});
}

RunLogs RunLogWriter::logs() const {
  std::lock_guard lock(mutex_);
  return logs_;
}

RunLogs read_run_logs(const fs::path& events_path, const std::optional<fs::path>& snapshots) {
  RunLogs logs;
  {
    std::istringstream in(read_file(events_path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        logs.events.push_back(walk_event_from_json(json::parse(line)));
      } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedDocument,
                    events_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  fs::path index_path;
  if (snapshots) {
    index_path = fs::is_directory(*snapshots) ? *snapshots / "index.jsonl" : *snapshots;
  } else {
    index_path = events_path.parent_path() / "snapshots" / "index.jsonl";
    if (!fs::exists(index_path)) return logs;
  }
  const fs::path snapshot_dir = index_path.parent_path();
  std::istringstream in(read_file(index_path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedDocument, index_path.string() + ": " + e.what());
    }
    LoggedSnapshot s{snapshot_index_entry_from_json(j), {}};
    s.raw = {s.entry.source, s.entry.collector, s.entry.t_ms, s.entry.content_type,
             read_file(snapshot_dir / s.entry.file)};
    logs.snapshots.push_back(std::move(s));
  }
  return logs;
}

}  // namespace mbtcover
