#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mbtcover/aggregation.hpp"
#include "mbtcover/walker.hpp"

namespace mbtcover {

// Run directory layout:
//   events.jsonl            one WalkEvent per line
//   snapshots/NNNNNN.<ext>  raw collector payloads
//   snapshots/index.jsonl   one SnapshotIndexEntry per payload
//   suite.json, run.json    the suite and run parameters replay needs
//   report.json, report.html
struct SnapshotIndexEntry {
  std::uint64_t n = 0;
  CoverageSource source = CoverageSource::Frontend;
  std::string collector;
  std::int64_t t_ms = 0;
  std::optional<std::string> page;
  std::string content_type;
  // seq of the last walk event applied before this snapshot.
  std::optional<std::uint64_t> after_seq;
  std::string file;

  bool operator==(const SnapshotIndexEntry&) const = default;
};

nlohmann::json to_json(const SnapshotIndexEntry& entry);
SnapshotIndexEntry snapshot_index_entry_from_json(const nlohmann::json& j);

struct RunInfo {
  std::uint64_t seed = 0;
  StopCondition stop;
  double refresh_interval_s = Aggregator::kDefaultRefreshIntervalS;
  bool lockstep = false;
  std::optional<RunStatus> status;

  bool operator==(const RunInfo&) const = default;
};

nlohmann::json to_json(const RunInfo& info);
RunInfo run_info_from_json(const nlohmann::json& j);

struct LoggedSnapshot {
  SnapshotIndexEntry entry;
  RawSnapshot raw;
};

/// Everything a run recorded, in application order.
struct RunLogs {
  std::vector<WalkEvent> events;
  std::vector<LoggedSnapshot> snapshots;
};

using LogItem = std::variant<WalkEvent, SnapshotRecord>;

/// Restores application order: snapshots without after_seq first, then each
/// event followed by the snapshots recorded right after it. Snapshots are
/// decoded again from their raw payloads.
std::vector<LogItem> interleave(const RunLogs& logs);

/// Appends to a run directory. Thread-safe; callers decide the order.
class RunLogWriter {
 public:
  explicit RunLogWriter(std::filesystem::path dir);

  void write_suite(const ModelSuite& suite);
  void write_run_info(const RunInfo& info);
  void append_event(const WalkEvent& event);
  void append_snapshot(const RawSnapshot& raw, const std::optional<std::string>& page);

  // Copy of everything appended so far.
  RunLogs logs() const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  std::ofstream events_;
  std::ofstream index_;
  RunLogs logs_;
  std::optional<std::uint64_t> last_seq_;
};

/// Reads an events log and the snapshot log beside it. `snapshots` may name
/// the snapshots directory or its index.jsonl; when absent,
/// `<events dir>/snapshots` is used if it exists.
RunLogs read_run_logs(const std::filesystem::path& events_path,
                      const std::optional<std::filesystem::path>& snapshots = std::nullopt);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace mbtcover
