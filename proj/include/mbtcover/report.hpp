#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mbtcover/aggregation.hpp"
#include "mbtcover/model.hpp"
#include "mbtcover/run_log.hpp"
#include "mbtcover/walker.hpp"

namespace mbtcover {

struct FileRow {
  std::string id;
  std::size_t covered = 0;
  std::size_t instrumented = 0;
  double percent = 0.0;

  bool operator==(const FileRow&) const = default;
};

struct RequirementRow {
  std::string id;
  bool covered = false;
  std::vector<std::string> elements;  // "<model>/<element>"

  bool operator==(const RequirementRow&) const = default;
};

struct AssertionFailureRow {
  std::uint64_t seq = 0;
  std::string model;
  std::string element;
  std::string detail;

  bool operator==(const AssertionFailureRow&) const = default;
};

struct RunReport {
  std::string format_version = "1";
  SuiteStats suite;
  ModelCoverageStats model;
  double fe_cumulative_pct = 0.0;
  double fe_page_pct = 0.0;
  double be_cumulative_pct = 0.0;
  double req_pct = 0.0;
  std::optional<std::string> current_page;
  std::vector<RequirementRow> requirements;
  std::vector<FileRow> frontend;
  std::vector<FileRow> backend;
  std::vector<MetricPoint> series;
  // completed | stalled | stopped | running
  std::string status = "running";
  std::uint64_t seed = 0;
  std::string stop;
  std::vector<AssertionFailureRow> assertion_failures;
  std::vector<std::string> diagnostics;

  bool operator==(const RunReport&) const = default;
};

nlohmann::json to_json(const RunReport& report);
RunReport run_report_from_json(const nlohmann::json& j);
// Canonical text: sorted keys, two-space indent, trailing newline.
std::string serialize_report(const RunReport& report);

/// Rebuilds the report from the logs alone. The series is sampled on a grid
/// of the refresh interval over log time, plus one sample after each
/// navigation and a final one, so live export and replay agree byte for byte.
RunReport build_report(const ModelSuite& suite, const RunInfo& info, const RunLogs& logs);

std::string render_report_html(const RunReport& report);

struct ExportPaths {
  std::filesystem::path json_path;
  std::filesystem::path html_path;
};

ExportPaths write_report(const std::filesystem::path& dir, const RunReport& report);

}  // namespace mbtcover
