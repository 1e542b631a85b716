#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace mbtcover {

/// Line coverage of one file. Lines are 1-based; covered is always a subset
/// of instrumented.
struct FileLineCoverage {
  std::string file_id;
  std::set<std::uint32_t> instrumented;
  std::set<std::uint32_t> covered;

  bool operator==(const FileLineCoverage&) const = default;
};

using FileCoverageList = std::vector<FileLineCoverage>;

struct ParseOutput {
  FileCoverageList files;
  // Non-fatal problems, e.g. scripts whose source text was unavailable.
  std::vector<std::string> diagnostics;
};

/// DevTools precise-coverage JSON plus script sources (url -> text).
///
/// Ranges of each script are applied in (startOffset asc, endOffset desc)
/// order, each one overwriting the counts of the offsets it spans. A line is
/// instrumented if any range overlaps it and covered if any of its offsets
/// ends up with a positive count. Offsets are UTF-16 code units, as V8 reports
/// them; a line owns its terminating newline.
ParseOutput parse_v8_coverage(std::string_view coverage_json, const std::map<std::string, std::string>& sources);

/// Same conversion for one script whose ranges are already extracted.
struct V8Range {
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::int64_t count = 0;
};
FileLineCoverage v8_ranges_to_lines(const std::string& url, std::string_view source,
                                    std::vector<V8Range> ranges);

/// JaCoCo XML report. file id = `<package>/<sourcefile>`; a line is
/// instrumented when mi + ci > 0 and covered when ci > 0.
FileCoverageList parse_jacoco_xml(std::string_view xml_text);

/// LCOV tracefile (`SF:` / `DA:` / `end_of_record`). Duplicate DA entries for a
/// line keep the maximum hit count.
FileCoverageList parse_lcov(std::string_view text);

/// Per-file union of instrumented and covered line sets, sorted by file id.
FileCoverageList merge_coverage(const FileCoverageList& a, const FileCoverageList& b);

struct CoverageRatio {
  double percent = 0.0;
  std::uint64_t covered = 0;
  std::uint64_t total = 0;
  bool no_data = true;
};

CoverageRatio ratio(const FileCoverageList& files);
CoverageRatio ratio_of(const FileLineCoverage& file);

nlohmann::json to_json(const FileCoverageList& files);
FileCoverageList coverage_list_from_json(const nlohmann::json& j);

}  // namespace mbtcover
