#include "mbtcover/coverage.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include <boost/property_tree/detail/rapidxml.hpp>

#include "mbtcover/error.hpp"

namespace mbtcover {

namespace {

using nlohmann::json;
namespace rx = boost::property_tree::detail::rapidxml;

// Start offsets (UTF-16 units) of each line, plus the total length.
struct LineTable {
  std::vector<std::int64_t> starts;
  std::int64_t length = 0;

  std::int64_t line_end(std::size_t line) const {
    return line + 1 < starts.size() ? starts[line + 1] : length;
  }
};

LineTable build_line_table(std::string_view source) {
  LineTable table;
  table.starts.push_back(0);
  std::int64_t pos = 0;
  for (unsigned char c : source) {
    if ((c & 0xC0) == 0x80) continue;  // UTF-8 continuation byte
    pos += (c >= 0xF0) ? 2 : 1;         // 4-byte sequences are surrogate pairs
    if (c == '\n') table.starts.push_back(pos);
  }
  table.length = pos;
  // A trailing newline does not open a further (empty) line.
  if (table.starts.size() > 1 && table.starts.back() == table.length) table.starts.pop_back();
  return table;
}

}  // namespace

FileLineCoverage v8_ranges_to_lines(const std::string& url, std::string_view source, std::vector<V8Range> ranges) {
  FileLineCoverage out;
  out.file_id = url;
  const LineTable lines = build_line_table(source);
  if (lines.length == 0) return out;

  for (V8Range& r : ranges) {
    r.start = std::clamp<std::int64_t>(r.start, 0, lines.length);
    r.end = std::clamp<std::int64_t>(r.end, 0, lines.length);
  }
  std::erase_if(ranges, [](const V8Range& r) { return r.start >= r.end; });
  std::stable_sort(ranges.begin(), ranges.end(), [](const V8Range& a, const V8Range& b) {
    return a.start != b.start ? a.start < b.start : a.end > b.end;
  });

  // Painted segments: key = segment start, value = count (-1 = not covered by any range).
  std::map<std::int64_t, std::int64_t> segments{{0, -1}, {lines.length, -1}};
  auto split_at = [&](std::int64_t at) {
    auto it = segments.lower_bound(at);
    if (it != segments.end() && it->first == at) return;
    const std::int64_t value = std::prev(it)->second;
    segments.emplace_hint(it, at, value);
  };
  for (const V8Range& r : ranges) {
    split_at(r.start);
    split_at(r.end);
    auto first = segments.find(r.start);
    first->second = std::max<std::int64_t>(r.count, 0);
    segments.erase(std::next(first), segments.find(r.end));
  }

  for (auto it = segments.begin(); std::next(it) != segments.end(); ++it) {
    if (it->second < 0) continue;
    const std::int64_t seg_start = it->first;
    const std::int64_t seg_end = std::next(it)->first;
    auto line_it = std::upper_bound(lines.starts.begin(), lines.starts.end(), seg_start);
    std::size_t line = static_cast<std::size_t>(line_it - lines.starts.begin()) - 1;
    for (; line < lines.starts.size() && lines.starts[line] < seg_end; ++line) {
      const auto number = static_cast<std::uint32_t>(line + 1);
      out.instrumented.insert(number);
      if (it->second > 0) out.covered.insert(number);
    }
  }
  return out;
}

ParseOutput parse_v8_coverage(std::string_view coverage_json, const std::map<std::string, std::string>& sources) {
  json doc;
  try {
    doc = json::parse(coverage_json.begin(), coverage_json.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedDocument, e.what());
  }
  const json* scripts = nullptr;
  if (doc.is_object() && doc.contains("result")) {
    scripts = &doc["result"];
  } else if (doc.is_array()) {
    scripts = &doc;
  }
  if (!scripts || !scripts->is_array()) {
    throw Error(ErrorCode::MalformedDocument, "expected {\"result\":[...]} precise-coverage document");
  }

  ParseOutput out;
  std::map<std::string, FileLineCoverage> by_url;
  try {
    for (const json& script : *scripts) {
      const std::string url = script.at("url").get<std::string>();
      auto src = sources.find(url);
      if (src == sources.end()) {
        out.diagnostics.push_back("MissingSource: no source text for script '" + url + "'; skipped");
        continue;
      }
      std::vector<V8Range> ranges;
      for (const json& fn : script.at("functions")) {
        for (const json& r : fn.at("ranges")) {
          ranges.push_back({r.at("startOffset").get<std::int64_t>(), r.at("endOffset").get<std::int64_t>(),
                            r.at("count").get<std::int64_t>()});
        }
      }
      FileLineCoverage file = v8_ranges_to_lines(url, src->second, std::move(ranges));
      auto [it, inserted] = by_url.emplace(url, file);
      if (!inserted) it->second = merge_coverage({it->second}, {file}).front();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedDocument, e.what());
  }
  for (auto& [url, file] : by_url) out.files.push_back(std::move(file));
  return out;
}

namespace {

using XmlNode = rx::xml_node<char>;

std::int64_t attr_int(const XmlNode& node, const char* name, bool required, const std::string& where) {
  const rx::xml_attribute<char>* attr = node.first_attribute(name);
  if (!attr) {
    if (required) throw Error(ErrorCode::SchemaViolation, where + ": missing attribute '" + name + "'");
    return 0;
  }
  std::int64_t out = 0;
  const char* begin = attr->value();
  const char* end = begin + attr->value_size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::SchemaViolation, where + ": attribute '" + name + "' is not an integer");
  }
  return out;
}

std::string attr_string(const XmlNode& node, const char* name) {
  const rx::xml_attribute<char>* attr = node.first_attribute(name);
  return attr ? std::string(attr->value(), attr->value_size()) : std::string();
}

void collect_packages(const XmlNode& node, std::map<std::string, FileLineCoverage>& files) {
  for (const XmlNode* child = node.first_node(); child; child = child->next_sibling()) {
    const std::string_view tag(child->name(), child->name_size());
    if (tag == "group") {
      collect_packages(*child, files);
    } else if (tag == "package") {
      const std::string package = attr_string(*child, "name");
      for (const XmlNode* sourcefile = child->first_node("sourcefile"); sourcefile;
           sourcefile = sourcefile->next_sibling("sourcefile")) {
        const std::string id = package + "/" + attr_string(*sourcefile, "name");
        FileLineCoverage& file = files[id];
        file.file_id = id;
        for (const XmlNode* line = sourcefile->first_node("line"); line; line = line->next_sibling("line")) {
          const std::int64_t nr = attr_int(*line, "nr", true, id + " line");
          if (nr < 1) throw Error(ErrorCode::SchemaViolation, id + ": line nr must be >= 1");
          const std::int64_t mi = attr_int(*line, "mi", false, id + " line");
          const std::int64_t ci = attr_int(*line, "ci", false, id + " line");
          if (mi + ci > 0) file.instrumented.insert(static_cast<std::uint32_t>(nr));
          if (ci > 0) file.covered.insert(static_cast<std::uint32_t>(nr));
        }
      }
    }
  }
}

}  // namespace

FileCoverageList parse_jacoco_xml(std::string_view xml_text) {
  std::vector<char> buffer(xml_text.begin(), xml_text.end());
  buffer.push_back('\0');
  rx::xml_document<char> doc;
  try {
    doc.parse<0>(buffer.data());
  } catch (const rx::parse_error& e) {
    throw Error(ErrorCode::MalformedDocument, std::string("XML: ") + e.what());
  }
  const XmlNode* report = doc.first_node("report");
  if (!report) throw Error(ErrorCode::SchemaViolation, "missing <report> root element");
  std::map<std::string, FileLineCoverage> files;
  collect_packages(*report, files);
  FileCoverageList out;
  for (auto& [id, file] : files) out.push_back(std::move(file));
  return out;
}

FileCoverageList parse_lcov(std::string_view text) {
  std::map<std::string, std::map<std::uint32_t, std::int64_t>> hits;
  std::optional<std::string> current;
  std::size_t line_no = 0;
  auto malformed = [&](const std::string& what) {
    throw Error(ErrorCode::MalformedDocument, "line " + std::to_string(line_no) + ": " + what);
  };
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
      line.remove_suffix(1);
    }
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);

    if (line.starts_with("SF:")) {
      current = std::string(line.substr(3));
      if (current->empty()) malformed("empty SF path");
      hits[*current];
    } else if (line.starts_with("DA:")) {
      if (!current) malformed("DA before SF");
      std::string_view body = line.substr(3);
      const auto comma = body.find(',');
      if (comma == std::string_view::npos) malformed("DA without hit count");
      std::string_view hit_text = body.substr(comma + 1);
      hit_text = hit_text.substr(0, hit_text.find(','));  // optional checksum
      std::uint32_t number = 0;
      std::int64_t count = 0;
      auto [p1, e1] = std::from_chars(body.data(), body.data() + comma, number);
      auto [p2, e2] = std::from_chars(hit_text.data(), hit_text.data() + hit_text.size(), count);
      if (e1 != std::errc() || p1 != body.data() + comma || number == 0) malformed("bad DA line number");
      if (e2 != std::errc() || p2 != hit_text.data() + hit_text.size()) malformed("bad DA hit count");
      auto [it, inserted] = hits[*current].emplace(number, count);
      if (!inserted) it->second = std::max(it->second, count);
    } else if (line == "end_of_record") {
      current.reset();
    }
  }
  FileCoverageList out;
  for (const auto& [path, lines] : hits) {
    FileLineCoverage file;
    file.file_id = path;
    for (const auto& [number, count] : lines) {
      file.instrumented.insert(number);
      if (count > 0) file.covered.insert(number);
    }
    out.push_back(std::move(file));
  }
  return out;
}

FileCoverageList merge_coverage(const FileCoverageList& a, const FileCoverageList& b) {
  std::map<std::string, FileLineCoverage> merged;
  for (const auto* list : {&a, &b}) {
    for (const FileLineCoverage& f : *list) {
      FileLineCoverage& dst = merged[f.file_id];
      dst.file_id = f.file_id;
      dst.instrumented.insert(f.instrumented.begin(), f.instrumented.end());
      dst.covered.insert(f.covered.begin(), f.covered.end());
      dst.instrumented.insert(f.covered.begin(), f.covered.end());
    }
  }
  FileCoverageList out;
  out.reserve(merged.size());
  for (auto& [id, f] : merged) out.push_back(std::move(f));
  return out;
}

CoverageRatio ratio(const FileCoverageList& files) {
  CoverageRatio r;
  for (const FileLineCoverage& f : files) {
    r.covered += f.covered.size();
    r.total += f.instrumented.size();
  }
  r.no_data = r.total == 0;
  r.percent = r.no_data ? 0.0 : 100.0 * static_cast<double>(r.covered) / static_cast<double>(r.total);
  return r;
}

CoverageRatio ratio_of(const FileLineCoverage& file) { return ratio(FileCoverageList{file}); }

json to_json(const FileCoverageList& files) {
  json arr = json::array();
  for (const FileLineCoverage& f : files) {
    arr.push_back({{"id", f.file_id}, {"instrumented", f.instrumented}, {"covered", f.covered}});
  }
  return json{{"files", std::move(arr)}};
}

FileCoverageList coverage_list_from_json(const json& j) {
  FileCoverageList out;
  try {
    for (const json& f : j.at("files")) {
      FileLineCoverage file;
      file.file_id = f.at("id").get<std::string>();
      file.instrumented = f.at("instrumented").get<std::set<std::uint32_t>>();
      file.covered = f.at("covered").get<std::set<std::uint32_t>>();
      out.push_back(std::move(file));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, e.what());
  }
  return out;
}

}  // namespace mbtcover
