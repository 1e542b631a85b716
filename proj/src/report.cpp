#include "mbtcover/report.hpp"

#include <algorithm>
#include <cmath>

#include "mbtcover/error.hpp"

namespace mbtcover {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json to_json(const FileRow& r) {
  return {{"id", r.id}, {"covered", r.covered}, {"instrumented", r.instrumented}, {"percent", r.percent}};
}

FileRow file_row_from_json(const json& j) {
  return {j.at("id").get<std::string>(), j.at("covered").get<std::size_t>(),
          j.at("instrumented").get<std::size_t>(), j.at("percent").get<double>()};
}

json to_json(const SuiteStats& s) {
  return {{"models", s.model_count},
          {"vertices", s.vertex_count},
          {"edges", s.edge_count},
          {"requirements", s.requirement_count}};
}

std::vector<FileRow> file_rows(const FileStore& store) {
  std::vector<FileRow> rows;
  for (const auto& [id, f] : store) {
    const CoverageRatio r = ratio_of(f);
    rows.push_back({id, f.covered.size(), f.instrumented.size(), r.percent});
  }
  return rows;
}

}  // namespace

json to_json(const RunReport& r) {
  json requirements = json::array();
  for (const RequirementRow& row : r.requirements) {
    requirements.push_back({{"id", row.id}, {"covered", row.covered}, {"elements", row.elements}});
  }
  json frontend = json::array();
  for (const FileRow& row : r.frontend) frontend.push_back(to_json(row));
  json backend = json::array();
  for (const FileRow& row : r.backend) backend.push_back(to_json(row));
  json series = json::array();
  for (const MetricPoint& p : r.series) series.push_back(mbtcover::to_json(p));
  json failures = json::array();
  for (const AssertionFailureRow& f : r.assertion_failures) {
    failures.push_back({{"seq", f.seq}, {"model", f.model}, {"element", f.element}, {"detail", f.detail}});
  }
  json j{{"format_version", r.format_version},
         {"suite", to_json(r.suite)},
         {"model", mbtcover::to_json(r.model)},
         {"percentages",
          {{"fe_cumulative_pct", r.fe_cumulative_pct},
           {"fe_page_pct", r.fe_page_pct},
           {"be_cumulative_pct", r.be_cumulative_pct},
           {"req_pct", r.req_pct}}},
         {"requirements", std::move(requirements)},
         {"coverage", {{"frontend", std::move(frontend)}, {"backend", std::move(backend)}}},
         {"series", std::move(series)},
         {"status", r.status},
         {"seed", r.seed},
         {"stop", r.stop},
         {"assertion_failures", std::move(failures)},
         {"diagnostics", r.diagnostics}};
  j["current_page"] = r.current_page ? json(*r.current_page) : json(nullptr);
  return j;
}

RunReport run_report_from_json(const json& j) {
  try {
    RunReport r;
    r.format_version = j.at("format_version").get<std::string>();
    if (r.format_version != "1") {
      throw Error(ErrorCode::SchemaViolation, "unsupported report format_version '" + r.format_version + "'");
    }
    const json& s = j.at("suite");
    r.suite = {s.at("models").get<std::size_t>(), s.at("vertices").get<std::size_t>(),
               s.at("edges").get<std::size_t>(), s.at("requirements").get<std::size_t>()};
    r.model = model_stats_from_json(j.at("model"));
    const json& p = j.at("percentages");
    r.fe_cumulative_pct = p.at("fe_cumulative_pct").get<double>();
    r.fe_page_pct = p.at("fe_page_pct").get<double>();
    r.be_cumulative_pct = p.at("be_cumulative_pct").get<double>();
    r.req_pct = p.at("req_pct").get<double>();
    if (!j.at("current_page").is_null()) r.current_page = j["current_page"].get<std::string>();
    for (const json& row : j.at("requirements")) {
      r.requirements.push_back({row.at("id").get<std::string>(), row.at("covered").get<bool>(),
                                row.at("elements").get<std::vector<std::string>>()});
    }
    for (const json& row : j.at("coverage").at("frontend")) r.frontend.push_back(file_row_from_json(row));
    for (const json& row : j.at("coverage").at("backend")) r.backend.push_back(file_row_from_json(row));
    for (const json& point : j.at("series")) r.series.push_back(metric_point_from_json(point));
    r.status = j.at("status").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.stop = j.at("stop").get<std::string>();
    for (const json& f : j.at("assertion_failures")) {
      r.assertion_failures.push_back({f.at("seq").get<std::uint64_t>(), f.at("model").get<std::string>(),
                                      f.at("element").get<std::string>(), f.at("detail").get<std::string>()});
    }
    r.diagnostics = j.at("diagnostics").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("report: ") + e.what());
  }
}

std::string serialize_report(const RunReport& report) { return to_json(report).dump(2) + "\n"; }

RunReport build_report(const ModelSuite& suite, const RunInfo& info, const RunLogs& logs) {
  Aggregator agg(suite, info.refresh_interval_s);
  const auto interval_ms = std::max<std::int64_t>(1, std::llround(info.refresh_interval_s * 1000.0));
  std::int64_t next_grid = 0;
  std::int64_t now = 0;
  RunReport report;

  auto sample_grid_before = [&](std::int64_t t) {
    while (next_grid < t) {
      agg.sample_metrics(next_grid);
      next_grid += interval_ms;
    }
  };

  for (const LogItem& item : interleave(logs)) {
    if (const auto* event = std::get_if<WalkEvent>(&item)) {
      now = std::max(now, event->t_ms);
      sample_grid_before(now);
      agg.ingest_walk_event(*event);
      if (event->kind == EventKind::Navigation) agg.sample_metrics(now);
      if (event->kind == EventKind::VertexExecuted && event->failure) {
        report.assertion_failures.push_back(
            {event->seq, event->model.value_or(""), event->element.value_or(""), *event->failure});
      }
    } else {
      const SnapshotRecord& snap = std::get<SnapshotRecord>(item);
      now = std::max(now, snap.raw.t_ms);
      sample_grid_before(now);
      agg.ingest_snapshot(snap.decoded);
    }
  }
  agg.sample_metrics(now);

  report.suite = suite_stats(suite);
  report.model = agg.model_stats();
  report.fe_cumulative_pct = agg.fe_cumulative().percent;
  report.fe_page_pct = agg.fe_page().percent;
  report.be_cumulative_pct = agg.be_cumulative().percent;
  report.req_pct = agg.requirements().percent;
  report.current_page = agg.current_page();
  for (const auto& [id, entry] : agg.registry().entries) {
    RequirementRow row{id, agg.covered_requirements().contains(id), {}};
    for (const ElementRef& ref : entry.tagged_elements) row.elements.push_back(ref.model_id + "/" + ref.element_id);
    report.requirements.push_back(std::move(row));
  }
  report.frontend = file_rows(agg.fe_cumulative_files());
  report.backend = file_rows(agg.be_cumulative_files());
  report.series = agg.series();
  report.status = agg.run_status() ? std::string(to_string(*agg.run_status())) : "running";
  report.seed = info.seed;
  report.stop = to_string(info.stop);
  report.diagnostics = agg.diagnostics();
  return report;
}

namespace {

constexpr const char* kHtmlHead = R"html(<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>Coverage report</title>
<style>
body { font: 14px/1.4 system-ui, sans-serif; margin: 24px; color: #222; }
h1 { font-size: 20px; } h2 { font-size: 16px; margin-top: 28px; }
table { border-collapse: collapse; margin: 8px 0; }
td, th { border: 1px solid #ccc; padding: 3px 8px; text-align: right; }
td:first-child, th:first-child { text-align: left; }
.counters { display: flex; gap: 16px; flex-wrap: wrap; }
.counter { border: 1px solid #ccc; padding: 8px 12px; border-radius: 4px; }
.counter b { display: block; font-size: 18px; }
.legend span { margin-right: 14px; }
svg { border: 1px solid #ddd; background: #fafafa; }
.no { color: #b00; } .yes { color: #080; }
</style>
</head>
<body>
<h1>Coverage report</h1>
<div id="summary"></div>
<h2>Coverage over time</h2>
<div class="legend" id="legend-main"></div>
<svg id="chart-main" width="900" height="280"></svg>
<h2>Current page front-end coverage</h2>
<div class="legend" id="legend-page"></div>
<svg id="chart-page" width="900" height="220"></svg>
<h2>Model counters</h2>
<div class="counters" id="counters"></div>
<h2>Requirements</h2>
<table id="requirements"><tr><th>Requirement</th><th>Covered</th><th>Elements</th></tr></table>
<h2>Front-end files</h2>
<table id="frontend"><tr><th>File</th><th>Covered</th><th>Instrumented</th><th>%</th></tr></table>
<h2>Back-end files</h2>
<table id="backend"><tr><th>File</th><th>Covered</th><th>Instrumented</th><th>%</th></tr></table>
<h2>Assertion failures</h2>
<table id="failures"><tr><th>Seq</th><th>Model</th><th>Element</th><th>Detail</th></tr></table>
<script type="application/json" id="report-data">
)html";

constexpr const char* kHtmlTail = R"html(
</script>
<script>
(function () {
  var report = JSON.parse(document.getElementById('report-data').textContent);
  var NS = 'http://www.w3.org/2000/svg';
  function el(tag, attrs, parent) {
    var e = document.createElementNS(NS, tag);
    for (var k in attrs) e.setAttribute(k, attrs[k]);
    if (parent) parent.appendChild(e);
    return e;
  }
  function text(tag, content) { var e = document.createElement(tag); e.textContent = content; return e; }
  function row(table, cells) {
    var tr = document.createElement('tr');
    cells.forEach(function (c) { tr.appendChild(text('td', c)); });
    document.getElementById(table).appendChild(tr);
  }
  function fmt(v) { return (Math.round(v * 100) / 100).toFixed(2); }

  var points = report.series;
  var tMax = points.reduce(function (m, p) { return Math.max(m, p.t_ms); }, 1);
  function chart(svgId, legendId, lines) {
    var svg = document.getElementById(svgId);
    var w = +svg.getAttribute('width'), h = +svg.getAttribute('height'), pad = 36;
    var x = function (t) { return pad + (w - 2 * pad) * t / tMax; };
    var y = function (v) { return h - pad - (h - 2 * pad) * v / 100; };
    [0, 25, 50, 75, 100].forEach(function (v) {
      el('line', {x1: pad, x2: w - pad, y1: y(v), y2: y(v), stroke: '#e3e3e3'}, svg);
      el('text', {x: 4, y: y(v) + 4, 'font-size': 10}, svg).textContent = v + '%';
    });
    el('text', {x: w - pad, y: h - 8, 'font-size': 10, 'text-anchor': 'end'}, svg).textContent =
        (tMax / 1000).toFixed(1) + ' s';
    var legend = document.getElementById(legendId);
    lines.forEach(function (line) {
      if (line.pts.length === 0) return;
      var d = line.pts.map(function (p, i) { return (i ? 'L' : 'M') + x(p.t_ms) + ',' + y(p.value); }).join(' ');
      el('path', {d: d, fill: 'none', stroke: line.color, 'stroke-width': 2}, svg);
      if (line.label) {
        var s = document.createElement('span');
        s.style.color = line.color;
        s.textContent = '■ ' + line.label;
        legend.appendChild(s);
      }
    });
  }
  function series(metric) { return points.filter(function (p) { return p.metric === metric; }); }
  chart('chart-main', 'legend-main', [
    {label: 'front-end (cumulative)', color: '#e67e22', pts: series('fe_cumulative_pct')},
    {label: 'back-end', color: '#2980b9', pts: series('be_cumulative_pct')},
    {label: 'requirements', color: '#27ae60', pts: series('req_pct')}
  ]);
  var palette = ['#e67e22', '#f1c40f', '#8e44ad', '#16a085', '#c0392b', '#2c3e50'];
  var segments = [];
  series('fe_page_pct').forEach(function (p) {
    var last = segments[segments.length - 1];
    if (!last || last.page !== p.page_url || (p.value === 0 && last.pts.length && last.pts[last.pts.length - 1].value > 0)) {
      last = {page: p.page_url, pts: []};
      segments.push(last);
    }
    last.pts.push(p);
  });
  chart('chart-page', 'legend-page', segments.map(function (s, i) {
    return {label: s.page || '(no page)', color: palette[i % palette.length], pts: s.pts};
  }));

  var m = report.model, pc = report.percentages;
  document.getElementById('summary').textContent =
      'Status: ' + report.status + ' | stop: ' + report.stop + ' | seed: ' + report.seed +
      ' | front-end ' + fmt(pc.fe_cumulative_pct) + '% | back-end ' + fmt(pc.be_cumulative_pct) +
      '% | requirements ' + fmt(pc.req_pct) + '%';
  [['Models reached', m.models_reached + ' / ' + m.models_total],
   ['Vertices covered', m.vertices_covered + ' / ' + m.vertices_total],
   ['Vertices executed', m.vertices_executed],
   ['Edges covered', m.edges_covered + ' / ' + m.edges_total]].forEach(function (c) {
    var d = document.createElement('div');
    d.className = 'counter';
    d.appendChild(text('b', String(c[1])));
    d.appendChild(document.createTextNode(c[0]));
    document.getElementById('counters').appendChild(d);
  });
  report.requirements.forEach(function (r) {
    row('requirements', [r.id, r.covered ? 'yes' : 'no', r.elements.join(', ')]);
  });
  report.coverage.frontend.forEach(function (f) { row('frontend', [f.id, f.covered, f.instrumented, fmt(f.percent)]); });
  report.coverage.backend.forEach(function (f) { row('backend', [f.id, f.covered, f.instrumented, fmt(f.percent)]); });
  report.assertion_failures.forEach(function (f) { row('failures', [f.seq, f.model, f.element, f.detail]); });
})();
</script>
</body>
</html>
)html";

}  // namespace

std::string render_report_html(const RunReport& report) {
  std::string data = to_json(report).dump();
  // Keep the embedded JSON from closing the script element.
  std::string escaped;
  escaped.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i] == '<' && i + 1 < data.size() && (data[i + 1] == '/' || data[i + 1] == '!')) {
      escaped += "\\u003c";
    } else {
      escaped += data[i];
    }
  }
  return std::string(kHtmlHead) + escaped + kHtmlTail;
}

ExportPaths write_report(const fs::path& dir, const RunReport& report) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create '" + dir.string() + "': " + ec.message());
  ExportPaths paths{dir / "report.json", dir / "report.html"};
  write_file(paths.json_path, serialize_report(report));
  write_file(paths.html_path, render_report_html(report));
  return paths;
}

}  // namespace mbtcover
