#include "mbtcover/model.hpp"

#include <cctype>
#include <deque>
#include <fstream>
#include <sstream>

#include "mbtcover/error.hpp"

namespace mbtcover {

namespace {

using nlohmann::json;

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::SchemaViolation, path + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(path, std::string("missing required field '") + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) schema_error(path + "." + key, "expected string");
  return v.get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) schema_error(path + "." + key, "expected string");
  return it->get<std::string>();
}

std::set<std::string> read_requirements(const json& obj, const std::string& path) {
  std::set<std::string> tags;
  auto it = obj.find("requirements");
  if (it == obj.end() || it->is_null()) return tags;
  if (!it->is_array()) schema_error(path + ".requirements", "expected array");
  for (std::size_t i = 0; i < it->size(); ++i) {
    const json& tag = (*it)[i];
    if (!tag.is_string() || tag.get<std::string>().empty()) {
      schema_error(path + ".requirements[" + std::to_string(i) + "]", "expected non-empty string");
    }
    tags.insert(tag.get<std::string>());
  }
  return tags;
}

std::string require_id(const json& obj, const std::string& path) {
  std::string id = require_string(obj, "id", path);
  if (id.empty()) schema_error(path + ".id", "id must be non-empty");
  return id;
}

Vertex parse_vertex(const json& v, const std::string& path) {
  if (!v.is_object()) schema_error(path, "expected object");
  Vertex vertex;
  vertex.id = require_id(v, path);
  vertex.name = require_string(v, "name", path);
  vertex.requirement_tags = read_requirements(v, path);
  vertex.shared_state = optional_string(v, "sharedState", path);
  if (vertex.shared_state && vertex.shared_state->empty()) vertex.shared_state.reset();
  return vertex;
}

Edge parse_edge(const json& e, const std::string& path) {
  if (!e.is_object()) schema_error(path, "expected object");
  Edge edge;
  edge.id = require_id(e, path);
  edge.name = require_string(e, "name", path);
  edge.source_vertex_id = require_string(e, "sourceVertexId", path);
  edge.target_vertex_id = require_string(e, "targetVertexId", path);
  edge.requirement_tags = read_requirements(e, path);
  if (auto guard = optional_string(e, "guard", path); guard && !trim(*guard).empty()) {
    try {
      edge.guard = parse_guard(*guard);
    } catch (const Error& err) {
      schema_error(path + ".guard", err.what());
    }
  }
  if (auto it = e.find("actions"); it != e.end() && !it->is_null()) {
    if (!it->is_array()) schema_error(path + ".actions", "expected array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& a = (*it)[i];
      const std::string apath = path + ".actions[" + std::to_string(i) + "]";
      if (!a.is_object()) schema_error(apath, "expected object");
      Action action;
      action.variable = require_string(a, "var", apath);
      if (action.variable.empty()) schema_error(apath + ".var", "variable must be non-empty");
      const json& value = require(a, "value", apath);
      if (!value.is_boolean()) schema_error(apath + ".value", "expected boolean");
      action.value = value.get<bool>();
      edge.actions.push_back(std::move(action));
    }
  }
  return edge;
}

TestModel parse_model(const json& m, const std::string& path) {
  if (!m.is_object()) schema_error(path, "expected object");
  TestModel model;
  model.id = require_id(m, path);
  model.name = require_string(m, "name", path);
  model.generator = require_string(m, "generator", path);
  model.start_vertex_id = optional_string(m, "startElementId", path);
  const json& vertices = require(m, "vertices", path);
  if (!vertices.is_array()) schema_error(path + ".vertices", "expected array");
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    model.vertices.push_back(parse_vertex(vertices[i], path + ".vertices[" + std::to_string(i) + "]"));
  }
  const json& edges = require(m, "edges", path);
  if (!edges.is_array()) schema_error(path + ".edges", "expected array");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    model.edges.push_back(parse_edge(edges[i], path + ".edges[" + std::to_string(i) + "]"));
  }
  return model;
}

}  // namespace

GuardExpr parse_guard(std::string_view text) {
  std::string_view s = trim(text);
  GuardExpr guard;
  if (!s.empty() && s.front() == '!') {
    guard.negated = true;
    s = trim(s.substr(1));
  }
  if (s.empty() || !is_ident_start(s.front())) {
    throw Error(ErrorCode::MalformedSpec, "guard '" + std::string(text) + "' is not `ident` or `!ident`");
  }
  for (char c : s) {
    if (!is_ident_char(c)) {
      throw Error(ErrorCode::MalformedSpec, "guard '" + std::string(text) + "' is not `ident` or `!ident`");
    }
  }
  guard.variable = std::string(s);
  return guard;
}

std::string to_string(const GuardExpr& guard) {
  return (guard.negated ? "!" : "") + guard.variable;
}

std::optional<std::size_t> TestModel::vertex_index(std::string_view vertex_id) const {
  auto it = vertex_by_id_.find(std::string(vertex_id));
  if (it == vertex_by_id_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> TestModel::edge_index(std::string_view edge_id) const {
  auto it = edge_by_id_.find(std::string(edge_id));
  if (it == edge_by_id_.end()) return std::nullopt;
  return it->second;
}

void TestModel::build_index() {
  vertex_by_id_.clear();
  edge_by_id_.clear();
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (vertices[i].id.empty()) {
      throw Error(ErrorCode::SchemaViolation, "model '" + id + "': vertex with empty id");
    }
    if (!vertex_by_id_.emplace(vertices[i].id, i).second) {
      throw Error(ErrorCode::DuplicateId, "model '" + id + "': duplicate vertex id '" + vertices[i].id + "'");
    }
  }
  out_edges_.assign(vertices.size(), {});
  edge_endpoints_.clear();
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Edge& e = edges[i];
    if (e.id.empty()) throw Error(ErrorCode::SchemaViolation, "model '" + id + "': edge with empty id");
    if (!edge_by_id_.emplace(e.id, i).second) {
      throw Error(ErrorCode::DuplicateId, "model '" + id + "': duplicate edge id '" + e.id + "'");
    }
    auto src = vertex_index(e.source_vertex_id);
    if (!src) {
      throw Error(ErrorCode::DanglingReference,
                  "model '" + id + "': edge '" + e.id + "' source '" + e.source_vertex_id + "' does not exist");
    }
    auto dst = vertex_index(e.target_vertex_id);
    if (!dst) {
      throw Error(ErrorCode::DanglingReference,
                  "model '" + id + "': edge '" + e.id + "' target '" + e.target_vertex_id + "' does not exist");
    }
    out_edges_[*src].push_back(i);
    edge_endpoints_.emplace_back(*src, *dst);
  }
  if (start_vertex_id && !vertex_index(*start_vertex_id)) {
    throw Error(ErrorCode::DanglingReference,
                "model '" + id + "': start element '" + *start_vertex_id + "' does not exist");
  }
}

ModelSuite ModelSuite::from_models(std::vector<TestModel> models, std::string source_path) {
  ModelSuite suite;
  suite.models_ = std::move(models);
  suite.source_path_ = std::move(source_path);
  for (std::size_t m = 0; m < suite.models_.size(); ++m) {
    TestModel& model = suite.models_[m];
    if (model.id.empty()) throw Error(ErrorCode::SchemaViolation, "model with empty id");
    if (!suite.model_by_id_.emplace(model.id, m).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate model id '" + model.id + "'");
    }
    model.build_index();
    for (std::size_t v = 0; v < model.vertices.size(); ++v) {
      if (const auto& state = model.vertices[v].shared_state) {
        suite.shared_states_[*state].push_back(VertexRef{m, v});
      }
    }
  }
  return suite;
}

std::optional<std::size_t> ModelSuite::model_index(std::string_view model_id) const {
  auto it = model_by_id_.find(std::string(model_id));
  if (it == model_by_id_.end()) return std::nullopt;
  return it->second;
}

const std::vector<VertexRef>& ModelSuite::shared_state_vertices(const std::string& name) const {
  static const std::vector<VertexRef> kNone;
  auto it = shared_states_.find(name);
  return it == shared_states_.end() ? kNone : it->second;
}

ModelSuite parse_model_suite(std::string_view json_text, std::string source_path) {
  json doc;
  try {
    doc = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedDocument, e.what());
  }

  // Accepted shapes: {"models":[...]}, a bare array of models, or a single model object.
  std::vector<TestModel> models;
  if (doc.is_object() && doc.contains("models")) {
    const json& arr = doc["models"];
    if (!arr.is_array()) schema_error("models", "expected array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      models.push_back(parse_model(arr[i], "models[" + std::to_string(i) + "]"));
    }
  } else if (doc.is_array()) {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      models.push_back(parse_model(doc[i], "[" + std::to_string(i) + "]"));
    }
  } else if (doc.is_object() && doc.contains("vertices")) {
    models.push_back(parse_model(doc, "model"));
  } else {
    schema_error("$", "missing required field 'models'");
  }
  return ModelSuite::from_models(std::move(models), std::move(source_path));
}

ModelSuite load_model_suite(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open model file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_model_suite(buffer.str(), path);
}

nlohmann::json to_json(const ModelSuite& suite) {
  json models = json::array();
  for (const TestModel& model : suite.models()) {
    json m;
    m["id"] = model.id;
    m["name"] = model.name;
    m["generator"] = model.generator;
    if (model.start_vertex_id) m["startElementId"] = *model.start_vertex_id;
    json vertices = json::array();
    for (const Vertex& v : model.vertices) {
      json jv{{"id", v.id}, {"name", v.name}};
      if (!v.requirement_tags.empty()) jv["requirements"] = v.requirement_tags;
      if (v.shared_state) jv["sharedState"] = *v.shared_state;
      vertices.push_back(std::move(jv));
    }
    json edges = json::array();
    for (const Edge& e : model.edges) {
      json je{{"id", e.id},
              {"name", e.name},
              {"sourceVertexId", e.source_vertex_id},
              {"targetVertexId", e.target_vertex_id}};
      if (!e.requirement_tags.empty()) je["requirements"] = e.requirement_tags;
      if (e.guard) je["guard"] = to_string(*e.guard);
      if (!e.actions.empty()) {
        json actions = json::array();
        for (const Action& a : e.actions) actions.push_back({{"var", a.variable}, {"value", a.value}});
        je["actions"] = std::move(actions);
      }
      edges.push_back(std::move(je));
    }
    m["vertices"] = std::move(vertices);
    m["edges"] = std::move(edges);
    models.push_back(std::move(m));
  }
  return json{{"models", std::move(models)}};
}

std::string serialize_model_suite(const ModelSuite& suite) { return to_json(suite).dump(2) + "\n"; }

std::vector<Diagnostic> validate_suite(const ModelSuite& suite) {
  std::vector<Diagnostic> out;
  const auto& models = suite.models();
  if (!models.empty() && !models.front().start_vertex_id) {
    out.push_back({Severity::Error, "missing_entry_start", models.front().id, {},
                   "entry model '" + models.front().id + "' has no startElementId"});
  }
  for (const TestModel& model : models) {
    if (!model.start_vertex_id) continue;
    std::vector<bool> seen(model.vertices.size(), false);
    std::deque<std::size_t> queue;
    const std::size_t start = *model.vertex_index(*model.start_vertex_id);
    seen[start] = true;
    queue.push_back(start);
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      for (std::size_t e : model.out_edges(v)) {
        const std::size_t t = model.target_index(e);
        if (!seen[t]) {
          seen[t] = true;
          queue.push_back(t);
        }
      }
    }
    for (std::size_t v = 0; v < model.vertices.size(); ++v) {
      if (!seen[v]) {
        out.push_back({Severity::Warning, "unreachable_vertex", model.id, model.vertices[v].id,
                       "unreachable vertex " + model.vertices[v].id});
      }
    }
  }
  return out;
}

RequirementRegistry build_requirement_registry(const ModelSuite& suite) {
  RequirementRegistry registry;
  for (const TestModel& model : suite.models()) {
    for (const Vertex& v : model.vertices) {
      for (const auto& tag : v.requirement_tags) {
        registry.entries[tag].tagged_elements.push_back({model.id, v.id});
      }
    }
    for (const Edge& e : model.edges) {
      for (const auto& tag : e.requirement_tags) {
        registry.entries[tag].tagged_elements.push_back({model.id, e.id});
      }
    }
  }
  return registry;
}

SuiteStats suite_stats(const ModelSuite& suite) {
  SuiteStats stats;
  stats.model_count = suite.models().size();
  for (const TestModel& model : suite.models()) {
    stats.vertex_count += model.vertices.size();
    stats.edge_count += model.edges.size();
  }
  stats.requirement_count = build_requirement_registry(suite).size();
  return stats;
}

}  // namespace mbtcover
