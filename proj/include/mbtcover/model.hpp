#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace mbtcover {

// Guard grammar: `ident` or `!ident`, over boolean context variables.
struct GuardExpr {
  std::string variable;
  bool negated = false;

  bool operator==(const GuardExpr&) const = default;
};

GuardExpr parse_guard(std::string_view text);
std::string to_string(const GuardExpr& guard);

struct Action {
  std::string variable;
  bool value = true;

  bool operator==(const Action&) const = default;
};

struct Vertex {
  std::string id;
  std::string name;
  std::set<std::string> requirement_tags;
  std::optional<std::string> shared_state;

  bool operator==(const Vertex&) const = default;
};

struct Edge {
  std::string id;
  std::string name;
  std::string source_vertex_id;
  std::string target_vertex_id;
  std::set<std::string> requirement_tags;
  std::optional<GuardExpr> guard;
  std::vector<Action> actions;

  bool operator==(const Edge&) const = default;
};

/// One graph model. Vertex and edge lookups are index-based once the model
/// has been accepted into a ModelSuite (see ModelSuite::from_models).
class TestModel {
 public:
  std::string id;
  std::string name;
  std::string generator;
  std::optional<std::string> start_vertex_id;
  std::vector<Vertex> vertices;
  std::vector<Edge> edges;

  std::optional<std::size_t> vertex_index(std::string_view vertex_id) const;
  std::optional<std::size_t> edge_index(std::string_view edge_id) const;
  // Indices into `edges` of the edges leaving vertex `vertex`.
  const std::vector<std::size_t>& out_edges(std::size_t vertex) const { return out_edges_[vertex]; }
  std::size_t source_index(std::size_t edge) const { return edge_endpoints_[edge].first; }
  std::size_t target_index(std::size_t edge) const { return edge_endpoints_[edge].second; }

 private:
  friend class ModelSuite;
  void build_index();

  std::unordered_map<std::string, std::size_t> vertex_by_id_;
  std::unordered_map<std::string, std::size_t> edge_by_id_;
  std::vector<std::vector<std::size_t>> out_edges_;
  std::vector<std::pair<std::size_t, std::size_t>> edge_endpoints_;
};

struct VertexRef {
  std::size_t model = 0;
  std::size_t vertex = 0;

  auto operator<=>(const VertexRef&) const = default;
};

/// Immutable, validated collection of models. Construct only through
/// parse_model_suite or ModelSuite::from_models, both of which enforce the
/// structural invariants (unique ids, resolvable endpoints and start vertex).
class ModelSuite {
 public:
  ModelSuite() = default;

  static ModelSuite from_models(std::vector<TestModel> models, std::string source_path = {});

  const std::vector<TestModel>& models() const { return models_; }
  const std::string& source_path() const { return source_path_; }
  std::optional<std::size_t> model_index(std::string_view model_id) const;

  // Every vertex carrying the named shared state, in suite order.
  const std::vector<VertexRef>& shared_state_vertices(const std::string& name) const;
  const std::map<std::string, std::vector<VertexRef>>& shared_state_index() const {
    return shared_states_;
  }

 private:
  std::vector<TestModel> models_;
  std::string source_path_;
  std::unordered_map<std::string, std::size_t> model_by_id_;
  std::map<std::string, std::vector<VertexRef>> shared_states_;
};

ModelSuite parse_model_suite(std::string_view json_text, std::string source_path = {});
ModelSuite load_model_suite(const std::string& path);

nlohmann::json to_json(const ModelSuite& suite);
std::string serialize_model_suite(const ModelSuite& suite);

enum class Severity { Warning, Error };

struct Diagnostic {
  Severity severity = Severity::Warning;
  std::string code;
  std::string model_id;
  std::string element_id;
  std::string message;
};

std::vector<Diagnostic> validate_suite(const ModelSuite& suite);

struct ElementRef {
  std::string model_id;
  std::string element_id;

  auto operator<=>(const ElementRef&) const = default;
};

struct RequirementEntry {
  std::optional<std::string> description;
  std::vector<ElementRef> tagged_elements;
};

class RequirementRegistry {
 public:
  std::map<std::string, RequirementEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  bool contains(const std::string& id) const { return entries.contains(id); }
};

RequirementRegistry build_requirement_registry(const ModelSuite& suite);

struct SuiteStats {
  std::size_t model_count = 0;
  std::size_t vertex_count = 0;
  std::size_t edge_count = 0;
  std::size_t requirement_count = 0;

  bool operator==(const SuiteStats&) const = default;
};

SuiteStats suite_stats(const ModelSuite& suite);

}  // namespace mbtcover
