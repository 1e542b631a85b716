#include <deque>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "mbtcover/model.hpp"
#include "mbtcover/suite_gen.hpp"
#include "test_support.hpp"

namespace mbtcover {
namespace {

const char* kTriangle = R"json({"models":[{"id":"m","name":"tri","generator":"random(edge_coverage(100))",
  "startElementId":"A",
  "vertices":[{"id":"A","name":"A"},{"id":"B","name":"B"},{"id":"C","name":"C"}],
  "edges":[{"id":"e1","name":"ab","sourceVertexId":"A","targetVertexId":"B"},
           {"id":"e2","name":"bc","sourceVertexId":"B","targetVertexId":"C"},
           {"id":"e3","name":"ca","sourceVertexId":"C","targetVertexId":"A"}]}]})json";

TEST(ParseModelSuite, MinimalModel) {
  const ModelSuite suite = parse_model_suite(
      R"json({"models":[{"id":"m1","name":"one","generator":"random(vertex_coverage(100))","startElementId":"v1",
          "vertices":[{"id":"v1","name":"only"}],"edges":[]}]})json");
  ASSERT_EQ(suite.models().size(), 1u);
  EXPECT_EQ(suite.models()[0].vertices.size(), 1u);
  EXPECT_EQ(suite.models()[0].edges.size(), 0u);
  EXPECT_EQ(suite.models()[0].start_vertex_id, "v1");
}

TEST(ParseModelSuite, AcceptsBareArrayAndSingleModel) {
  const std::string model = R"({"id":"m","name":"n","generator":"g","vertices":[{"id":"a","name":"a"}],"edges":[]})";
  EXPECT_EQ(parse_model_suite("[" + model + "]").models().size(), 1u);
  EXPECT_EQ(parse_model_suite(model).models().size(), 1u);
}

TEST(ParseModelSuite, DanglingTargetIsNamed) {
  bool matched = false;
  const std::string msg = testing::error_message(
      [] {
        parse_model_suite(R"({"models":[{"id":"m","name":"n","generator":"g",
          "vertices":[{"id":"v1","name":"a"}],
          "edges":[{"id":"e1","name":"x","sourceVertexId":"v1","targetVertexId":"vX"}]}]})");
      },
      ErrorCode::DanglingReference, &matched);
  EXPECT_TRUE(matched) << msg;
  EXPECT_NE(msg.find("vX"), std::string::npos) << msg;
}

TEST(ParseModelSuite, DanglingStartVertex) {
  EXPECT_MBT_ERROR(parse_model_suite(R"({"models":[{"id":"m","name":"n","generator":"g","startElementId":"nope",
      "vertices":[{"id":"v1","name":"a"}],"edges":[]}]})"),
                   ErrorCode::DanglingReference);
}

TEST(ParseModelSuite, DuplicateIds) {
  EXPECT_MBT_ERROR(parse_model_suite(R"({"models":[{"id":"m","name":"n","generator":"g",
      "vertices":[{"id":"v1","name":"a"},{"id":"v1","name":"b"}],"edges":[]}]})"),
                   ErrorCode::DuplicateId);
  EXPECT_MBT_ERROR(parse_model_suite(R"({"models":[
      {"id":"m","name":"n","generator":"g","vertices":[{"id":"v1","name":"a"}],"edges":[]},
      {"id":"m","name":"n","generator":"g","vertices":[{"id":"v1","name":"a"}],"edges":[]}]})"),
                   ErrorCode::DuplicateId);
}

TEST(ParseModelSuite, MalformedAndSchemaErrors) {
  EXPECT_MBT_ERROR(parse_model_suite("{not json"), ErrorCode::MalformedDocument);
  bool matched = false;
  const std::string msg = testing::error_message(
      [] {
        parse_model_suite(R"({"models":[{"id":"m","name":"n","generator":"g",
          "vertices":[{"id":"v1"}],"edges":[]}]})");
      },
      ErrorCode::SchemaViolation, &matched);
  EXPECT_TRUE(matched) << msg;
  EXPECT_NE(msg.find("vertices[0]"), std::string::npos) << "message should carry the path: " << msg;
}

TEST(ParseModelSuite, GuardsActionsAndSharedState) {
  const ModelSuite suite = parse_model_suite(R"({"models":[{"id":"m","name":"n","generator":"g","startElementId":"a",
      "vertices":[{"id":"a","name":"a","sharedState":"HOME","requirements":["R1"]},{"id":"b","name":"b","sharedState":""}],
      "edges":[{"id":"e","name":"x","sourceVertexId":"a","targetVertexId":"b","guard":"!ready",
                "actions":[{"var":"ready","value":true}],"requirements":["R2"]}]}]})");
  const TestModel& m = suite.models()[0];
  EXPECT_EQ(m.vertices[0].shared_state, "HOME");
  EXPECT_FALSE(m.vertices[1].shared_state.has_value());
  ASSERT_TRUE(m.edges[0].guard.has_value());
  EXPECT_EQ(*m.edges[0].guard, (GuardExpr{"ready", true}));
  ASSERT_EQ(m.edges[0].actions.size(), 1u);
  EXPECT_EQ(m.edges[0].actions[0], (Action{"ready", true}));
  EXPECT_EQ(suite.shared_state_vertices("HOME").size(), 1u);
}

TEST(Guard, Grammar) {
  EXPECT_EQ(parse_guard("flag"), (GuardExpr{"flag", false}));
  EXPECT_EQ(parse_guard("!flag"), (GuardExpr{"flag", true}));
  EXPECT_EQ(parse_guard(" !_x1 "), (GuardExpr{"_x1", true}));
  EXPECT_MBT_ERROR(parse_guard(""), ErrorCode::MalformedSpec);
  EXPECT_MBT_ERROR(parse_guard("!!x"), ErrorCode::MalformedSpec);
  EXPECT_MBT_ERROR(parse_guard("a b"), ErrorCode::MalformedSpec);
  EXPECT_MBT_ERROR(parse_guard("x == 1"), ErrorCode::MalformedSpec);
  EXPECT_MBT_ERROR(parse_model_suite(R"({"models":[{"id":"m","name":"n","generator":"g","startElementId":"a",
      "vertices":[{"id":"a","name":"a"}],
      "edges":[{"id":"e","name":"x","sourceVertexId":"a","targetVertexId":"a","guard":"!!x"}]}]})"),
                   ErrorCode::SchemaViolation);
}

TEST(ValidateSuite, TriangleIsClean) { EXPECT_TRUE(validate_suite(parse_model_suite(kTriangle)).empty()); }

TEST(ValidateSuite, IsolatedVertexWarns) {
  const ModelSuite suite = parse_model_suite(R"({"models":[{"id":"m","name":"n","generator":"g","startElementId":"A",
      "vertices":[{"id":"A","name":"A"},{"id":"B","name":"B"},{"id":"C","name":"C"},{"id":"D","name":"D"}],
      "edges":[{"id":"e1","name":"ab","sourceVertexId":"A","targetVertexId":"B"},
               {"id":"e2","name":"bc","sourceVertexId":"B","targetVertexId":"C"},
               {"id":"e3","name":"ca","sourceVertexId":"C","targetVertexId":"A"}]}]})");
  const auto diags = validate_suite(suite);
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_EQ(diags[0].severity, Severity::Warning);
  EXPECT_EQ(diags[0].message, "unreachable vertex D");
}

TEST(ValidateSuite, SharedRequirementTagIsLegal) {
  const ModelSuite suite = parse_model_suite(R"({"models":[
      {"id":"m1","name":"n","generator":"g","startElementId":"a","vertices":[{"id":"a","name":"a","requirements":["R1"]}],"edges":[]},
      {"id":"m2","name":"n","generator":"g","startElementId":"a","vertices":[{"id":"a","name":"a","requirements":["R1"]}],"edges":[]}]})");
  EXPECT_TRUE(validate_suite(suite).empty());
}

TEST(RequirementRegistry, HandEnumeratedExample) {
  const ModelSuite suite = parse_model_suite(R"({"models":[{"id":"m","name":"n","generator":"g","startElementId":"v1",
      "vertices":[{"id":"v1","name":"a","requirements":["R1"]},{"id":"v2","name":"b"},{"id":"v3","name":"c","requirements":["R2"]}],
      "edges":[{"id":"e1","name":"x","sourceVertexId":"v1","targetVertexId":"v2"},
               {"id":"e2","name":"y","sourceVertexId":"v2","targetVertexId":"v3","requirements":["R1"]}]}]})");
  const RequirementRegistry reg = build_requirement_registry(suite);
  ASSERT_EQ(reg.size(), 2u);
  EXPECT_EQ(reg.entries.at("R1").tagged_elements, (std::vector<ElementRef>{{"m", "v1"}, {"m", "e2"}}));
  EXPECT_EQ(reg.entries.at("R2").tagged_elements, (std::vector<ElementRef>{{"m", "v3"}}));
}

TEST(RequirementRegistry, EmptyAndDistinctCount) {
  EXPECT_TRUE(build_requirement_registry(parse_model_suite(kTriangle)).empty());
  const ModelSuite suite = parse_model_suite(R"({"models":[
      {"id":"m1","name":"n","generator":"g","vertices":[{"id":"a","name":"a","requirements":["R1","R2"]}],"edges":[]},
      {"id":"m2","name":"n","generator":"g","vertices":[{"id":"a","name":"a","requirements":["R2","R3"]}],"edges":[]},
      {"id":"m3","name":"n","generator":"g","vertices":[{"id":"a","name":"a","requirements":["R4","R5"]}],"edges":[]}]})");
  EXPECT_EQ(build_requirement_registry(suite).size(), 5u);
}

TEST(SuiteStats, EmptySuite) { EXPECT_EQ(suite_stats(ModelSuite{}), (SuiteStats{0, 0, 0, 0})); }

TEST(SuiteStats, RoundTripKeepsStructure) {
  const ModelSuite original = generate_suite({.models = 4, .vertices = 30, .edges = 50, .seed = 3, .pages = {"/p"}});
  const ModelSuite again = parse_model_suite(serialize_model_suite(original));
  EXPECT_EQ(suite_stats(original), suite_stats(again));
  ASSERT_EQ(original.models().size(), again.models().size());
  for (std::size_t m = 0; m < original.models().size(); ++m) {
    EXPECT_EQ(original.models()[m].vertices, again.models()[m].vertices);
    EXPECT_EQ(original.models()[m].edges, again.models()[m].edges);
    EXPECT_EQ(original.models()[m].start_vertex_id, again.models()[m].start_vertex_id);
  }
  EXPECT_EQ(serialize_model_suite(original), serialize_model_suite(again));
}

// ---------------------------------------------------------------------------
// Generator

using Node = std::pair<std::size_t, std::size_t>;

// Successors under edges plus shared-state jumps from dead ends, computed
// straight from the public model data.
std::map<Node, std::vector<Node>> walk_graph(const ModelSuite& suite) {
  std::map<std::string, std::vector<Node>> by_state;
  for (std::size_t m = 0; m < suite.models().size(); ++m) {
    const auto& vs = suite.models()[m].vertices;
    for (std::size_t v = 0; v < vs.size(); ++v) {
      if (vs[v].shared_state) by_state[*vs[v].shared_state].push_back({m, v});
    }
  }
  std::map<Node, std::vector<Node>> graph;
  for (std::size_t m = 0; m < suite.models().size(); ++m) {
    const TestModel& model = suite.models()[m];
    std::map<std::string, std::size_t> index;
    for (std::size_t v = 0; v < model.vertices.size(); ++v) index[model.vertices[v].id] = v;
    for (std::size_t v = 0; v < model.vertices.size(); ++v) graph[{m, v}];
    for (const Edge& e : model.edges) {
      graph[{m, index.at(e.source_vertex_id)}].push_back({m, index.at(e.target_vertex_id)});
    }
    for (std::size_t v = 0; v < model.vertices.size(); ++v) {
      const Vertex& vx = model.vertices[v];
      if (!graph[{m, v}].empty() || !vx.shared_state) continue;
      for (const Node& other : by_state[*vx.shared_state]) {
        if (other != Node{m, v}) graph[{m, v}].push_back(other);
      }
    }
  }
  return graph;
}

std::set<Node> bfs(const std::map<Node, std::vector<Node>>& graph, Node from) {
  std::set<Node> seen{from};
  std::deque<Node> queue{from};
  while (!queue.empty()) {
    const Node n = queue.front();
    queue.pop_front();
    for (const Node& next : graph.at(n)) {
      if (seen.insert(next).second) queue.push_back(next);
    }
  }
  return seen;
}

TEST(GenerateSuite, FixtureScaleCountsAreExact) {
  const ModelSuite suite = generate_suite({.models = 18, .vertices = 177, .edges = 260, .seed = 7, .pages = {"/a", "/b"}});
  const SuiteStats stats = suite_stats(suite);
  EXPECT_EQ(stats.model_count, 18u);
  EXPECT_EQ(stats.vertex_count, 177u);
  EXPECT_EQ(stats.edge_count, 260u);
  EXPECT_GT(stats.requirement_count, 0u);
}

TEST(GenerateSuite, StronglyConnectedUnderEdgesAndJumps) {
  for (std::uint64_t seed : {1u, 7u, 19u, 123u}) {
    const ModelSuite suite = generate_suite({.models = 6, .vertices = 40, .edges = 70, .seed = seed, .pages = {"/p"}});
    const auto graph = walk_graph(suite);
    const TestModel& entry = suite.models()[0];
    const Node start{0, *entry.vertex_index(*entry.start_vertex_id)};
    EXPECT_EQ(bfs(graph, start).size(), graph.size()) << "seed " << seed;
    for (const auto& [node, next] : graph) {
      EXPECT_TRUE(bfs(graph, node).contains(start)) << "seed " << seed;
    }
  }
}

TEST(GenerateSuite, NoSelfLoopsOrParallelEdges) {
  const ModelSuite suite = generate_suite({.models = 18, .vertices = 177, .edges = 260, .seed = 7, .pages = {"/a"}});
  for (const TestModel& m : suite.models()) {
    std::set<std::pair<std::string, std::string>> pairs;
    for (const Edge& e : m.edges) {
      EXPECT_NE(e.source_vertex_id, e.target_vertex_id);
      EXPECT_TRUE(pairs.insert({e.source_vertex_id, e.target_vertex_id}).second);
    }
  }
}

TEST(GenerateSuite, RequirementTagsOnAboutThirtyPercent) {
  const ModelSuite suite = generate_suite({.models = 18, .vertices = 177, .edges = 260, .seed = 7, .pages = {"/a"}});
  std::size_t tagged = 0;
  std::size_t total = 0;
  std::set<std::string> distinct;
  for (const TestModel& m : suite.models()) {
    for (const Vertex& v : m.vertices) {
      ++total;
      tagged += !v.requirement_tags.empty();
      distinct.insert(v.requirement_tags.begin(), v.requirement_tags.end());
    }
    for (const Edge& e : m.edges) {
      ++total;
      tagged += !e.requirement_tags.empty();
      distinct.insert(e.requirement_tags.begin(), e.requirement_tags.end());
    }
  }
  const double share = static_cast<double>(tagged) / static_cast<double>(total);
  EXPECT_NEAR(share, 0.30, 0.05);
  EXPECT_EQ(build_requirement_registry(suite).size(), distinct.size());
}

TEST(GenerateSuite, NavigationEdgesTargetConfiguredPages) {
  const ModelSuite suite = generate_suite({.models = 5, .vertices = 50, .edges = 80, .seed = 2, .pages = {"/x", "/y"}});
  std::size_t nav = 0;
  for (const TestModel& m : suite.models()) {
    for (const Edge& e : m.edges) {
      if (e.name.rfind("goto:", 0) != 0) continue;
      ++nav;
      EXPECT_TRUE(e.name == "goto:/x" || e.name == "goto:/y") << e.name;
    }
  }
  EXPECT_GT(nav, 0u);
}

TEST(GenerateSuite, DeterministicPerSeed) {
  const SuiteGenParams p{.models = 3, .vertices = 20, .edges = 30, .seed = 5, .pages = {"/p"}};
  EXPECT_EQ(serialize_model_suite(generate_suite(p)), serialize_model_suite(generate_suite(p)));
  SuiteGenParams q = p;
  q.seed = 6;
  EXPECT_NE(serialize_model_suite(generate_suite(p)), serialize_model_suite(generate_suite(q)));
}

TEST(GenerateSuite, InfeasibleCountsRejected) {
  EXPECT_MBT_ERROR(generate_suite({.models = 3, .vertices = 2, .edges = 5}), ErrorCode::OutOfRange);
  EXPECT_MBT_ERROR(generate_suite({.models = 1, .vertices = 3, .edges = 50}), ErrorCode::OutOfRange);
}

}  // namespace
}  // namespace mbtcover
