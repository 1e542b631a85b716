#include "mbtcover/suite_gen.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>

#include "mbtcover/error.hpp"

namespace mbtcover {

namespace {

constexpr const char* kHomeState = "HOME";

std::string numbered(const char* prefix, std::size_t a, std::size_t b) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02zu_%03zu", prefix, a, b);
  return buf;
}

}  // namespace

ModelSuite generate_suite(const SuiteGenParams& params) {
  const std::size_t m_count = params.models;
  if (m_count == 0) {
    if (params.vertices != 0 || params.edges != 0) {
      throw Error(ErrorCode::OutOfRange, "vertices/edges requested for an empty suite");
    }
    return ModelSuite::from_models({});
  }
  if (params.vertices < m_count) {
    throw Error(ErrorCode::OutOfRange, "need at least one vertex per model");
  }

  std::vector<std::size_t> sizes(m_count, params.vertices / m_count);
  for (std::size_t i = 0; i < params.vertices % m_count; ++i) ++sizes[i];

  // Chain edges are mandatory; the remainder are placed where capacity exists.
  std::size_t chain_edges = params.vertices - m_count;
  if (params.edges < chain_edges) {
    throw Error(ErrorCode::OutOfRange, "need at least vertices - models edges (" +
                                           std::to_string(chain_edges) + ")");
  }
  std::vector<std::size_t> capacity(m_count);
  std::size_t total_capacity = 0;
  for (std::size_t i = 0; i < m_count; ++i) {
    const std::size_t n = sizes[i];
    capacity[i] = n >= 2 ? (n - 1) * (n - 1) - (n - 1) : 0;
    total_capacity += capacity[i];
  }
  std::size_t extra = params.edges - chain_edges;
  if (extra > total_capacity) {
    throw Error(ErrorCode::OutOfRange, "too many edges for the vertex budget");
  }

  std::mt19937_64 rng(params.seed);
  std::vector<std::size_t> extras(m_count, 0);
  while (extra > 0) {
    std::uniform_int_distribution<std::size_t> pick(0, m_count - 1);
    const std::size_t m = pick(rng);
    if (extras[m] < capacity[m]) {
      ++extras[m];
      --extra;
    }
  }

  std::bernoulli_distribution tag_coin(params.requirement_ratio);
  std::bernoulli_distribution nav_coin(params.pages.empty() ? 0.0 : params.navigation_ratio);
  const std::size_t pool =
      std::max<std::size_t>(1, static_cast<std::size_t>(params.requirement_ratio *
                                                        static_cast<double>(params.vertices + params.edges) / 3.0));
  std::uniform_int_distribution<std::size_t> tag_pick(1, pool);
  auto maybe_tag = [&](std::set<std::string>& tags) {
    if (tag_coin(rng)) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "REQ-%03zu", tag_pick(rng));
      tags.insert(buf);
    }
  };
  std::size_t nav_counter = 0;

  std::vector<TestModel> models;
  for (std::size_t m = 0; m < m_count; ++m) {
    TestModel model;
    char buf[32];
    std::snprintf(buf, sizeof buf, "model_%02zu", m);
    model.id = buf;
    model.name = "Generated model " + std::to_string(m);
    model.generator = "random(edge_coverage(100))";
    const std::size_t n = sizes[m];
    for (std::size_t k = 0; k < n; ++k) {
      Vertex v;
      v.id = numbered("v", m, k);
      v.name = k == 0 ? "hub" : (k + 1 == n ? "exit" : "state_" + std::to_string(k));
      if (k == 0 || k + 1 == n) v.shared_state = kHomeState;
      maybe_tag(v.requirement_tags);
      model.vertices.push_back(std::move(v));
    }
    model.start_vertex_id = model.vertices.front().id;

    std::set<std::pair<std::size_t, std::size_t>> used;
    auto add_edge = [&](std::size_t src, std::size_t dst) {
      used.emplace(src, dst);
      Edge e;
      e.id = numbered("e", m, model.edges.size());
      if (nav_coin(rng)) {
        e.name = "goto:" + params.pages[nav_counter++ % params.pages.size()];
      } else {
        e.name = "action_" + std::to_string(model.edges.size());
      }
      e.source_vertex_id = model.vertices[src].id;
      e.target_vertex_id = model.vertices[dst].id;
      maybe_tag(e.requirement_tags);
      model.edges.push_back(std::move(e));
    };
    for (std::size_t k = 0; k + 1 < n; ++k) add_edge(k, k + 1);
    if (extras[m] > 0) {
      // Sources exclude the exit (last vertex); no self loops, no parallel edges.
      std::vector<std::pair<std::size_t, std::size_t>> free_pairs;
      for (std::size_t s = 0; s + 1 < n; ++s) {
        for (std::size_t t = 0; t < n; ++t) {
          if (s != t && !used.contains({s, t})) free_pairs.emplace_back(s, t);
        }
      }
      std::shuffle(free_pairs.begin(), free_pairs.end(), rng);
      for (std::size_t i = 0; i < extras[m]; ++i) add_edge(free_pairs[i].first, free_pairs[i].second);
    }
    models.push_back(std::move(model));
  }
  return ModelSuite::from_models(std::move(models), "generated");
}

}  // namespace mbtcover
