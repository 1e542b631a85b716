#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mbtcover/model.hpp"

namespace mbtcover {

struct SuiteGenParams {
  std::size_t models = 1;
  std::size_t vertices = 1;
  std::size_t edges = 0;
  std::uint64_t seed = 0;
  // Fraction of vertices/edges that receive a requirement tag.
  double requirement_ratio = 0.3;
  // Fraction of edges named `goto:<page>`, cycling through `pages`.
  double navigation_ratio = 0.125;
  std::vector<std::string> pages;
};

/// Builds a suite with exactly the requested model, vertex and edge counts.
///
/// Each model is a chain hub -> ... -> exit plus random extra edges, so every
/// vertex is reachable from the hub and can reach the exit. Hubs and exits all
/// carry the shared state `HOME`; the exit has no outgoing edges, which makes
/// the walker jump to another `HOME` vertex. Together the models therefore form
/// one strongly connected space under edges plus shared-state jumps.
///
/// Throws Error(OutOfRange) when the counts cannot be realised without
/// parallel edges or self loops.
ModelSuite generate_suite(const SuiteGenParams& params);

}  // namespace mbtcover
