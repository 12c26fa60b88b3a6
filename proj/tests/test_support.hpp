#pragma once

#include <algorithm>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include "falcon/design_graph.hpp"
#include "falcon/design_space.hpp"
#include "falcon/random.hpp"

namespace falcon::testing {

inline std::string data_path(const std::string& rel) { return std::string(FALCON_DATA_DIR) + "/" + rel; }

inline const DesignSpace& node_level_space() {
  static const DesignSpace s = DesignSpace::load(data_path("spaces/node_level.json"));
  return s;
}

inline const DesignSpace& graph_level_space() {
  static const DesignSpace s = DesignSpace::load(data_path("spaces/graph_level.json"));
  return s;
}

inline DesignSpace toy_space() {
  return DesignSpace({Dimension::numerical("lr", {0.01, 0.1}), Dimension::categorical("act", {"relu", "tanh", "gelu"})});
}

// Small space with one gated group and a three-valued flag (two active choices).
inline DesignSpace small_grouped_space() {
  return DesignSpace(
      {
          Dimension::numerical("depth", {1, 2, 3}),
          Dimension::categorical("norm", {"x", "y"}),
          Dimension::categorical("pool", {"on", "off", "alt"}),
          Dimension::categorical("kind", {"A", "B", "C"}),
          Dimension::numerical("loop", {1, 2, 3}),
      },
      {DependencyGroup{"pooling", "pool", "off", {"kind", "loop"}, {{"loop", "depth"}}}});
}

// Group-free space whose dimension sizes are drawn from rng-like integers.
inline DesignSpace random_free_space(unsigned seed) {
  std::srand(seed);
  std::vector<Dimension> dims;
  const int d = 2 + std::rand() % 3;
  for (int i = 0; i < d; ++i) {
    const int k = 1 + std::rand() % 4;
    if (std::rand() % 2) {
      std::vector<double> v;
      for (int j = 0; j < k; ++j) v.push_back(0.5 * j + i);
      dims.push_back(Dimension::numerical("n" + std::to_string(i), v));
    } else {
      std::vector<std::string> v;
      for (int j = 0; j < k; ++j) v.push_back("c" + std::to_string(j));
      dims.push_back(Dimension::categorical("c" + std::to_string(i), v));
    }
  }
  return DesignSpace(std::move(dims));
}

// Fiber structure check: fix every coordinate of a random design except one or
// two dimensions and compare the induced graph with the expected shape. A
// categorical fiber must be a clique, a numerical one a path, two numerical
// dimensions a grid. Returns the number of node pairs whose adjacency differs.
enum class FiberKind { kCategorical, kNumericalPath, kNumericalGrid };

inline std::size_t fiber_violations(const DesignSpace& space, const DesignGraph& graph, FiberKind kind, Rng& rng) {
  std::vector<std::size_t> pool;
  for (std::size_t d = 0; d < space.dimension_count(); ++d) {
    if (space.dimensions()[d].is_numerical() == (kind != FiberKind::kCategorical)) pool.push_back(d);
  }
  const std::size_t width = kind == FiberKind::kNumericalGrid ? 2 : 1;
  if (pool.size() < width) return 0;
  std::vector<std::size_t> dims;
  while (dims.size() < width) {
    const auto d = pool[rng.index(pool.size())];
    if (std::find(dims.begin(), dims.end(), d) == dims.end()) dims.push_back(d);
  }
  const Design base = space.design(static_cast<DesignId>(rng.index(space.size())));
  // Fiber members with their coordinates along the free dimensions.
  std::vector<std::pair<DesignId, std::vector<int>>> members;
  const std::size_t rows = space.dimensions()[dims[0]].size();
  const std::size_t cols = width == 2 ? space.dimensions()[dims[1]].size() : 1;
  for (std::size_t a = 0; a < rows; ++a) {
    for (std::size_t b = 0; b < cols; ++b) {
      Design d = base;
      d.choices[dims[0]] = static_cast<Choice>(a);
      if (width == 2) d.choices[dims[1]] = static_cast<Choice>(b);
      if (auto id = space.find(d)) members.push_back({*id, {static_cast<int>(a), static_cast<int>(b)}});
    }
  }
  std::size_t violations = 0;
  for (const auto& [u, cu] : members) {
    for (const auto& [v, cv] : members) {
      if (u == v) continue;
      const auto nb = graph.neighbors(u);
      const bool adjacent = std::any_of(nb.begin(), nb.end(), [&](const Neighbor& n) { return n.id == v; });
      const int manhattan = std::abs(cu[0] - cv[0]) + std::abs(cu[1] - cv[1]);
      const bool expected = kind == FiberKind::kCategorical || manhattan == 1;
      violations += adjacent != expected;
    }
  }
  return violations;
}

}  // namespace falcon::testing
