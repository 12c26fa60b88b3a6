#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "falcon/design_space.hpp"
#include "falcon/errors.hpp"

namespace falcon {

struct LabeledEdge {
  DesignId u;
  DesignId v;
  std::uint16_t label;
};

// The complete design graph of a space: nodes are design ids, edges join
// designs at distance 1. Immutable after build().
class DesignGraph {
 public:
  static DesignGraph build(const DesignSpace& space);
  // Arbitrary adjacency; used for tests and diameter checks.
  static DesignGraph from_edges(std::size_t node_count, std::span<const LabeledEdge> edges);

  std::size_t node_count() const { return offsets_.size() - 1; }
  std::size_t edge_count() const { return adjacency_.size() / 2; }
  std::span<const Neighbor> neighbors(DesignId id) const {
    return {adjacency_.data() + offsets_[id], adjacency_.data() + offsets_[id + 1]};
  }
  // Each undirected edge once, u < v, ordered by (u, v).
  std::vector<LabeledEdge> edges() const;

 private:
  std::vector<std::size_t> offsets_{0};
  std::vector<Neighbor> adjacency_;
};

// Materializes neighbor lists on first use. Lets search walk spaces whose full
// graph is never built. Not thread-safe.
class LazyDesignGraph {
 public:
  explicit LazyDesignGraph(const DesignSpace& space) : space_(&space), cache_(space.size()) {}

  std::size_t node_count() const { return cache_.size(); }
  std::span<const Neighbor> neighbors(DesignId id) const {
    if (id >= cache_.size()) throw DomainError("design id " + std::to_string(id) + " is not in the space");
    auto& slot = cache_[id];
    if (!slot) {
      slot = space_->neighbors(id);
      ++materialized_;
    }
    return *slot;
  }
  std::size_t materialized() const { return materialized_; }

 private:
  const DesignSpace* space_;
  mutable std::vector<std::optional<std::vector<Neighbor>>> cache_;
  mutable std::size_t materialized_ = 0;
};

// All nodes at BFS distance 1..hops from any seed, seeds excluded. Sorted.
template <class Graph>
std::vector<DesignId> multi_hop_neighbors(const Graph& graph, std::span<const DesignId> seeds, int hops) {
  if (hops < 1) throw DomainError("multi_hop_neighbors: hop count must be at least 1");
  const std::size_t n = graph.node_count();
  std::vector<int> depth(n, -1);
  std::vector<DesignId> frontier;
  for (DesignId s : seeds) {
    if (s >= n) throw DomainError("multi_hop_neighbors: unknown seed id " + std::to_string(s));
    if (depth[s] < 0) {
      depth[s] = 0;
      frontier.push_back(s);
    }
  }
  std::vector<DesignId> out;
  for (int level = 1; level <= hops && !frontier.empty(); ++level) {
    std::vector<DesignId> next;
    for (DesignId u : frontier) {
      for (const Neighbor& nb : graph.neighbors(u)) {
        if (depth[nb.id] >= 0) continue;
        depth[nb.id] = level;
        next.push_back(nb.id);
        out.push_back(nb.id);
      }
    }
    frontier = std::move(next);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Induced subgraph over explored ∪ candidates. Local node order is ascending
// design id; adjacency is stored in local indices.
struct DesignSubgraph {
  std::vector<DesignId> nodes;
  std::vector<bool> explored;
  std::vector<std::uint32_t> offsets{0};
  std::vector<std::uint32_t> adjacency;
  std::vector<std::uint16_t> labels;

  std::size_t size() const { return nodes.size(); }
  std::size_t edge_count() const { return adjacency.size() / 2; }
  std::size_t degree(std::size_t i) const { return offsets[i + 1] - offsets[i]; }
  std::optional<std::size_t> index_of(DesignId id) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), id);
    if (it == nodes.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - nodes.begin());
  }
};

template <class Graph>
DesignSubgraph build_subgraph(const Graph& graph, std::span<const DesignId> explored,
                              std::span<const DesignId> candidates) {
  DesignSubgraph sub;
  std::vector<std::pair<DesignId, bool>> members;
  members.reserve(explored.size() + candidates.size());
  for (DesignId id : explored) members.emplace_back(id, true);
  for (DesignId id : candidates) members.emplace_back(id, false);
  std::sort(members.begin(), members.end());
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i].first >= graph.node_count()) {
      throw DomainError("build_subgraph: unknown design id " + std::to_string(members[i].first));
    }
    if (i > 0 && members[i].first == members[i - 1].first) {
      throw DomainError("build_subgraph: design " + std::to_string(members[i].first) +
                        " appears twice or in both explored and candidate sets");
    }
  }
  sub.nodes.reserve(members.size());
  sub.explored.reserve(members.size());
  for (const auto& [id, ex] : members) {
    sub.nodes.push_back(id);
    sub.explored.push_back(ex);
  }
  sub.offsets.reserve(members.size() + 1);
  for (std::size_t i = 0; i < sub.nodes.size(); ++i) {
    for (const Neighbor& nb : graph.neighbors(sub.nodes[i])) {
      if (auto j = sub.index_of(nb.id)) {
        sub.adjacency.push_back(static_cast<std::uint32_t>(*j));
        sub.labels.push_back(nb.label);
      }
    }
    sub.offsets.push_back(static_cast<std::uint32_t>(sub.adjacency.size()));
  }
  return sub;
}

struct GraphStats {
  std::size_t node_count = 0;
  std::size_t undirected_edge_count = 0;
  std::size_t directed_edge_count = 0;
  // 2E / N, the usual undirected degree.
  double mean_degree = 0.0;
  // E / N, degree under the convention that counts each edge once per node.
  double edges_per_node = 0.0;
  std::size_t component_count = 0;
  // Unset when the graph is disconnected (infinite diameter).
  std::optional<int> diameter;
};

enum class DiameterMethod {
  kAuto,
  // Every eccentricity, computed with 256 BFS sources per pass.
  kAllSources,
  // Eccentricity-bound pruning; exact, needs far fewer BFS runs on large graphs.
  kBounding,
};

// Graphs above this many nodes use kBounding under kAuto.
inline constexpr std::size_t kAllSourcesLimit = 100'000;

GraphStats graph_stats(const DesignGraph& graph, DiameterMethod method = DiameterMethod::kAuto);

// Exact diameter of a connected graph; nullopt when disconnected.
std::optional<int> diameter(const DesignGraph& graph, DiameterMethod method = DiameterMethod::kAuto);
std::size_t component_count(const DesignGraph& graph);
// BFS distances from one source; -1 for unreachable nodes.
std::vector<int> bfs_distances(const DesignGraph& graph, DesignId source);

}  // namespace falcon
