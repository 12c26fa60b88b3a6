#include "falcon/design_graph.hpp"

#include <array>
#include <bit>
#include <limits>

namespace falcon {
namespace {

constexpr std::size_t kWords = 4;
using Block = std::array<std::uint64_t, kWords>;

// Max eccentricity over all sources. Processes 256 sources per pass with one
// bit per source in each node's frontier/visited blocks.
int all_sources_diameter(const DesignGraph& g) {
  const std::size_t n = g.node_count();
  std::vector<Block> visited(n), frontier(n), next(n);
  int best = 0;
  for (std::size_t first = 0; first < n; first += kWords * 64) {
    const std::size_t last = std::min(n, first + kWords * 64);
    for (std::size_t v = 0; v < n; ++v) {
      visited[v].fill(0);
      frontier[v].fill(0);
    }
    for (std::size_t s = first; s < last; ++s) {
      const std::size_t bit = s - first;
      visited[s][bit / 64] |= std::uint64_t{1} << (bit % 64);
      frontier[s][bit / 64] |= std::uint64_t{1} << (bit % 64);
    }
    int level = 0;
    while (true) {
      bool any = false;
      for (std::size_t v = 0; v < n; ++v) {
        Block acc{};
        for (const Neighbor& nb : g.neighbors(static_cast<DesignId>(v))) {
          const Block& f = frontier[nb.id];
          for (std::size_t w = 0; w < kWords; ++w) acc[w] |= f[w];
        }
        Block& nx = next[v];
        Block& vis = visited[v];
        std::uint64_t fresh = 0;
        for (std::size_t w = 0; w < kWords; ++w) {
          nx[w] = acc[w] & ~vis[w];
          vis[w] |= nx[w];
          fresh |= nx[w];
        }
        any = any || fresh != 0;
      }
      if (!any) break;
      ++level;
      frontier.swap(next);
    }
    best = std::max(best, level);
  }
  return best;
}

int eccentricity(const std::vector<int>& dist) {
  int ecc = 0;
  for (int d : dist) ecc = std::max(ecc, d);
  return ecc;
}

// Exact diameter by eccentricity bounds: each BFS from v tightens
// max(d(v,w), ecc(v) - d(v,w)) <= ecc(w) <= ecc(v) + d(v,w) for all w.
int bounding_diameter(const DesignGraph& g) {
  const std::size_t n = g.node_count();
  constexpr int kInf = std::numeric_limits<int>::max();
  std::vector<int> lower(n, 0), upper(n, kInf);
  std::vector<DesignId> open(n);
  for (std::size_t i = 0; i < n; ++i) open[i] = static_cast<DesignId>(i);
  int dl = 0;
  bool pick_upper = true;
  while (!open.empty()) {
    DesignId v = open.front();
    for (DesignId w : open) {
      if (pick_upper ? upper[w] > upper[v] : lower[w] < lower[v]) v = w;
    }
    pick_upper = !pick_upper;
    const auto dist = bfs_distances(g, v);
    const int ecc = eccentricity(dist);
    dl = std::max(dl, ecc);
    int du = dl;
    std::vector<DesignId> keep;
    keep.reserve(open.size());
    for (DesignId w : open) {
      const int d = dist[w];
      lower[w] = std::max(lower[w], std::max(d, ecc - d));
      upper[w] = std::min(upper[w], ecc + d);
      if (lower[w] == upper[w]) {
        dl = std::max(dl, lower[w]);
        continue;
      }
      keep.push_back(w);
    }
    std::vector<DesignId> still;
    still.reserve(keep.size());
    for (DesignId w : keep) {
      if (upper[w] <= dl) continue;
      still.push_back(w);
      du = std::max(du, upper[w]);
    }
    open = std::move(still);
    if (du == dl) break;
  }
  return dl;
}

}  // namespace

DesignGraph DesignGraph::build(const DesignSpace& space) {
  DesignGraph g;
  const std::size_t n = space.size();
  g.offsets_.assign(1, 0);
  g.offsets_.reserve(n + 1);
  for (DesignId id = 0; id < n; ++id) {
    auto nbs = space.neighbors(id);
    g.adjacency_.insert(g.adjacency_.end(), nbs.begin(), nbs.end());
    g.offsets_.push_back(g.adjacency_.size());
  }
  return g;
}

DesignGraph DesignGraph::from_edges(std::size_t node_count, std::span<const LabeledEdge> edges) {
  std::vector<std::vector<Neighbor>> lists(node_count);
  for (const auto& e : edges) {
    if (e.u >= node_count || e.v >= node_count) throw DomainError("from_edges: endpoint out of range");
    if (e.u == e.v) throw DomainError("from_edges: self-loop");
    lists[e.u].push_back({e.v, e.label});
    lists[e.v].push_back({e.u, e.label});
  }
  DesignGraph g;
  g.offsets_.assign(1, 0);
  for (auto& l : lists) {
    std::sort(l.begin(), l.end(), [](const Neighbor& a, const Neighbor& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < l.size(); ++i) {
      if (l[i].id == l[i - 1].id) throw DomainError("from_edges: parallel edge");
    }
    g.adjacency_.insert(g.adjacency_.end(), l.begin(), l.end());
    g.offsets_.push_back(g.adjacency_.size());
  }
  return g;
}

std::vector<LabeledEdge> DesignGraph::edges() const {
  std::vector<LabeledEdge> out;
  out.reserve(edge_count());
  for (DesignId u = 0; u < node_count(); ++u) {
    for (const Neighbor& nb : neighbors(u)) {
      if (u < nb.id) out.push_back({u, nb.id, nb.label});
    }
  }
  return out;
}

std::vector<int> bfs_distances(const DesignGraph& graph, DesignId source) {
  if (source >= graph.node_count()) throw DomainError("bfs: unknown source " + std::to_string(source));
  std::vector<int> dist(graph.node_count(), -1);
  std::vector<DesignId> queue{source};
  dist[source] = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const DesignId u = queue[head];
    for (const Neighbor& nb : graph.neighbors(u)) {
      if (dist[nb.id] >= 0) continue;
      dist[nb.id] = dist[u] + 1;
      queue.push_back(nb.id);
    }
  }
  return dist;
}

std::size_t component_count(const DesignGraph& graph) {
  const std::size_t n = graph.node_count();
  std::vector<bool> seen(n, false);
  std::vector<DesignId> stack;
  std::size_t components = 0;
  for (DesignId s = 0; s < n; ++s) {
    if (seen[s]) continue;
    ++components;
    seen[s] = true;
    stack.push_back(s);
    while (!stack.empty()) {
      const DesignId u = stack.back();
      stack.pop_back();
      for (const Neighbor& nb : graph.neighbors(u)) {
        if (!seen[nb.id]) {
          seen[nb.id] = true;
          stack.push_back(nb.id);
        }
      }
    }
  }
  return components;
}

std::optional<int> diameter(const DesignGraph& graph, DiameterMethod method) {
  if (graph.node_count() == 0) return 0;
  if (component_count(graph) != 1) return std::nullopt;
  if (method == DiameterMethod::kAuto) {
    method = graph.node_count() > kAllSourcesLimit ? DiameterMethod::kBounding : DiameterMethod::kAllSources;
  }
  return method == DiameterMethod::kAllSources ? all_sources_diameter(graph) : bounding_diameter(graph);
}

GraphStats graph_stats(const DesignGraph& graph, DiameterMethod method) {
  GraphStats s;
  s.node_count = graph.node_count();
  s.undirected_edge_count = graph.edge_count();
  s.directed_edge_count = 2 * s.undirected_edge_count;
  if (s.node_count > 0) {
    s.mean_degree = static_cast<double>(s.directed_edge_count) / static_cast<double>(s.node_count);
    s.edges_per_node = static_cast<double>(s.undirected_edge_count) / static_cast<double>(s.node_count);
  }
  s.component_count = component_count(graph);
  s.diameter = diameter(graph, method);
  return s;
}

}  // namespace falcon
