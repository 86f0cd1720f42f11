#include "gcarom/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace gcarom {

std::size_t pseudo_dim(PseudoCoordinates mode) {
  return mode == PseudoCoordinates::Distance ? 1 : 2;
}

void validate_mesh(const Mesh& mesh) {
  const std::size_t n = mesh.num_nodes();
  std::vector<bool> referenced(n, false);
  for (std::size_t t = 0; t < mesh.elements.size(); ++t) {
    const auto& tri = mesh.elements[t];
    for (std::size_t id : tri) {
      if (id >= n) {
        throw GraphError("mesh: element " + std::to_string(t) + " references node " +
                         std::to_string(id) + " but the mesh has " + std::to_string(n) + " nodes");
      }
      referenced[id] = true;
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      throw GraphError("mesh: element " + std::to_string(t) + " is degenerate (repeated node id)");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!referenced[i]) {
      throw GraphError("mesh: node " + std::to_string(i) + " is not referenced by any element");
    }
  }
}

namespace {

void finalize(Graph& g) {
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  g.degrees.assign(g.num_nodes, 0);
  for (const auto& e : g.edges) ++g.degrees[e.target];
  g.pseudo = edge_pseudo_coordinates(g);
}

}  // namespace

Graph graph_from_pairs(std::vector<Point2> positions, std::span<const Edge> pairs,
                       PseudoCoordinates mode) {
  Graph g;
  g.num_nodes = positions.size();
  g.positions = std::move(positions);
  g.pseudo_mode = mode;
  g.edges.reserve(2 * pairs.size() + g.num_nodes);
  for (const auto& p : pairs) {
    if (p.source >= g.num_nodes || p.target >= g.num_nodes) {
      throw GraphError("graph: pair (" + std::to_string(p.source) + ", " +
                       std::to_string(p.target) + ") outside " + std::to_string(g.num_nodes) +
                       " nodes");
    }
    g.edges.push_back({p.source, p.target});
    g.edges.push_back({p.target, p.source});
  }
  for (std::size_t i = 0; i < g.num_nodes; ++i) g.edges.push_back({i, i});
  finalize(g);
  return g;
}

Graph build_graph(const Mesh& mesh, PseudoCoordinates mode) {
  validate_mesh(mesh);
  std::vector<Edge> sides;
  sides.reserve(3 * mesh.elements.size());
  for (const auto& tri : mesh.elements) {
    sides.push_back({tri[0], tri[1]});
    sides.push_back({tri[1], tri[2]});
    sides.push_back({tri[2], tri[0]});
  }
  Graph g = graph_from_pairs(mesh.positions, sides, mode);
  const auto sizes = component_sizes(g);
  if (sizes.size() > 1) {
    std::string msg = "graph: mesh is disconnected into " + std::to_string(sizes.size()) +
                      " components of sizes";
    for (std::size_t s : sizes) msg += " " + std::to_string(s);
    throw GraphError(msg);
  }
  return g;
}

std::vector<double> edge_pseudo_coordinates(const Graph& graph) {
  const std::size_t dim = pseudo_dim(graph.pseudo_mode);
  std::vector<double> out(graph.edges.size() * dim);
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& [s, t] = graph.edges[e];
    const double dx = graph.positions[s].x - graph.positions[t].x;
    const double dy = graph.positions[s].y - graph.positions[t].y;
    if (dim == 1) {
      out[e] = std::hypot(dx, dy);
    } else {
      out[2 * e] = dx;
      out[2 * e + 1] = dy;
    }
  }
  return out;
}

std::vector<std::size_t> component_sizes(const Graph& graph) {
  std::vector<std::size_t> parent(graph.num_nodes);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& e : graph.edges) {
    const std::size_t a = find(e.source);
    const std::size_t b = find(e.target);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::size_t> count(graph.num_nodes, 0);
  for (std::size_t i = 0; i < graph.num_nodes; ++i) ++count[find(i)];
  std::vector<std::size_t> sizes;
  for (std::size_t c : count) {
    if (c > 0) sizes.push_back(c);
  }
  std::sort(sizes.rbegin(), sizes.rend());
  return sizes;
}

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
  std::vector<std::size_t> inv(perm.size(), perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || inv[perm[i]] != perm.size()) {
      throw GraphError("permutation: not a bijection on " + std::to_string(perm.size()) +
                       " elements (entry " + std::to_string(i) + ")");
    }
    inv[perm[i]] = i;
  }
  return inv;
}

Graph permute_nodes(const Graph& graph, std::span<const std::size_t> perm) {
  if (perm.size() != graph.num_nodes) {
    throw GraphError("permute_nodes: permutation of " + std::to_string(perm.size()) +
                     " entries for " + std::to_string(graph.num_nodes) + " nodes");
  }
  (void)inverse_permutation(perm);  // bijection check

  Graph out;
  out.num_nodes = graph.num_nodes;
  out.pseudo_mode = graph.pseudo_mode;
  out.positions.resize(graph.num_nodes);
  for (std::size_t i = 0; i < graph.num_nodes; ++i) out.positions[perm[i]] = graph.positions[i];
  out.feature_dim = graph.feature_dim;
  if (!graph.features.empty()) {
    const std::size_t d = graph.feature_dim;
    out.features.resize(graph.features.size());
    for (std::size_t i = 0; i < graph.num_nodes; ++i) {
      std::copy_n(graph.features.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                  out.features.begin() + static_cast<std::ptrdiff_t>(perm[i] * d));
    }
  }
  out.edges.reserve(graph.edges.size());
  for (const auto& e : graph.edges) out.edges.push_back({perm[e.source], perm[e.target]});
  finalize(out);
  return out;
}

}  // namespace gcarom
