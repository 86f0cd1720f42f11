#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace gcarom {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

using Triangle = std::array<std::size_t, 3>;

/// Two-dimensional triangle mesh; solution values live on the vertices.
struct Mesh {
  std::vector<Point2> positions;
  std::vector<Triangle> elements;

  [[nodiscard]] std::size_t num_nodes() const { return positions.size(); }
  friend bool operator==(const Mesh&, const Mesh&) = default;
};

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Directed pair carrying a message from `source` to `target`.
struct Edge {
  std::size_t source = 0;
  std::size_t target = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

enum class PseudoCoordinates {
  Distance,  ///< D = 1, Euclidean length of the edge
  Offset,    ///< D = 2, x_source - x_target
};

[[nodiscard]] std::size_t pseudo_dim(PseudoCoordinates mode);

/// Symmetric edge list with one self-pair per node, sorted by (source, target).
struct Graph {
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;
  std::vector<Point2> positions;
  std::vector<std::size_t> degrees;  ///< incoming pairs per node, self included
  PseudoCoordinates pseudo_mode = PseudoCoordinates::Distance;
  std::vector<double> pseudo;        ///< edges.size() x pseudo_dim, row-major
  std::size_t feature_dim = 0;
  std::vector<double> features;      ///< num_nodes x feature_dim, may be empty

  [[nodiscard]] std::size_t num_edges() const { return edges.size(); }
  [[nodiscard]] std::size_t pseudo_width() const { return pseudo_dim(pseudo_mode); }
};

/// Throws GraphError on out-of-range ids, degenerate triangles or nodes that
/// no element references.
void validate_mesh(const Mesh& mesh);

/// Triangle sides, symmetrized and deduplicated, plus self-pairs. Throws
/// GraphError listing component sizes when the mesh is disconnected.
[[nodiscard]] Graph build_graph(const Mesh& mesh,
                                PseudoCoordinates mode = PseudoCoordinates::Distance);

/// Graph over explicit undirected pairs; symmetrizes, adds self-pairs and
/// sorts, but does not demand connectivity.
[[nodiscard]] Graph graph_from_pairs(std::vector<Point2> positions,
                                     std::span<const Edge> pairs,
                                     PseudoCoordinates mode = PseudoCoordinates::Distance);

[[nodiscard]] std::vector<double> edge_pseudo_coordinates(const Graph& graph);

/// Sizes of the connected components, largest first.
[[nodiscard]] std::vector<std::size_t> component_sizes(const Graph& graph);

/// Relabels node i as perm[i]; positions, features and edges follow.
[[nodiscard]] Graph permute_nodes(const Graph& graph, std::span<const std::size_t> perm);

[[nodiscard]] std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm);

}  // namespace gcarom
