#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gcarom/graph.hpp"
#include "gcarom/tensor.hpp"

namespace gcarom {

/// Fixed random subset of mesh nodes kept by down-sampling.
struct PoolMask {
  std::size_t num_nodes = 0;
  double rate = 100.0;  ///< percent
  std::uint64_t seed = 0;
  std::vector<std::size_t> kept;  ///< sorted, unique

  friend bool operator==(const PoolMask&, const PoolMask&) = default;
};

/// Keeps round(rate / 100 * n) nodes, sampled without replacement.
PoolMask make_pool_mask(std::size_t n, double rate, std::uint64_t seed);

struct PooledGraph {
  Graph graph;
  std::vector<std::size_t> component_sizes;
  [[nodiscard]] bool connected() const { return component_sizes.size() <= 1; }
};

/// Induced subgraph on the kept nodes with compacted ids. Features, when
/// present, are restricted row-wise.
PooledGraph pool(const Graph& graph, const PoolMask& mask);

/// Rows of the stacked batch that survive the mask.
std::vector<std::size_t> pooled_rows(const PoolMask& mask, std::size_t batch);

/// Fixed inverse-square-distance weights from coarse to fine nodes.
struct UnpoolPlan {
  std::size_t num_coarse = 0;
  std::size_t num_fine = 0;
  std::size_t k = 0;
  std::vector<std::size_t> offsets;  ///< num_fine + 1 entries into neighbors/weights
  std::vector<std::size_t> neighbors;
  std::vector<double> weights;       ///< normalized to sum to one per fine node
};

/// Distances below this copy the coincident coarse value instead of weighting.
inline constexpr double kCoincidentDistance = 1e-12;

UnpoolPlan make_unpool_plan(std::span<const Point2> coarse_positions,
                            std::span<const Point2> fine_positions, std::size_t k);

/// Applies the plan to a stack of coarse fields (batch * m rows).
Tensor unpool(const Tensor& coarse_features, const UnpoolPlan& plan);

/// k-NN interpolation of coarse features onto fine positions.
Tensor unpool_knn(std::span<const Point2> coarse_positions, const Tensor& coarse_features,
                  std::span<const Point2> fine_positions, std::size_t k);

}  // namespace gcarom
