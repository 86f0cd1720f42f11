#include "gcarom/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gcarom/rng.hpp"

namespace gcarom {

PoolMask make_pool_mask(std::size_t n, double rate, std::uint64_t seed) {
  if (!(rate > 0.0 && rate <= 100.0)) {
    throw ContractError("make_pool_mask: rate " + std::to_string(rate) + " outside (0, 100]");
  }
  auto count = static_cast<std::size_t>(std::llround(rate / 100.0 * static_cast<double>(n)));
  count = std::clamp<std::size_t>(count, n > 0 ? 1 : 0, n);

  PoolMask mask{n, rate, seed, {}};
  std::vector<std::size_t> ids = random_permutation(n, seed);
  mask.kept.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(mask.kept.begin(), mask.kept.end());
  return mask;
}

PooledGraph pool(const Graph& graph, const PoolMask& mask) {
  if (mask.num_nodes != graph.num_nodes) {
    throw ContractError("pool: mask built for " + std::to_string(mask.num_nodes) +
                        " nodes, graph has " + std::to_string(graph.num_nodes));
  }
  constexpr std::size_t dropped = static_cast<std::size_t>(-1);
  std::vector<std::size_t> new_id(graph.num_nodes, dropped);
  std::vector<Point2> positions;
  positions.reserve(mask.kept.size());
  for (std::size_t j = 0; j < mask.kept.size(); ++j) {
    if (mask.kept[j] >= graph.num_nodes) {
      throw IndexError("pool: kept id " + std::to_string(mask.kept[j]) + " out of range");
    }
    new_id[mask.kept[j]] = j;
    positions.push_back(graph.positions[mask.kept[j]]);
  }
  std::vector<Edge> pairs;
  for (const auto& e : graph.edges) {
    if (e.source == e.target) continue;
    const std::size_t s = new_id[e.source];
    const std::size_t t = new_id[e.target];
    if (s != dropped && t != dropped) pairs.push_back({s, t});
  }
  PooledGraph out;
  out.graph = graph_from_pairs(std::move(positions), pairs, graph.pseudo_mode);
  if (!graph.features.empty()) {
    const std::size_t d = graph.feature_dim;
    out.graph.feature_dim = d;
    out.graph.features.reserve(mask.kept.size() * d);
    for (std::size_t id : mask.kept) {
      const auto first = graph.features.begin() + static_cast<std::ptrdiff_t>(id * d);
      out.graph.features.insert(out.graph.features.end(), first,
                                first + static_cast<std::ptrdiff_t>(d));
    }
  }
  out.component_sizes = component_sizes(out.graph);
  return out;
}

std::vector<std::size_t> pooled_rows(const PoolMask& mask, std::size_t batch) {
  std::vector<std::size_t> rows;
  rows.reserve(batch * mask.kept.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t id : mask.kept) rows.push_back(b * mask.num_nodes + id);
  }
  return rows;
}

UnpoolPlan make_unpool_plan(std::span<const Point2> coarse_positions,
                            std::span<const Point2> fine_positions, std::size_t k) {
  const std::size_t m = coarse_positions.size();
  if (k == 0 || k > m) {
    throw ContractError("unpool: k = " + std::to_string(k) + " with " + std::to_string(m) +
                        " coarse nodes");
  }
  UnpoolPlan plan;
  plan.num_coarse = m;
  plan.num_fine = fine_positions.size();
  plan.k = k;
  plan.offsets.reserve(plan.num_fine + 1);
  plan.offsets.push_back(0);

  std::vector<std::pair<double, std::size_t>> dist(m);
  for (const auto& p : fine_positions) {
    for (std::size_t j = 0; j < m; ++j) {
      const double dx = p.x - coarse_positions[j].x;
      const double dy = p.y - coarse_positions[j].y;
      dist[j] = {dx * dx + dy * dy, j};
    }
    // Ties resolve toward the lower coarse id.
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    if (std::sqrt(dist[0].first) < kCoincidentDistance) {
      plan.neighbors.push_back(dist[0].second);
      plan.weights.push_back(1.0);
    } else {
      double total = 0.0;
      for (std::size_t j = 0; j < k; ++j) total += 1.0 / dist[j].first;
      for (std::size_t j = 0; j < k; ++j) {
        plan.neighbors.push_back(dist[j].second);
        plan.weights.push_back((1.0 / dist[j].first) / total);
      }
    }
    plan.offsets.push_back(plan.neighbors.size());
  }
  return plan;
}

Tensor unpool(const Tensor& coarse_features, const UnpoolPlan& plan) {
  const std::size_t m = plan.num_coarse;
  const std::size_t n = plan.num_fine;
  if (m == 0 || coarse_features.rows() % m != 0) {
    throw ShapeError("unpool: features " + to_string(coarse_features.shape()) +
                     " are not a stack of " + std::to_string(m) + "-node fields");
  }
  const std::size_t batch = coarse_features.rows() / m;
  const std::size_t c = coarse_features.cols();
  const auto x = coarse_features.values();
  std::vector<double> out(batch * n * c, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      double* dst = out.data() + (b * n + i) * c;
      for (std::size_t s = plan.offsets[i]; s < plan.offsets[i + 1]; ++s) {
        const double* src = x.data() + (b * m + plan.neighbors[s]) * c;
        const double w = plan.weights[s];
        for (std::size_t k = 0; k < c; ++k) dst[k] += w * src[k];
      }
    }
  }
  auto xn = coarse_features.node();
  return Tensor::from_op(
      {batch * n, c}, std::move(out), {coarse_features},
      [xn, offsets = plan.offsets, neighbors = plan.neighbors,
       weights = plan.weights, batch, n, m, c](const detail::Node& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t i = 0; i < n; ++i) {
            const double* go = self.grad.data() + (b * n + i) * c;
            for (std::size_t s = offsets[i]; s < offsets[i + 1]; ++s) {
              double* gi = g.data() + (b * m + neighbors[s]) * c;
              for (std::size_t k = 0; k < c; ++k) gi[k] += weights[s] * go[k];
            }
          }
        }
      },
      "unpool");
}

Tensor unpool_knn(std::span<const Point2> coarse_positions, const Tensor& coarse_features,
                  std::span<const Point2> fine_positions, std::size_t k) {
  if (coarse_features.rows() != coarse_positions.size()) {
    throw ShapeError("unpool_knn: " + std::to_string(coarse_positions.size()) +
                     " coarse positions for features " + to_string(coarse_features.shape()));
  }
  return unpool(coarse_features, make_unpool_plan(coarse_positions, fine_positions, k));
}

}  // namespace gcarom
