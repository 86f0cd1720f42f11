#include "support.hpp"

#include <algorithm>
#include <cmath>

namespace gcarom::testing {

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
  std::vector<double> v(shape.size());
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v), requires_grad);
}

Graph random_graph(std::size_t n, std::uint64_t seed, std::size_t extra, PseudoCoordinates mode) {
  Rng rng(seed);
  std::vector<Point2> pos(n);
  for (auto& p : pos) p = {rng.uniform(), rng.uniform()};
  std::vector<Edge> pairs;
  for (std::size_t i = 1; i < n; ++i) pairs.push_back({static_cast<std::size_t>(rng.below(i)), i});
  for (std::size_t e = 0; e < extra; ++e) {
    const auto a = static_cast<std::size_t>(rng.below(n));
    const auto b = static_cast<std::size_t>(rng.below(n));
    if (a != b) pairs.push_back({a, b});
  }
  return graph_from_pairs(std::move(pos), pairs, mode);
}

namespace {

struct FdPair {
  std::vector<double> analytic;
  std::vector<double> numeric;
};

FdPair fd_pair(const std::function<Tensor()>& loss, Tensor param, double h) {
  param.zero_grad();
  backward(loss());
  const auto g = param.grad();
  FdPair out;
  out.analytic.assign(g.begin(), g.end());
  if (out.analytic.empty()) out.analytic.assign(param.size(), 0.0);

  auto values = param.mutable_values();
  out.numeric.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = values[i];
    const auto at = [&](double offset) {
      values[i] = x + offset;
      return loss().item();
    };
    // Fourth-order central stencil.
    out.numeric[i] = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
    values[i] = x;
  }
  return out;
}

struct Norms {
  double diff = 0.0, analytic = 0.0, numeric = 0.0;

  void add(const FdPair& p) {
    for (std::size_t i = 0; i < p.numeric.size(); ++i) {
      diff += (p.analytic[i] - p.numeric[i]) * (p.analytic[i] - p.numeric[i]);
      analytic += p.analytic[i] * p.analytic[i];
      numeric += p.numeric[i] * p.numeric[i];
    }
  }
  [[nodiscard]] double relative() const {
    if (analytic == 0.0 && numeric == 0.0) return 0.0;
    return std::sqrt(diff) / std::sqrt(std::max(analytic, numeric));
  }
};

}  // namespace

double fd_gradient_error(const std::function<Tensor()>& loss, Tensor param) {
  double best = INFINITY;
  for (double h : kFdSteps) {
    Norms n;
    n.add(fd_pair(loss, param, h));
    best = std::min(best, n.relative());
  }
  return best;
}

double fd_gradient_error(const std::function<Tensor()>& loss, const std::vector<Tensor>& params) {
  double worst = 0.0;
  for (const auto& p : params) worst = std::max(worst, fd_gradient_error(loss, p));
  return worst;
}

double fd_joint_gradient_error(const std::function<Tensor()>& loss, const std::vector<Tensor>& params) {
  double best = INFINITY;
  for (double h : kFdSteps) {
    Norms n;
    for (const auto& p : params) n.add(fd_pair(loss, p, h));
    best = std::min(best, n.relative());
  }
  return best;
}

std::vector<double> monet_dense_oracle(const std::vector<double>& h, std::size_t channels,
                                       const Graph& graph, const MoNetKernel& kernel) {
  const std::size_t n = graph.num_nodes;
  const std::size_t q_count = kernel.filters;
  const std::size_t dp = kernel.pseudo_dim;
  const std::size_t c_out = kernel.out_channels;
  const auto inv_var = kernel.inv_var();
  const auto means = kernel.means.values();
  const auto w = kernel.weights.values();
  std::vector<double> out(n * c_out, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    const auto [v, u] = graph.edges[e];
    ++count[u];
    const std::span<const double> pseudo(graph.pseudo.data() + e * dp, dp);
    for (std::size_t q = 0; q < q_count; ++q) {
      const double omega = gaussian_weight(pseudo, means.subspan(q * dp, dp),
                                           std::span<const double>(inv_var).subspan(q * dp, dp));
      for (std::size_t o = 0; o < c_out; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < channels; ++i) {
          acc += h[v * channels + i] * w[i * (q_count * c_out) + q * c_out + o];
        }
        out[u * c_out + o] += omega * acc / static_cast<double>(q_count);
      }
    }
  }
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t o = 0; o < c_out; ++o) {
      out[u * c_out + o] /= static_cast<double>(count[u]);
      if (kernel.bias.defined()) out[u * c_out + o] += kernel.bias.values()[o];
    }
  }
  return out;
}

ModelConfig tiny_config(std::size_t n_h, bool pooling) {
  ModelConfig c;
  c.n_h = n_h;
  c.ffn = 6;
  c.mlp_width = 5;
  c.mlp_layers = 2;
  c.bottleneck = 3;
  c.hcp = 2;
  c.hcd = pooling ? 2 : 1;
  c.filters = 2;
  c.pooling = pooling;
  c.pool_rate = pooling ? 60.0 : 100.0;
  c.lambda = 0.7;
  c.seed = 11;
  return c;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

}  // namespace gcarom::testing
