#include "gcarom/layers.hpp"

#include <cmath>
#include <memory>
#include <string>

#include <Eigen/Core>

namespace gcarom {

namespace {
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
}  // namespace

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::Identity: return x;
    case Activation::Elu: return elu(x);
    case Activation::Tanh: return tanh(x);
  }
  return x;
}

BatchedEdges batch_edges(const Graph& graph, std::size_t batch) {
  BatchedEdges out;
  out.batch = batch;
  out.num_rows = batch * graph.num_nodes;
  const std::size_t e_count = graph.num_edges();
  out.sources.resize(batch * e_count);
  out.targets.resize(batch * e_count);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t offset = b * graph.num_nodes;
    for (std::size_t e = 0; e < e_count; ++e) {
      out.sources[b * e_count + e] = graph.edges[e].source + offset;
      out.targets[b * e_count + e] = graph.edges[e].target + offset;
    }
  }
  return out;
}

double gaussian_weight(std::span<const double> e, std::span<const double> mean,
                       std::span<const double> inv_var) {
  if (e.size() != mean.size() || e.size() != inv_var.size()) {
    throw ShapeError("gaussian_weight: dimension mismatch");
  }
  double q = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    const double diff = e[k] - mean[k];
    q += inv_var[k] * diff * diff;
  }
  return std::exp(-0.5 * q);
}

std::vector<Tensor> MoNetKernel::parameters() const {
  std::vector<Tensor> p{means, sqrt_inv_var, weights};
  if (bias.defined()) p.push_back(bias);
  return p;
}

std::vector<double> MoNetKernel::inv_var() const {
  std::vector<double> out(sqrt_inv_var.values().begin(), sqrt_inv_var.values().end());
  for (double& v : out) v *= v;
  return out;
}

std::size_t MoNetKernel::parameter_count() const {
  std::size_t n = means.size() + sqrt_inv_var.size() + weights.size();
  if (bias.defined()) n += bias.size();
  return n;
}

MoNetKernel make_monet_kernel(std::size_t in_channels, std::size_t out_channels,
                              std::size_t filters, std::span<const double> pseudo_lo,
                              std::span<const double> pseudo_hi, bool with_bias, Rng& rng) {
  if (filters == 0) throw ContractError("make_monet_kernel: at least one filter required");
  if (pseudo_lo.size() != pseudo_hi.size() || pseudo_lo.empty()) {
    throw ShapeError("make_monet_kernel: pseudo-coordinate range dimensions differ");
  }
  MoNetKernel k;
  k.filters = filters;
  k.pseudo_dim = pseudo_lo.size();
  k.in_channels = in_channels;
  k.out_channels = out_channels;

  std::vector<double> means(filters * k.pseudo_dim);
  for (std::size_t q = 0; q < filters; ++q) {
    for (std::size_t j = 0; j < k.pseudo_dim; ++j) {
      means[q * k.pseudo_dim + j] = rng.uniform(pseudo_lo[j], pseudo_hi[j]);
    }
  }
  k.means = Tensor({filters, k.pseudo_dim}, std::move(means), true);
  k.sqrt_inv_var = Tensor({filters, k.pseudo_dim},
                          std::vector<double>(filters * k.pseudo_dim, 1.0), true);

  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels));
  std::vector<double> w(in_channels * filters * out_channels);
  for (double& v : w) v = rng.uniform(-bound, bound);
  k.weights = Tensor({in_channels, filters * out_channels}, std::move(w), true);
  if (with_bias) k.bias = Tensor::zeros({1, out_channels}, true);
  return k;
}

Tensor gaussian_kernel(std::span<const double> pseudo, std::size_t pseudo_dim,
                       const Tensor& means, const Tensor& sqrt_inv_var) {
  if (means.cols() != pseudo_dim || sqrt_inv_var.shape() != means.shape()) {
    throw ShapeError("gaussian_kernel: means " + to_string(means.shape()) + " and scales " +
                     to_string(sqrt_inv_var.shape()) + " for pseudo dimension " +
                     std::to_string(pseudo_dim));
  }
  if (pseudo.size() % pseudo_dim != 0) {
    throw ShapeError("gaussian_kernel: pseudo buffer is not a multiple of its dimension");
  }
  const std::size_t e_count = pseudo.size() / pseudo_dim;
  const std::size_t q_count = means.rows();
  const std::size_t dim = pseudo_dim;
  const auto mu = means.values();
  const auto s = sqrt_inv_var.values();
  std::vector<double> out(e_count * q_count);
  for (std::size_t e = 0; e < e_count; ++e) {
    for (std::size_t q = 0; q < q_count; ++q) {
      double acc = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = pseudo[e * dim + k] - mu[q * dim + k];
        const double sk = s[q * dim + k];
        acc += sk * sk * diff * diff;
      }
      out[e * q_count + q] = std::exp(-0.5 * acc);
    }
  }
  auto mn = means.node();
  auto sn = sqrt_inv_var.node();
  std::vector<double> pc(pseudo.begin(), pseudo.end());
  return Tensor::from_op(
      {e_count, q_count}, std::move(out), {means, sqrt_inv_var},
      [mn, sn, pc = std::move(pc), e_count, q_count, dim](const detail::Node& self) {
        std::vector<double>* gm = mn->requires_grad ? &mn->ensure_grad() : nullptr;
        std::vector<double>* gs = sn->requires_grad ? &sn->ensure_grad() : nullptr;
        for (std::size_t e = 0; e < e_count; ++e) {
          for (std::size_t q = 0; q < q_count; ++q) {
            const double w = self.values[e * q_count + q];
            const double g = self.grad[e * q_count + q] * w;
            for (std::size_t k = 0; k < dim; ++k) {
              const double diff = pc[e * dim + k] - mn->values[q * dim + k];
              const double sk = sn->values[q * dim + k];
              if (gm) (*gm)[q * dim + k] += g * sk * sk * diff;
              if (gs) (*gs)[q * dim + k] -= g * sk * diff * diff;
            }
          }
        }
      },
      "gaussian_kernel");
}

Tensor mixture_combine(const Tensor& messages, const Tensor& omega) {
  const std::size_t q_count = omega.cols();
  const std::size_t e_count = omega.rows();
  if (q_count == 0 || e_count == 0 || messages.cols() % q_count != 0 ||
      messages.rows() % e_count != 0) {
    throw ShapeError("mixture_combine: messages " + to_string(messages.shape()) +
                     " incompatible with weights " + to_string(omega.shape()));
  }
  const std::size_t rows = messages.rows();
  const std::size_t c = messages.cols() / q_count;
  const double inv_q = 1.0 / static_cast<double>(q_count);
  const auto m = messages.values();
  const auto w = omega.values();
  const std::size_t batch = rows / e_count;
  const std::size_t stride = q_count * c;
  std::vector<double> out(rows * c, 0.0);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t e = 0; e < e_count; ++e) {
      const std::size_t r = bi * e_count + e;
      const double* msg = m.data() + r * stride;
      double* dst = out.data() + r * c;
      for (std::size_t q = 0; q < q_count; ++q) {
        const double wq = w[e * q_count + q] * inv_q;
        for (std::size_t k = 0; k < c; ++k) dst[k] += wq * msg[q * c + k];
      }
    }
  }
  auto mn = messages.node();
  auto wn = omega.node();
  return Tensor::from_op(
      {rows, c}, std::move(out), {messages, omega},
      [mn, wn, batch, c, q_count, e_count, inv_q, stride](const detail::Node& self) {
        if (mn->requires_grad) {
          auto& gm = mn->ensure_grad();
          for (std::size_t bi = 0; bi < batch; ++bi) {
            for (std::size_t e = 0; e < e_count; ++e) {
              const std::size_t r = bi * e_count + e;
              const double* g = self.grad.data() + r * c;
              double* dst = gm.data() + r * stride;
              for (std::size_t q = 0; q < q_count; ++q) {
                const double wq = wn->values[e * q_count + q] * inv_q;
                for (std::size_t k = 0; k < c; ++k) dst[q * c + k] += g[k] * wq;
              }
            }
          }
        }
        if (wn->requires_grad) {
          auto& gw = wn->ensure_grad();
          for (std::size_t bi = 0; bi < batch; ++bi) {
            for (std::size_t e = 0; e < e_count; ++e) {
              const std::size_t r = bi * e_count + e;
              const double* g = self.grad.data() + r * c;
              const double* msg = mn->values.data() + r * stride;
              for (std::size_t q = 0; q < q_count; ++q) {
                double acc = 0.0;
                for (std::size_t k = 0; k < c; ++k) acc += g[k] * msg[q * c + k];
                gw[e * q_count + q] += acc * inv_q;
              }
            }
          }
        }
      },
      "mixture_combine");
}

Tensor monet_aggregate(const Tensor& transformed, const Tensor& omega, const Graph& graph) {
  const std::size_t n = graph.num_nodes;
  const std::size_t e_count = graph.num_edges();
  const std::size_t q_count = omega.cols();
  if (n == 0 || omega.rows() != e_count || q_count == 0 || transformed.rows() % n != 0 ||
      transformed.cols() % q_count != 0) {
    throw ShapeError("monet_aggregate: input " + to_string(transformed.shape()) + " and weights " +
                     to_string(omega.shape()) + " do not fit a graph of " + std::to_string(n) +
                     " nodes and " + std::to_string(e_count) + " edges");
  }
  const std::size_t batch = transformed.rows() / n;
  const std::size_t c = transformed.cols() / q_count;
  const std::size_t stride = q_count * c;
  // Per-edge endpoints and 1/(Q deg(target)), shared with the backward pass.
  struct Plan {
    std::vector<std::size_t> src, dst;
    std::vector<double> scale;
  };
  auto plan = std::make_shared<Plan>();
  plan->src.resize(e_count);
  plan->dst.resize(e_count);
  plan->scale.resize(e_count);
  for (std::size_t e = 0; e < e_count; ++e) {
    plan->src[e] = graph.edges[e].source;
    plan->dst[e] = graph.edges[e].target;
    plan->scale[e] = 1.0 / (static_cast<double>(q_count) *
                            static_cast<double>(graph.degrees[plan->dst[e]]));
  }
  // Node-major copy: row v holds, per filter q, the B*c values of node v over
  // the batch, so each edge touches contiguous spans.
  const std::size_t span = batch * c;
  const auto t = transformed.values();
  auto tt = std::make_shared<std::vector<double>>(n * q_count * span);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t v = 0; v < n; ++v) {
      const double* row = t.data() + (bi * n + v) * stride;
      double* dst = tt->data() + v * q_count * span + bi * c;
      for (std::size_t q = 0; q < q_count; ++q) {
        for (std::size_t k = 0; k < c; ++k) dst[q * span + k] = row[q * c + k];
      }
    }
  }
  const auto w = omega.values();
  Eigen::VectorXd acc_t = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n * span));
  for (std::size_t e = 0; e < e_count; ++e) {
    auto dst = acc_t.segment(static_cast<Eigen::Index>(plan->dst[e] * span), static_cast<Eigen::Index>(span));
    const double* src = tt->data() + plan->src[e] * q_count * span;
    for (std::size_t q = 0; q < q_count; ++q) {
      dst += (w[e * q_count + q] * plan->scale[e]) * ConstVec(src + q * span, static_cast<Eigen::Index>(span));
    }
  }
  std::vector<double> out(batch * n * c);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t k = 0; k < c; ++k) out[(bi * n + v) * c + k] = acc_t[static_cast<Eigen::Index>(v * span + bi * c + k)];
    }
  }
  auto tn = transformed.node();
  auto wn = omega.node();
  return Tensor::from_op(
      {batch * n, c}, std::move(out), {transformed, omega},
      [tn, wn, plan, tt, batch, n, c, q_count, e_count, stride, span](const detail::Node& self) {
        // Gradient in the same node-major layout.
        std::vector<double> gt_rows(n * span);
        for (std::size_t bi = 0; bi < batch; ++bi) {
          for (std::size_t v = 0; v < n; ++v) {
            for (std::size_t k = 0; k < c; ++k) gt_rows[v * span + bi * c + k] = self.grad[(bi * n + v) * c + k];
          }
        }
        const auto len = static_cast<Eigen::Index>(span);
        if (tn->requires_grad) {
          Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n * q_count * span));
          for (std::size_t e = 0; e < e_count; ++e) {
            const ConstVec g(gt_rows.data() + plan->dst[e] * span, len);
            const auto base = static_cast<Eigen::Index>(plan->src[e] * q_count * span);
            for (std::size_t q = 0; q < q_count; ++q) {
              acc.segment(base + static_cast<Eigen::Index>(q * span), len) +=
                  (wn->values[e * q_count + q] * plan->scale[e]) * g;
            }
          }
          auto& gt = tn->ensure_grad();
          for (std::size_t bi = 0; bi < batch; ++bi) {
            for (std::size_t v = 0; v < n; ++v) {
              double* row = gt.data() + (bi * n + v) * stride;
              const double* src = acc.data() + v * q_count * span + bi * c;
              for (std::size_t q = 0; q < q_count; ++q) {
                for (std::size_t k = 0; k < c; ++k) row[q * c + k] += src[q * span + k];
              }
            }
          }
        }
        if (wn->requires_grad) {
          auto& gw = wn->ensure_grad();
          for (std::size_t e = 0; e < e_count; ++e) {
            const ConstVec g(gt_rows.data() + plan->dst[e] * span, len);
            const double* src = tt->data() + plan->src[e] * q_count * span;
            for (std::size_t q = 0; q < q_count; ++q) {
              gw[e * q_count + q] += g.dot(ConstVec(src + q * span, len)) * plan->scale[e];
            }
          }
        }
      },
      "monet_aggregate");
}

Tensor monet_forward(const Tensor& h, const Graph& graph, const MoNetKernel& kernel,
                     const BatchedEdges& edges) {
  if (h.cols() != kernel.in_channels) {
    throw ShapeError("monet_forward: input has " + std::to_string(h.cols()) +
                     " channels, kernel expects " + std::to_string(kernel.in_channels));
  }
  if (h.rows() != edges.num_rows) {
    throw ShapeError("monet_forward: input " + to_string(h.shape()) + " does not match " +
                     std::to_string(edges.batch) + " stacked graphs of " +
                     std::to_string(graph.num_nodes) + " nodes");
  }
  if (kernel.pseudo_dim != graph.pseudo_width()) {
    throw ShapeError("monet_forward: kernel pseudo dimension " + std::to_string(kernel.pseudo_dim) +
                     " differs from graph's " + std::to_string(graph.pseudo_width()));
  }
  const Tensor transformed = matmul(h, kernel.weights);
  const Tensor omega =
      gaussian_kernel(graph.pseudo, kernel.pseudo_dim, kernel.means, kernel.sqrt_inv_var);
  Tensor out = monet_aggregate(transformed, omega, graph);
  if (kernel.bias.defined()) out = add_bias(out, kernel.bias);
  return out;
}

Tensor monet_forward(const Tensor& h, const Graph& graph, const MoNetKernel& kernel) {
  if (graph.num_nodes == 0 || h.rows() % graph.num_nodes != 0) {
    throw ShapeError("monet_forward: input " + to_string(h.shape()) +
                     " is not a stack of graphs with " + std::to_string(graph.num_nodes) +
                     " nodes");
  }
  return monet_forward(h, graph, kernel, batch_edges(graph, h.rows() / graph.num_nodes));
}

Tensor gcn_forward(const Tensor& h, const Graph& graph, const Tensor& weight, const Tensor& bias,
                   Activation act) {
  if (h.cols() != weight.rows()) {
    throw ShapeError("gcn_forward: input " + to_string(h.shape()) + " vs weight " +
                     to_string(weight.shape()));
  }
  if (graph.num_nodes == 0 || h.rows() % graph.num_nodes != 0) {
    throw ShapeError("gcn_forward: input " + to_string(h.shape()) +
                     " is not a stack of graphs with " + std::to_string(graph.num_nodes) +
                     " nodes");
  }
  const auto edges = batch_edges(graph, h.rows() / graph.num_nodes);
  const Tensor transformed = matmul(h, weight);
  Tensor out = scatter_mean(gather_rows(transformed, edges.sources), edges.targets, edges.num_rows);
  if (bias.defined()) out = add_bias(out, bias);
  return activate(out, act);
}

DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(in * out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  return DenseLayer{Tensor({in, out}, std::move(w), true), Tensor::zeros({1, out}, true), act};
}

Tensor dense_forward(const Tensor& x, const DenseLayer& layer) {
  if (x.cols() != layer.in_features()) {
    throw ShapeError("dense_forward: input " + to_string(x.shape()) + " vs weight " +
                     to_string(layer.weight.shape()));
  }
  return activate(add_bias(matmul(x, layer.weight), layer.bias), layer.activation);
}

Tensor skip_connect(const Tensor& block_input, const Tensor& block_output) {
  if (block_input.shape() != block_output.shape()) {
    throw ShapeError("skip_connect: block input " + to_string(block_input.shape()) +
                     " vs output " + to_string(block_output.shape()));
  }
  return add(block_input, block_output);
}

}  // namespace gcarom
