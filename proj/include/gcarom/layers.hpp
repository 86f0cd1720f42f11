#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gcarom/graph.hpp"
#include "gcarom/rng.hpp"
#include "gcarom/tensor.hpp"

namespace gcarom {

enum class Activation { Identity, Elu, Tanh };

Tensor activate(const Tensor& x, Activation act);

/// Edge lists of one graph replicated for `batch` stacked copies. Copy b of
/// edge e sits at position b * E + e and its endpoints are offset by b * N.
struct BatchedEdges {
  std::size_t batch = 0;
  std::size_t num_rows = 0;  ///< batch * num_nodes
  std::vector<std::size_t> sources;
  std::vector<std::size_t> targets;
};

BatchedEdges batch_edges(const Graph& graph, std::size_t batch);

/// exp(-1/2 * sum_k inv_var_k (e_k - mean_k)^2).
double gaussian_weight(std::span<const double> e, std::span<const double> mean,
                       std::span<const double> inv_var);

/// Gaussian mixture convolution weights. Inverse variances are the squares of
/// `sqrt_inv_var`, which keeps them non-negative under unconstrained updates.
struct MoNetKernel {
  std::size_t filters = 1;
  std::size_t pseudo_dim = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  Tensor means;         ///< filters x pseudo_dim
  Tensor sqrt_inv_var;  ///< filters x pseudo_dim
  Tensor weights;       ///< in_channels x (filters * out_channels); block q is W^q
  Tensor bias;          ///< 1 x out_channels, undefined when disabled

  [[nodiscard]] std::vector<Tensor> parameters() const;
  [[nodiscard]] std::vector<double> inv_var() const;
  [[nodiscard]] std::size_t parameter_count() const;
};

/// Means uniform in [pseudo_lo, pseudo_hi] per dimension, inverse variances 1,
/// weights uniform in +-1/sqrt(in_channels), zero bias.
MoNetKernel make_monet_kernel(std::size_t in_channels, std::size_t out_channels,
                              std::size_t filters, std::span<const double> pseudo_lo,
                              std::span<const double> pseudo_hi, bool with_bias, Rng& rng);

/// Per-edge, per-filter weights as an E x Q tensor; pseudo is E x D.
Tensor gaussian_kernel(std::span<const double> pseudo, std::size_t pseudo_dim,
                       const Tensor& means, const Tensor& sqrt_inv_var);

/// Row r of the result is (1/Q) sum_q omega(r mod E, q) * block q of row r of
/// `messages`; messages is R x (Q * c) with R a multiple of E.
Tensor mixture_combine(const Tensor& messages, const Tensor& omega);

/// Fused gather, mixture and mean scatter over `batch` stacked copies of
/// `graph`: transformed is (batch * N) x (Q * c), omega is E x Q.
Tensor monet_aggregate(const Tensor& transformed, const Tensor& omega, const Graph& graph);

/// h_u = 1/|N(u)| sum_v 1/Q sum_q omega_q(e_uv) W^q h_v (+ bias). No activation.
Tensor monet_forward(const Tensor& h, const Graph& graph, const MoNetKernel& kernel,
                     const BatchedEdges& edges);
Tensor monet_forward(const Tensor& h, const Graph& graph, const MoNetKernel& kernel);

/// act(mean over N(u) of h_v W + b).
Tensor gcn_forward(const Tensor& h, const Graph& graph, const Tensor& weight, const Tensor& bias,
                   Activation act);

struct DenseLayer {
  Tensor weight;  ///< in x out
  Tensor bias;    ///< 1 x out
  Activation activation = Activation::Identity;

  [[nodiscard]] std::size_t in_features() const { return weight.rows(); }
  [[nodiscard]] std::size_t out_features() const { return weight.cols(); }
  [[nodiscard]] std::size_t parameter_count() const { return weight.size() + bias.size(); }
};

/// Weights uniform in +-1/sqrt(in), zero bias.
DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng);

Tensor dense_forward(const Tensor& x, const DenseLayer& layer);

Tensor skip_connect(const Tensor& block_input, const Tensor& block_output);

}  // namespace gcarom
