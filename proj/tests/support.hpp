#pragma once

// Oracles shared by the unit tests and the acceptance runner.

#include <functional>
#include <vector>

#include "gcarom/graph.hpp"
#include "gcarom/layers.hpp"
#include "gcarom/model.hpp"
#include "gcarom/rng.hpp"
#include "gcarom/tensor.hpp"

namespace gcarom::testing {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                     bool requires_grad = false);

/// Connected random graph: random points, a random spanning tree, plus
/// `extra` random pairs.
Graph random_graph(std::size_t n, std::uint64_t seed, std::size_t extra = 80,
                   PseudoCoordinates mode = PseudoCoordinates::Distance);

/// Steps tried by the finite-difference oracle. Large steps lose to ELU
/// kinks, small ones to roundoff; a wrong gradient fails at all of them.
inline constexpr double kFdSteps[] = {1e-3, 1e-4, 1e-5};

/// ||g_analytic - g_fd|| / max(||g_analytic||, ||g_fd||) for one leaf with a
/// fourth-order central stencil; the smallest value over kFdSteps.
double fd_gradient_error(const std::function<Tensor()>& loss, Tensor param);

/// Worst fd_gradient_error over all `params`.
double fd_gradient_error(const std::function<Tensor()>& loss, const std::vector<Tensor>& params);

/// Same measure over the concatenation of all `params`.
double fd_joint_gradient_error(const std::function<Tensor()>& loss, const std::vector<Tensor>& params);

/// Loops straight from the definition: for each target u, average over its
/// incoming pairs of (1/Q) sum_q omega_q(e) W^q h_v, plus bias.
std::vector<double> monet_dense_oracle(const std::vector<double>& h, std::size_t channels,
                                       const Graph& graph, const MoNetKernel& kernel);

/// Small config on `n_h` nodes that keeps finite-difference sweeps fast.
ModelConfig tiny_config(std::size_t n_h, bool pooling);

double max_abs_diff(std::span<const double> a, std::span<const double> b);

}  // namespace gcarom::testing
