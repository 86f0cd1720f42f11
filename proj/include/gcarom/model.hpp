#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gcarom/graph.hpp"
#include "gcarom/layers.hpp"
#include "gcarom/sampling.hpp"
#include "gcarom/tensor.hpp"

namespace gcarom {

/// Hyperparameters of one surrogate. Percentages are in (0, 100].
struct ModelConfig {
  std::size_t n_h = 0;           ///< mesh nodes
  std::size_t d = 1;             ///< field components per node
  std::size_t param_dim = 2;     ///< P
  double train_rate = 30.0;      ///< r_t
  bool pooling = false;
  double pool_rate = 100.0;      ///< r_p, ignored without pooling
  std::size_t ffn = 100;         ///< width of the bottleneck FC pair
  std::size_t mlp_width = 50;    ///< n_l
  std::size_t mlp_layers = 5;    ///< tanh layers of the parameter map
  std::size_t bottleneck = 15;   ///< n
  double lambda = 10.0;
  std::size_t hcp = 3;           ///< convolutions before pooling
  std::size_t hcd = 1;           ///< convolutions on the pooled graph
  std::size_t filters = 3;       ///< Q
  PseudoCoordinates pseudo = PseudoCoordinates::Distance;
  bool monet_bias = false;
  std::size_t k_unpool = 3;
  double lr = 1e-3;
  double weight_decay = 1e-5;
  std::size_t epochs = 5000;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;    ///< 0 trains full batch

  /// Throws ContractError naming the first invalid field.
  void validate() const;
  /// Nodes seen by the bottleneck FC layers.
  [[nodiscard]] std::size_t coarse_nodes() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ParameterBlock {
  std::string name;
  std::size_t count = 0;
};

struct ParameterCount {
  std::vector<ParameterBlock> blocks;
  std::size_t total = 0;
};

/// Trainable parameter count implied by a configuration alone.
ParameterCount count_parameters(const ModelConfig& config);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Graph convolutional autoencoder plus the parameter-to-latent MLP.
///
/// Fields enter as stacked rows: a batch of B snapshots is a (B * n_h) x d
/// tensor, node-major within each snapshot. Flattening to the FC input is the
/// row-major reshape, so node 0's channels come first.
class GcaModel {
 public:
  /// Samples the pool mask from the config seed when pooling is enabled.
  GcaModel(ModelConfig config, Graph graph);
  /// Uses the given mask instead of sampling one (restoring a checkpoint).
  GcaModel(ModelConfig config, Graph graph, std::optional<PoolMask> mask);

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  [[nodiscard]] const Graph& graph() const { return graph_; }
  [[nodiscard]] const Graph& coarse_graph() const { return pooling() ? coarse_ : graph_; }
  [[nodiscard]] const std::optional<PoolMask>& mask() const { return mask_; }
  [[nodiscard]] bool pooling() const { return mask_.has_value(); }
  /// Components of the pooled graph; one entry when it stayed connected.
  [[nodiscard]] const std::vector<std::size_t>& coarse_components() const { return coarse_components_; }

  /// (B * n_h) x d -> B x n.
  [[nodiscard]] Tensor encode(const Tensor& fields) const;
  /// Graph stages of the encoder only: (B * n_h) x d -> (B * m) x d.
  [[nodiscard]] Tensor encode_graph_stage(const Tensor& fields) const;
  /// B x n -> (B * n_h) x d.
  [[nodiscard]] Tensor decode(const Tensor& latent) const;
  /// Scaled parameters B x P -> B x n.
  [[nodiscard]] Tensor latent_map(const Tensor& mu) const;

  [[nodiscard]] std::vector<NamedTensor> named_parameters() const;
  [[nodiscard]] std::vector<Tensor> parameters() const;
  [[nodiscard]] ParameterCount parameter_count() const;

  /// Copies values by name; throws ContractError on a missing or mis-shaped entry.
  void load_parameters(const std::vector<NamedTensor>& values);

 private:
  [[nodiscard]] std::size_t batch_of(const Tensor& fields, std::size_t nodes, const char* op) const;
  [[nodiscard]] Tensor conv_stack(const std::vector<MoNetKernel>& convs, const Graph& g,
                                  const BatchedEdges& edges, Tensor h, bool linear_last) const;

  ModelConfig config_;
  Graph graph_;
  std::optional<PoolMask> mask_;
  Graph coarse_;
  std::vector<std::size_t> coarse_components_;
  UnpoolPlan unpool_plan_;

  std::vector<MoNetKernel> enc_pre_;
  std::vector<MoNetKernel> enc_post_;
  DenseLayer enc_fc1_;
  DenseLayer enc_fc2_;
  DenseLayer dec_fc1_;
  DenseLayer dec_fc2_;
  std::vector<MoNetKernel> dec_post_;
  std::vector<MoNetKernel> dec_pre_;
  std::vector<DenseLayer> mlp_;
};

struct LossTerms {
  Tensor total;
  double mse = 0.0;
  double btt = 0.0;
};

/// mse + lambda * btt.
double combine_loss(double mse, double btt, double lambda);

/// L = L_MSE + lambda L_BTT over one batch. `fields` holds normalized
/// snapshots stacked as (B * n_h) x d and `mu` the scaled parameters B x P;
/// both losses are per-sample squared 2-norms averaged over B.
LossTerms loss_total(const GcaModel& model, const Tensor& fields, const Tensor& mu);

}  // namespace gcarom
