#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcarom/analysis.hpp"
#include "gcarom/graph.hpp"
#include "gcarom/model.hpp"

namespace gcarom {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solution snapshots over a parameter set on one shared mesh.
struct SnapshotDataset {
  std::string name;
  Mesh mesh;
  std::size_t num_samples = 0;  ///< N_S
  std::size_t components = 1;   ///< d
  std::size_t param_dim = 2;    ///< P
  std::vector<double> params;   ///< N_S x P
  std::vector<double> fields;   ///< N_S x (N_h * d), node-major within a snapshot
  std::vector<int> labels;      ///< optional regime label per sample

  [[nodiscard]] std::size_t num_nodes() const { return mesh.num_nodes(); }
  [[nodiscard]] std::size_t field_size() const { return num_nodes() * components; }
  [[nodiscard]] std::span<const double> field(std::size_t i) const;
  [[nodiscard]] std::span<const double> param(std::size_t i) const;

  /// Throws DataError on inconsistent sizes or non-finite values.
  void validate() const;

  friend bool operator==(const SnapshotDataset&, const SnapshotDataset&) = default;
};

/// Column (node-wise) then row (sample-wise) standardization statistics.
struct NormalizationStats {
  std::vector<double> node_mean;    ///< N_h * d, fitted on the training ids
  std::vector<double> node_std;
  std::vector<double> sample_mean;  ///< N_S, one per sample
  std::vector<double> sample_std;
  std::vector<double> param_min;    ///< P, training range for the [-1, 1] map
  std::vector<double> param_max;
  double floor = 1e-12;             ///< stds below this are replaced by 1

  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

struct NormalizedData {
  std::vector<double> fields;  ///< N_S x (N_h * d)
  NormalizationStats stats;
};

/// Standardizes every column across the `fit_ids` samples (all samples when
/// empty), then every row of the result. Population standard deviations.
NormalizedData normalize(const SnapshotDataset& dataset, std::span<const std::size_t> fit_ids = {});

/// Inverts both stages for the listed samples; `normalized` holds one row per id.
std::vector<double> denormalize(std::span<const double> normalized, const NormalizationStats& stats,
                                std::span<const std::size_t> sample_ids);

/// Maps parameters (rows of P) into [-1, 1] with the training min/max.
std::vector<double> scale_params(std::span<const double> params, const NormalizationStats& stats);

struct Split {
  std::vector<std::size_t> train;  ///< sorted
  std::vector<std::size_t> test;   ///< sorted

  friend bool operator==(const Split&, const Split&) = default;
};

/// ceil(train_rate / 100 * n) seeded-shuffled samples for training, the rest for testing.
Split split_dataset(std::size_t n, double train_rate, std::uint64_t seed);

struct EpochLoss {
  double mse = 0.0;
  double btt = 0.0;
  double total = 0.0;
};

struct TrainHistory {
  std::vector<EpochLoss> epochs;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  ModelConfig config;
};

/// Writes "epoch,l_mse,l_btt,total" rows.
void write_history_csv(const TrainHistory& history, const std::string& path);

/// Trained surrogate with everything needed to evaluate it.
struct TrainResult {
  GcaModel model;
  TrainHistory history;
  NormalizationStats stats;
  Split split;
};

using EpochCallback = std::function<void(std::size_t epoch, const EpochLoss& loss)>;

/// Adam on L = L_MSE + lambda L_BTT over the normalized training split.
/// Throws NumericalError when the loss turns non-finite.
TrainResult train(const ModelConfig& config, const SnapshotDataset& dataset,
                  const EpochCallback& on_epoch = {});

/// Stacks the normalized rows of `ids` as a (|ids| * N_h) x d tensor.
Tensor stack_fields(std::span<const double> normalized, std::span<const std::size_t> ids,
                    std::size_t n_h, std::size_t d);

/// Bottleneck vectors (|ids| x n, row-major) from the encoder applied to the
/// normalized snapshots.
std::vector<double> encoder_latents(const GcaModel& model, const NormalizationStats& stats,
                                    const SnapshotDataset& dataset, std::span<const std::size_t> ids);

/// Bottleneck vectors predicted by the parameter map.
std::vector<double> map_latents(const GcaModel& model, const NormalizationStats& stats,
                                const SnapshotDataset& dataset, std::span<const std::size_t> ids);

struct Evaluation {
  ErrorReport denormalized;
  ErrorReport normalized;
  std::vector<double> predictions;  ///< de-normalized, one row per id
};

/// Online prediction (parameter map then decoder) compared with the stored
/// snapshots. Row-stage inversion uses each sample's own statistics.
Evaluation evaluate(const GcaModel& model, const NormalizationStats& stats,
                    const SnapshotDataset& dataset, std::span<const std::size_t> ids);

}  // namespace gcarom
