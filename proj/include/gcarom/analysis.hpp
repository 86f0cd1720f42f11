#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gcarom {

class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// ||truth - pred||_2 / ||truth||_2 over the flattened field.
double relative_error(std::span<const double> truth, std::span<const double> pred);

/// Arithmetic mean; throws on an empty set.
double mean_relative_error(std::span<const double> errors);

enum class ErrorMode { Normalized, Denormalized };

std::string to_string(ErrorMode mode);

struct ErrorReport {
  ErrorMode mode = ErrorMode::Denormalized;
  std::vector<std::size_t> ids;  ///< sample ids the errors belong to
  std::vector<double> errors;
  double mean = 0.0;
  double max = 0.0;
};

ErrorReport make_error_report(std::vector<std::size_t> ids, std::vector<double> errors,
                              ErrorMode mode);

/// Orthonormal POD modes as columns of `basis` (dimension x modes).
struct PodBasis {
  Eigen::MatrixXd basis;
  Eigen::VectorXd singular_values;  ///< all singular values, non-increasing

  [[nodiscard]] std::size_t modes() const { return static_cast<std::size_t>(basis.cols()); }
  [[nodiscard]] std::size_t dimension() const { return static_cast<std::size_t>(basis.rows()); }
};

/// Left singular vectors of the snapshot matrix. `snapshots` is row-major
/// count x dimension (one snapshot per row); the first `modes` are kept.
PodBasis pod_basis(std::span<const double> snapshots, std::size_t count, std::size_t dimension,
                   std::size_t modes);

/// V V^T u.
std::vector<double> pod_project(const PodBasis& pod, std::span<const double> field);

/// Relative projection errors of row-major `fields` (one per id).
ErrorReport pod_projection_error(const PodBasis& pod, std::span<const double> fields,
                                 std::vector<std::size_t> ids);

struct SpectralResult {
  std::vector<int> labels;
  double sigma = 0.0;
  std::vector<double> eigenvalues;  ///< smallest k of the normalized Laplacian
};

/// Normalized spectral clustering of row-major points (count x dim):
/// Gaussian affinity with bandwidth sigma (median pairwise distance when
/// absent), symmetric normalized Laplacian, row-normalized bottom-k
/// eigenvectors, seeded k-means.
SpectralResult spectral_cluster(std::span<const double> points, std::size_t dim, std::size_t k,
                                std::optional<double> sigma, std::uint64_t seed);

/// Lloyd's k-means with k-means++ seeding; returns labels.
std::vector<int> kmeans(std::span<const double> points, std::size_t dim, std::size_t k,
                        std::uint64_t seed, std::size_t restarts = 8);

/// Fraction of points whose label matches the truth under the best relabeling.
double best_permutation_agreement(std::span<const int> labels, std::span<const int> truth);

/// Majority vote of the k nearest training points; ties go to the tied label
/// whose member is nearest.
std::vector<int> knn_classify(std::span<const double> train, std::span<const int> train_labels,
                              std::span<const double> queries, std::size_t dim, std::size_t k);

struct SweepRow {
  double fraction = 0.0;  ///< percent of labels used for training
  std::size_t labeled = 0;
  std::size_t scored = 0;
  double accuracy = 0.0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

/// For each percent in `fractions`, trains k-NN on a stratified seeded share
/// of the labels and scores the remaining points.
std::vector<SweepRow> label_fraction_sweep(std::span<const double> points, std::size_t dim,
                                           std::span<const int> labels,
                                           std::span<const double> fractions, std::uint64_t seed,
                                           std::size_t k = 5);

}  // namespace gcarom
