#include "gcarom/analysis.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "gcarom/rng.hpp"

namespace gcarom {

double relative_error(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) {
    throw AnalysisError("relative_error: truth has " + std::to_string(truth.size()) +
                        " entries, prediction " + std::to_string(pred.size()));
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double diff = truth[i] - pred[i];
    num += diff * diff;
    den += truth[i] * truth[i];
  }
  if (den == 0.0) throw AnalysisError("relative_error: reference field has zero norm");
  return std::sqrt(num / den);
}

double mean_relative_error(std::span<const double> errors) {
  if (errors.empty()) throw AnalysisError("mean_relative_error: empty error set");
  return std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
}

std::string to_string(ErrorMode mode) {
  return mode == ErrorMode::Normalized ? "normalized" : "denormalized";
}

ErrorReport make_error_report(std::vector<std::size_t> ids, std::vector<double> errors,
                              ErrorMode mode) {
  if (ids.size() != errors.size()) {
    throw AnalysisError("error report: " + std::to_string(ids.size()) + " ids for " +
                        std::to_string(errors.size()) + " errors");
  }
  ErrorReport r;
  r.mode = mode;
  r.mean = mean_relative_error(errors);
  r.max = *std::max_element(errors.begin(), errors.end());
  r.ids = std::move(ids);
  r.errors = std::move(errors);
  return r;
}

// ---------------------------------------------------------------------------
// POD

PodBasis pod_basis(std::span<const double> snapshots, std::size_t count, std::size_t dimension,
                   std::size_t modes) {
  if (snapshots.size() != count * dimension) {
    throw AnalysisError("pod_basis: buffer of " + std::to_string(snapshots.size()) +
                        " does not hold " + std::to_string(count) + " snapshots of " +
                        std::to_string(dimension));
  }
  if (modes == 0 || modes > std::min(count, dimension)) {
    throw AnalysisError("pod_basis: " + std::to_string(modes) + " modes requested from " +
                        std::to_string(count) + " snapshots of dimension " +
                        std::to_string(dimension));
  }
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMatrix> rows(snapshots.data(), static_cast<Eigen::Index>(count),
                                         static_cast<Eigen::Index>(dimension));
  const Eigen::MatrixXd columns = rows.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(columns, Eigen::ComputeThinU);
  PodBasis pod;
  pod.basis = svd.matrixU().leftCols(static_cast<Eigen::Index>(modes));
  pod.singular_values = svd.singularValues();
  return pod;
}

std::vector<double> pod_project(const PodBasis& pod, std::span<const double> field) {
  if (field.size() != pod.dimension()) {
    throw AnalysisError("pod_project: field of " + std::to_string(field.size()) +
                        " entries for basis dimension " + std::to_string(pod.dimension()));
  }
  const Eigen::Map<const Eigen::VectorXd> u(field.data(), static_cast<Eigen::Index>(field.size()));
  const Eigen::VectorXd projected = pod.basis * (pod.basis.transpose() * u);
  return {projected.data(), projected.data() + projected.size()};
}

ErrorReport pod_projection_error(const PodBasis& pod, std::span<const double> fields,
                                 std::vector<std::size_t> ids) {
  const std::size_t dim = pod.dimension();
  if (fields.size() != ids.size() * dim) {
    throw AnalysisError("pod_projection_error: " + std::to_string(ids.size()) +
                        " ids for a buffer of " + std::to_string(fields.size()));
  }
  std::vector<double> errors;
  errors.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto u = fields.subspan(i * dim, dim);
    errors.push_back(relative_error(u, pod_project(pod, u)));
  }
  return make_error_report(std::move(ids), std::move(errors), ErrorMode::Denormalized);
}

// ---------------------------------------------------------------------------
// Clustering

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::size_t point_count(std::span<const double> points, std::size_t dim, const char* op) {
  if (dim == 0 || points.size() % dim != 0) {
    throw AnalysisError(std::string(op) + ": buffer of " + std::to_string(points.size()) +
                        " is not a set of " + std::to_string(dim) + "-vectors");
  }
  return points.size() / dim;
}

}  // namespace

std::vector<int> kmeans(std::span<const double> points, std::size_t dim, std::size_t k,
                        std::uint64_t seed, std::size_t restarts) {
  const std::size_t n = point_count(points, dim, "kmeans");
  if (k == 0 || k > n) {
    throw AnalysisError("kmeans: " + std::to_string(k) + " clusters for " + std::to_string(n) +
                        " points");
  }
  const auto pt = [&](std::size_t i) { return points.subspan(i * dim, dim); };
  Rng rng(seed);
  std::vector<int> best_labels;
  double best_inertia = std::numeric_limits<double>::infinity();

  for (std::size_t attempt = 0; attempt < std::max<std::size_t>(restarts, 1); ++attempt) {
    // k-means++ seeding.
    std::vector<double> centers;
    centers.reserve(k * dim);
    const std::size_t first = static_cast<std::size_t>(rng.below(n));
    centers.insert(centers.end(), pt(first).begin(), pt(first).end());
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    for (std::size_t c = 1; c < k; ++c) {
      const std::span<const double> last(centers.data() + (c - 1) * dim, dim);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        nearest[i] = std::min(nearest[i], squared_distance(pt(i), last));
        total += nearest[i];
      }
      std::size_t pick = n - 1;
      if (total > 0.0) {
        double target = rng.uniform() * total;
        for (std::size_t i = 0; i < n; ++i) {
          target -= nearest[i];
          if (target < 0.0) {
            pick = i;
            break;
          }
        }
      } else {
        pick = static_cast<std::size_t>(rng.below(n));
      }
      centers.insert(centers.end(), pt(pick).begin(), pt(pick).end());
    }

    std::vector<int> labels(n, -1);
    double inertia = 0.0;
    for (int iter = 0; iter < 300; ++iter) {
      bool changed = false;
      inertia = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
          const double dd = squared_distance(pt(i), {centers.data() + c * dim, dim});
          if (dd < best_d) {
            best_d = dd;
            best = static_cast<int>(c);
          }
        }
        inertia += best_d;
        if (labels[i] != best) {
          labels[i] = best;
          changed = true;
        }
      }
      if (!changed) break;
      std::vector<double> sums(k * dim, 0.0);
      std::vector<std::size_t> counts(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::size_t>(labels[i]);
        ++counts[c];
        for (std::size_t j = 0; j < dim; ++j) sums[c * dim + j] += points[i * dim + j];
      }
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;  // empty cluster keeps its center
        for (std::size_t j = 0; j < dim; ++j) {
          centers[c * dim + j] = sums[c * dim + j] / static_cast<double>(counts[c]);
        }
      }
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_labels = labels;
    }
  }
  return best_labels;
}

SpectralResult spectral_cluster(std::span<const double> points, std::size_t dim, std::size_t k,
                                std::optional<double> sigma, std::uint64_t seed) {
  const std::size_t n = point_count(points, dim, "spectral_cluster");
  if (k == 0 || n < k) {
    throw AnalysisError("spectral_cluster: " + std::to_string(n) + " points for " +
                        std::to_string(k) + " clusters");
  }
  const auto pt = [&](std::size_t i) { return points.subspan(i * dim, dim); };

  Eigen::MatrixXd dist2(n, n);
  std::vector<double> pairwise;
  pairwise.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    dist2(i, i) = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d2 = squared_distance(pt(i), pt(j));
      dist2(i, j) = dist2(j, i) = d2;
      pairwise.push_back(std::sqrt(d2));
    }
  }
  double bandwidth = 0.0;
  if (sigma) {
    bandwidth = *sigma;
  } else if (!pairwise.empty()) {
    const auto mid = pairwise.begin() + static_cast<std::ptrdiff_t>(pairwise.size() / 2);
    std::nth_element(pairwise.begin(), mid, pairwise.end());
    bandwidth = *mid;
    if (pairwise.size() % 2 == 0) {
      const double lower = *std::max_element(pairwise.begin(), mid);
      bandwidth = 0.5 * (bandwidth + lower);
    }
  }
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw AnalysisError("spectral_cluster: degenerate similarity bandwidth (points coincide)");
  }

  Eigen::MatrixXd affinity = (-dist2 / (2.0 * bandwidth * bandwidth)).array().exp().matrix();
  affinity.diagonal().setZero();
  Eigen::VectorXd inv_sqrt_deg = affinity.rowwise().sum();
  for (Eigen::Index i = 0; i < inv_sqrt_deg.size(); ++i) {
    const double deg = inv_sqrt_deg(i);
    inv_sqrt_deg(i) = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  Eigen::MatrixXd laplacian =
      -(inv_sqrt_deg.asDiagonal() * affinity * inv_sqrt_deg.asDiagonal());
  laplacian.diagonal().array() += 1.0;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(laplacian);
  if (eig.info() != Eigen::Success) throw AnalysisError("spectral_cluster: eigensolver failed");
  const Eigen::MatrixXd vectors = eig.eigenvectors().leftCols(static_cast<Eigen::Index>(k));

  std::vector<double> embedding(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const double norm = vectors.row(static_cast<Eigen::Index>(i)).norm();
    for (std::size_t j = 0; j < k; ++j) {
      const double v = vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      embedding[i * k + j] = norm > 0.0 ? v / norm : 0.0;
    }
  }

  SpectralResult out;
  out.sigma = bandwidth;
  out.labels = kmeans(embedding, k, k, seed);
  for (std::size_t j = 0; j < k; ++j) out.eigenvalues.push_back(eig.eigenvalues()(static_cast<Eigen::Index>(j)));
  return out;
}

double best_permutation_agreement(std::span<const int> labels, std::span<const int> truth) {
  if (labels.size() != truth.size() || labels.empty()) {
    throw AnalysisError("best_permutation_agreement: label sets differ in size or are empty");
  }
  int classes = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || truth[i] < 0) throw AnalysisError("best_permutation_agreement: negative label");
    classes = std::max({classes, labels[i] + 1, truth[i] + 1});
  }
  if (classes > 8) throw AnalysisError("best_permutation_agreement: too many classes to enumerate");
  std::vector<int> perm(static_cast<std::size_t>(classes));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (perm[static_cast<std::size_t>(labels[i])] == truth[i]) ++hits;
    }
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(labels.size());
}

std::vector<int> knn_classify(std::span<const double> train, std::span<const int> train_labels,
                              std::span<const double> queries, std::size_t dim, std::size_t k) {
  const std::size_t n = point_count(train, dim, "knn_classify");
  const std::size_t q = point_count(queries, dim, "knn_classify");
  if (n == 0) throw AnalysisError("knn_classify: empty training set");
  if (train_labels.size() != n) throw AnalysisError("knn_classify: label count differs from points");
  if (k == 0 || k > n) {
    throw AnalysisError("knn_classify: k = " + std::to_string(k) + " with " + std::to_string(n) +
                        " training points");
  }
  std::vector<int> out(q);
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < q; ++i) {
    const auto query = queries.subspan(i * dim, dim);
    for (std::size_t j = 0; j < n; ++j) dist[j] = {squared_distance(query, train.subspan(j * dim, dim)), j};
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::map<int, std::size_t> votes;
    for (std::size_t j = 0; j < k; ++j) ++votes[train_labels[dist[j].second]];
    std::size_t top = 0;
    for (const auto& [label, count] : votes) top = std::max(top, count);
    // Walk neighbors nearest first; the first one from a top-voted label wins.
    for (std::size_t j = 0; j < k; ++j) {
      const int label = train_labels[dist[j].second];
      if (votes[label] == top) {
        out[i] = label;
        break;
      }
    }
  }
  return out;
}

std::vector<SweepRow> label_fraction_sweep(std::span<const double> points, std::size_t dim,
                                           std::span<const int> labels,
                                           std::span<const double> fractions, std::uint64_t seed,
                                           std::size_t k) {
  const std::size_t n = point_count(points, dim, "label_fraction_sweep");
  if (labels.size() != n) throw AnalysisError("label_fraction_sweep: label count differs from points");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);

  std::vector<SweepRow> rows;
  for (std::size_t f = 0; f < fractions.size(); ++f) {
    const double fraction = fractions[f];
    if (!(fraction > 0.0 && fraction < 100.0)) {
      throw AnalysisError("label_fraction_sweep: fraction " + std::to_string(fraction) +
                          " outside (0, 100)");
    }
    Rng rng(seed + f);
    std::vector<std::size_t> labeled;
    std::vector<std::size_t> scored;
    for (auto& [label, members] : by_class) {
      std::vector<std::size_t> shuffled = members;
      rng.shuffle(shuffled);
      const auto take = static_cast<std::size_t>(
          std::llround(fraction / 100.0 * static_cast<double>(shuffled.size())));
      if (take == 0) {
        throw AnalysisError("label_fraction_sweep: fraction " + std::to_string(fraction) +
                            " leaves class " + std::to_string(label) + " without labels");
      }
      labeled.insert(labeled.end(), shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(take));
      scored.insert(scored.end(), shuffled.begin() + static_cast<std::ptrdiff_t>(take), shuffled.end());
    }
    if (scored.empty()) {
      throw AnalysisError("label_fraction_sweep: fraction " + std::to_string(fraction) +
                          " leaves nothing to score");
    }
    std::sort(labeled.begin(), labeled.end());
    std::sort(scored.begin(), scored.end());
    std::vector<double> train_pts;
    std::vector<int> train_labels;
    for (std::size_t id : labeled) {
      train_pts.insert(train_pts.end(), points.begin() + static_cast<std::ptrdiff_t>(id * dim),
                       points.begin() + static_cast<std::ptrdiff_t>((id + 1) * dim));
      train_labels.push_back(labels[id]);
    }
    std::vector<double> query_pts;
    for (std::size_t id : scored) {
      query_pts.insert(query_pts.end(), points.begin() + static_cast<std::ptrdiff_t>(id * dim),
                       points.begin() + static_cast<std::ptrdiff_t>((id + 1) * dim));
    }
    const auto predicted =
        knn_classify(train_pts, train_labels, query_pts, dim, std::min(k, labeled.size()));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < scored.size(); ++i) {
      if (predicted[i] == labels[scored[i]]) ++hits;
    }
    rows.push_back({fraction, labeled.size(), scored.size(),
                    static_cast<double>(hits) / static_cast<double>(scored.size())});
  }
  return rows;
}

}  // namespace gcarom
