#include "gcarom/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "gcarom/config.hpp"
#include "gcarom/rng.hpp"

namespace gcarom {

namespace {

// Mini-batch order draws from its own stream so it never perturbs the split.
constexpr std::uint64_t kBatchStream = 0xD1B54A32D192ED03ULL;
constexpr std::size_t kEvalChunk = 64;

struct MeanStd {
  double mean = 0.0;
  double std = 1.0;
};

template <typename Get>
MeanStd mean_std(std::size_t count, Get get, double floor) {
  double mean = 0.0;
  for (std::size_t i = 0; i < count; ++i) mean += get(i);
  mean /= static_cast<double>(count);
  double var = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = get(i) - mean;
    var += d * d;
  }
  const double sd = std::sqrt(var / static_cast<double>(count));
  return {mean, sd < floor ? 1.0 : sd};
}

std::vector<double> rows_of(std::span<const double> buffer, std::span<const std::size_t> ids,
                            std::size_t width) {
  std::vector<double> out;
  out.reserve(ids.size() * width);
  for (std::size_t id : ids) {
    const auto first = buffer.begin() + static_cast<std::ptrdiff_t>(id * width);
    out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(width));
  }
  return out;
}

void check_dims(const ModelConfig& config, const SnapshotDataset& dataset) {
  if (config.n_h != dataset.num_nodes() || config.d != dataset.components ||
      config.param_dim != dataset.param_dim) {
    throw DataError("dataset (N_h = " + std::to_string(dataset.num_nodes()) +
                    ", d = " + std::to_string(dataset.components) +
                    ", P = " + std::to_string(dataset.param_dim) +
                    ") does not match the model config (N_h = " + std::to_string(config.n_h) +
                    ", d = " + std::to_string(config.d) +
                    ", P = " + std::to_string(config.param_dim) + ")");
  }
}

}  // namespace

std::span<const double> SnapshotDataset::field(std::size_t i) const {
  return std::span<const double>(fields).subspan(i * field_size(), field_size());
}

std::span<const double> SnapshotDataset::param(std::size_t i) const {
  return std::span<const double>(params).subspan(i * param_dim, param_dim);
}

void SnapshotDataset::validate() const {
  validate_mesh(mesh);
  if (params.size() != num_samples * param_dim) {
    throw DataError("dataset '" + name + "': " + std::to_string(params.size()) +
                    " parameter values for " + std::to_string(num_samples) + " samples of P = " +
                    std::to_string(param_dim));
  }
  if (fields.size() != num_samples * field_size()) {
    throw DataError("dataset '" + name + "': " + std::to_string(fields.size()) +
                    " field values for " + std::to_string(num_samples) + " samples of " +
                    std::to_string(field_size()));
  }
  if (!labels.empty() && labels.size() != num_samples) {
    throw DataError("dataset '" + name + "': " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(num_samples) + " samples");
  }
  const auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(params.begin(), params.end(), finite) ||
      !std::all_of(fields.begin(), fields.end(), finite)) {
    throw DataError("dataset '" + name + "': non-finite values");
  }
}

NormalizedData normalize(const SnapshotDataset& dataset, std::span<const std::size_t> fit_ids) {
  dataset.validate();
  const std::size_t ns = dataset.num_samples;
  if (ns < 2) throw DataError("normalize: at least two samples are required");
  std::vector<std::size_t> all;
  if (fit_ids.empty()) {
    all.resize(ns);
    std::iota(all.begin(), all.end(), std::size_t{0});
    fit_ids = all;
  }
  for (std::size_t id : fit_ids) {
    if (id >= ns) throw DataError("normalize: sample id " + std::to_string(id) + " out of range");
  }

  const std::size_t width = dataset.field_size();
  const auto& u = dataset.fields;
  NormalizedData out;
  NormalizationStats& st = out.stats;
  st.node_mean.resize(width);
  st.node_std.resize(width);
  for (std::size_t j = 0; j < width; ++j) {
    const auto ms = mean_std(
        fit_ids.size(), [&](std::size_t i) { return u[fit_ids[i] * width + j]; }, st.floor);
    st.node_mean[j] = ms.mean;
    st.node_std[j] = ms.std;
  }
  out.fields.resize(u.size());
  for (std::size_t i = 0; i < ns; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      out.fields[i * width + j] = (u[i * width + j] - st.node_mean[j]) / st.node_std[j];
    }
  }
  st.sample_mean.resize(ns);
  st.sample_std.resize(ns);
  for (std::size_t i = 0; i < ns; ++i) {
    double* row = out.fields.data() + i * width;
    const auto ms = mean_std(width, [&](std::size_t j) { return row[j]; }, st.floor);
    st.sample_mean[i] = ms.mean;
    st.sample_std[i] = ms.std;
    for (std::size_t j = 0; j < width; ++j) row[j] = (row[j] - ms.mean) / ms.std;
  }

  const std::size_t p = dataset.param_dim;
  st.param_min.assign(p, std::numeric_limits<double>::infinity());
  st.param_max.assign(p, -std::numeric_limits<double>::infinity());
  for (std::size_t id : fit_ids) {
    for (std::size_t k = 0; k < p; ++k) {
      st.param_min[k] = std::min(st.param_min[k], dataset.params[id * p + k]);
      st.param_max[k] = std::max(st.param_max[k], dataset.params[id * p + k]);
    }
  }
  return out;
}

std::vector<double> denormalize(std::span<const double> normalized, const NormalizationStats& stats,
                                std::span<const std::size_t> sample_ids) {
  const std::size_t width = stats.node_mean.size();
  if (normalized.size() != sample_ids.size() * width) {
    throw DataError("denormalize: " + std::to_string(normalized.size()) + " values for " +
                    std::to_string(sample_ids.size()) + " samples of " + std::to_string(width));
  }
  std::vector<double> out(normalized.size());
  for (std::size_t r = 0; r < sample_ids.size(); ++r) {
    const std::size_t id = sample_ids[r];
    if (id >= stats.sample_mean.size()) {
      throw DataError("denormalize: no row statistics for sample " + std::to_string(id));
    }
    for (std::size_t j = 0; j < width; ++j) {
      const double z = normalized[r * width + j] * stats.sample_std[id] + stats.sample_mean[id];
      out[r * width + j] = z * stats.node_std[j] + stats.node_mean[j];
    }
  }
  return out;
}

std::vector<double> scale_params(std::span<const double> params, const NormalizationStats& stats) {
  const std::size_t p = stats.param_min.size();
  if (p == 0 || params.size() % p != 0) {
    throw DataError("scale_params: parameter buffer does not match P = " + std::to_string(p));
  }
  std::vector<double> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t k = i % p;
    const double span = stats.param_max[k] - stats.param_min[k];
    out[i] = span > 0.0 ? 2.0 * (params[i] - stats.param_min[k]) / span - 1.0 : 0.0;
  }
  return out;
}

Split split_dataset(std::size_t n, double train_rate, std::uint64_t seed) {
  if (!(train_rate > 0.0 && train_rate < 100.0)) {
    throw DataError("split: train rate " + std::to_string(train_rate) + " outside (0, 100)");
  }
  // Guard against representation error, e.g. 30 / 100 * 100 = 30.000000000000004.
  const double exact = train_rate * static_cast<double>(n) / 100.0;
  const auto n_train = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  if (n_train == 0 || n_train >= n) {
    throw DataError("split: " + std::to_string(train_rate) + "% of " + std::to_string(n) +
                    " samples leaves an empty training or testing set");
  }
  const auto order = random_permutation(n, seed);
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

void write_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write history to " + path);
  out << "epoch,l_mse,l_btt,total\n";
  for (std::size_t e = 0; e < history.epochs.size(); ++e) {
    const auto& l = history.epochs[e];
    out << e << ',' << format_double(l.mse) << ',' << format_double(l.btt) << ',' << format_double(l.total)
        << '\n';
  }
}

Tensor stack_fields(std::span<const double> normalized, std::span<const std::size_t> ids,
                    std::size_t n_h, std::size_t d) {
  return Tensor({ids.size() * n_h, d}, rows_of(normalized, ids, n_h * d));
}

TrainResult train(const ModelConfig& config, const SnapshotDataset& dataset,
                  const EpochCallback& on_epoch) {
  config.validate();
  check_dims(config, dataset);
  const auto start = std::chrono::steady_clock::now();

  Split split = split_dataset(dataset.num_samples, config.train_rate, config.seed);
  NormalizedData norm = normalize(dataset, split.train);
  GcaModel model(config, build_graph(dataset.mesh, config.pseudo));
  std::vector<Tensor> params = model.parameters();
  AdamState adam;

  const std::size_t n_train = split.train.size();
  const std::size_t batch =
      (config.batch_size == 0 || config.batch_size >= n_train) ? n_train : config.batch_size;
  const std::vector<double> scaled = scale_params(dataset.params, norm.stats);
  Rng order_rng(config.seed ^ kBatchStream);
  std::vector<std::size_t> order = split.train;

  TrainHistory history;
  history.seed = config.seed;
  history.config = config;
  history.epochs.reserve(config.epochs);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (batch < n_train) order_rng.shuffle(order);
    EpochLoss acc;
    for (std::size_t first = 0; first < n_train; first += batch) {
      const std::size_t count = std::min(batch, n_train - first);
      const std::span<const std::size_t> ids(order.data() + first, count);
      const Tensor fields = stack_fields(norm.fields, ids, config.n_h, config.d);
      const Tensor mu({count, config.param_dim}, rows_of(scaled, ids, config.param_dim));

      for (auto& p : params) p.zero_grad();
      LossTerms loss = loss_total(model, fields, mu);
      const double total = loss.total.item();
      if (!std::isfinite(total)) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             " (l_mse = " + std::to_string(loss.mse) +
                             ", l_btt = " + std::to_string(loss.btt) + ")");
      }
      backward(loss.total);
      adam_step(params, adam, config.lr, config.weight_decay);
      const double w = static_cast<double>(count) / static_cast<double>(n_train);
      acc.mse += w * loss.mse;
      acc.btt += w * loss.btt;
      acc.total += w * total;
    }
    history.epochs.push_back(acc);
    if (on_epoch) on_epoch(epoch, acc);
  }
  history.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return TrainResult{std::move(model), std::move(history), std::move(norm.stats), std::move(split)};
}

namespace {

// Normalized snapshots of `ids`; applies the stored statistics, so unseen
// samples are handled the same way as training ones.
std::vector<double> normalized_rows(const NormalizationStats& stats, const SnapshotDataset& dataset,
                                    std::span<const std::size_t> ids) {
  const std::size_t width = dataset.field_size();
  if (stats.node_mean.size() != width) {
    throw DataError("statistics cover " + std::to_string(stats.node_mean.size()) +
                    " columns, dataset has " + std::to_string(width));
  }
  std::vector<double> out;
  out.reserve(ids.size() * width);
  for (std::size_t id : ids) {
    if (id >= dataset.num_samples || id >= stats.sample_mean.size()) {
      throw DataError("sample id " + std::to_string(id) + " out of range");
    }
    const auto u = dataset.field(id);
    for (std::size_t j = 0; j < width; ++j) {
      const double z = (u[j] - stats.node_mean[j]) / stats.node_std[j];
      out.push_back((z - stats.sample_mean[id]) / stats.sample_std[id]);
    }
  }
  return out;
}

template <typename Fn>
void for_chunks(std::span<const std::size_t> ids, Fn fn) {
  for (std::size_t first = 0; first < ids.size(); first += kEvalChunk) {
    fn(ids.subspan(first, std::min(kEvalChunk, ids.size() - first)));
  }
}

}  // namespace

std::vector<double> encoder_latents(const GcaModel& model, const NormalizationStats& stats,
                                    const SnapshotDataset& dataset, std::span<const std::size_t> ids) {
  check_dims(model.config(), dataset);
  std::vector<double> out;
  for_chunks(ids, [&](std::span<const std::size_t> chunk) {
    const auto rows = normalized_rows(stats, dataset, chunk);
    const Tensor fields({chunk.size() * dataset.num_nodes(), dataset.components}, rows);
    const Tensor z = model.encode(fields);
    out.insert(out.end(), z.values().begin(), z.values().end());
  });
  return out;
}

std::vector<double> map_latents(const GcaModel& model, const NormalizationStats& stats,
                                const SnapshotDataset& dataset, std::span<const std::size_t> ids) {
  check_dims(model.config(), dataset);
  const auto mu = scale_params(rows_of(dataset.params, ids, dataset.param_dim), stats);
  const Tensor z = model.latent_map(Tensor({ids.size(), dataset.param_dim}, mu));
  return {z.values().begin(), z.values().end()};
}

Evaluation evaluate(const GcaModel& model, const NormalizationStats& stats,
                    const SnapshotDataset& dataset, std::span<const std::size_t> ids) {
  check_dims(model.config(), dataset);
  if (ids.empty()) throw DataError("evaluate: no samples selected");
  const std::size_t width = dataset.field_size();
  std::vector<double> predicted_norm;
  for_chunks(ids, [&](std::span<const std::size_t> chunk) {
    const auto latent = map_latents(model, stats, dataset, chunk);
    const Tensor z = model.decode(Tensor({chunk.size(), model.config().bottleneck}, latent));
    predicted_norm.insert(predicted_norm.end(), z.values().begin(), z.values().end());
  });
  const auto truth_norm = normalized_rows(stats, dataset, ids);

  Evaluation ev;
  ev.predictions = denormalize(predicted_norm, stats, ids);
  std::vector<double> err_norm;
  std::vector<double> err_denorm;
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto slice = [&](const std::vector<double>& v) {
      return std::span<const double>(v).subspan(r * width, width);
    };
    err_norm.push_back(relative_error(slice(truth_norm), slice(predicted_norm)));
    err_denorm.push_back(relative_error(dataset.field(ids[r]), slice(ev.predictions)));
  }
  const std::vector<std::size_t> id_vec(ids.begin(), ids.end());
  ev.normalized = make_error_report(id_vec, std::move(err_norm), ErrorMode::Normalized);
  ev.denormalized = make_error_report(id_vec, std::move(err_denorm), ErrorMode::Denormalized);
  return ev;
}

}  // namespace gcarom
