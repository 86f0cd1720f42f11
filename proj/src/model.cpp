#include "gcarom/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>

namespace gcarom {

namespace {

// Parameter initialization draws from a stream distinct from the mask's.
constexpr std::uint64_t kWeightStream = 0x9E3779B97F4A7C15ULL;

void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError("config: " + what);
}

std::pair<std::vector<double>, std::vector<double>> pseudo_range(const Graph& g) {
  const std::size_t dim = g.pseudo_width();
  std::vector<double> lo(dim, std::numeric_limits<double>::infinity());
  std::vector<double> hi(dim, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    for (std::size_t k = 0; k < dim; ++k) {
      lo[k] = std::min(lo[k], g.pseudo[e * dim + k]);
      hi[k] = std::max(hi[k], g.pseudo[e * dim + k]);
    }
  }
  return {lo, hi};
}

std::vector<MoNetKernel> make_convs(std::size_t count, const ModelConfig& c, const Graph& g,
                                    Rng& rng) {
  const auto [lo, hi] = pseudo_range(g);
  std::vector<MoNetKernel> convs;
  for (std::size_t i = 0; i < count; ++i) {
    convs.push_back(make_monet_kernel(c.d, c.d, c.filters, lo, hi, c.monet_bias, rng));
  }
  return convs;
}

std::size_t monet_count(const ModelConfig& c) {
  const std::size_t dim = pseudo_dim(c.pseudo);
  return c.filters * (2 * dim + c.d * c.d) + (c.monet_bias ? c.d : 0);
}

std::size_t dense_count(std::size_t in, std::size_t out) { return in * out + out; }

}  // namespace

void ModelConfig::validate() const {
  require(n_h > 0, "n_h must be positive");
  require(d > 0, "d must be positive");
  require(param_dim > 0, "param_dim must be positive");
  require(train_rate > 0.0 && train_rate < 100.0, "train_rate must lie in (0, 100)");
  require(!pooling || (pool_rate > 0.0 && pool_rate <= 100.0), "pool_rate must lie in (0, 100]");
  require(ffn > 0, "ffn must be positive");
  require(mlp_width > 0, "mlp_width must be positive");
  require(mlp_layers > 0, "mlp_layers must be positive");
  require(bottleneck > 0, "bottleneck must be positive");
  require(lambda >= 0.0, "lambda must be non-negative");
  require(hcp > 0, "hcp must be positive");
  require(!pooling || hcd > 0, "hcd must be positive when pooling");
  require(filters > 0, "filters must be positive");
  require(k_unpool > 0, "k_unpool must be positive");
  require(lr >= 0.0, "lr must be non-negative");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
}

std::size_t ModelConfig::coarse_nodes() const {
  if (!pooling) return n_h;
  const auto m = static_cast<std::size_t>(std::llround(pool_rate / 100.0 * static_cast<double>(n_h)));
  return std::clamp<std::size_t>(m, 1, n_h);
}

ParameterCount count_parameters(const ModelConfig& c) {
  c.validate();
  const std::size_t flat = c.d * c.coarse_nodes();
  ParameterCount out;
  const auto add = [&](std::string name, std::size_t n) {
    out.blocks.push_back({std::move(name), n});
    out.total += n;
  };
  add("encoder.conv_pre", c.hcp * monet_count(c));
  if (c.pooling) add("encoder.conv_post", c.hcd * monet_count(c));
  add("encoder.fc", dense_count(flat, c.ffn) + dense_count(c.ffn, c.bottleneck));
  add("decoder.fc", dense_count(c.bottleneck, c.ffn) + dense_count(c.ffn, flat));
  if (c.pooling) add("decoder.conv_post", c.hcd * monet_count(c));
  add("decoder.conv_pre", c.hcp * monet_count(c));
  std::size_t mlp = dense_count(c.param_dim, c.mlp_width);
  mlp += (c.mlp_layers - 1) * dense_count(c.mlp_width, c.mlp_width);
  mlp += dense_count(c.mlp_width, c.bottleneck);
  add("parameter_map", mlp);
  return out;
}

// ---------------------------------------------------------------------------

GcaModel::GcaModel(ModelConfig config, Graph graph)
    : GcaModel(config, std::move(graph),
               config.pooling ? std::optional<PoolMask>(make_pool_mask(config.n_h, config.pool_rate,
                                                                       config.seed))
                              : std::nullopt) {}

GcaModel::GcaModel(ModelConfig config, Graph graph, std::optional<PoolMask> mask)
    : config_(config), graph_(std::move(graph)), mask_(std::move(mask)) {
  config_.validate();
  if (graph_.num_nodes != config_.n_h) {
    throw ContractError("model: config expects " + std::to_string(config_.n_h) +
                        " nodes, graph has " + std::to_string(graph_.num_nodes));
  }
  if (graph_.pseudo_mode != config_.pseudo) {
    throw ContractError("model: graph pseudo-coordinates differ from the configured kind");
  }
  if (config_.pooling != mask_.has_value()) {
    throw ContractError("model: pool mask presence does not match the pooling flag");
  }
  if (mask_) {
    if (mask_->num_nodes != config_.n_h || mask_->kept.size() != config_.coarse_nodes()) {
      throw ContractError("model: pool mask does not match n_h and pool_rate");
    }
    auto pooled = pool(graph_, *mask_);
    coarse_ = std::move(pooled.graph);
    coarse_components_ = std::move(pooled.component_sizes);
    unpool_plan_ = make_unpool_plan(coarse_.positions, graph_.positions, config_.k_unpool);
  } else {
    coarse_components_ = {graph_.num_nodes};
  }

  Rng rng(config_.seed ^ kWeightStream);
  const std::size_t flat = config_.d * config_.coarse_nodes();
  enc_pre_ = make_convs(config_.hcp, config_, graph_, rng);
  if (mask_) enc_post_ = make_convs(config_.hcd, config_, coarse_, rng);
  enc_fc1_ = make_dense(flat, config_.ffn, Activation::Elu, rng);
  enc_fc2_ = make_dense(config_.ffn, config_.bottleneck, Activation::Identity, rng);
  dec_fc1_ = make_dense(config_.bottleneck, config_.ffn, Activation::Identity, rng);
  dec_fc2_ = make_dense(config_.ffn, flat, Activation::Elu, rng);
  if (mask_) dec_post_ = make_convs(config_.hcd, config_, coarse_, rng);
  dec_pre_ = make_convs(config_.hcp, config_, graph_, rng);
  mlp_.push_back(make_dense(config_.param_dim, config_.mlp_width, Activation::Tanh, rng));
  for (std::size_t i = 1; i < config_.mlp_layers; ++i) {
    mlp_.push_back(make_dense(config_.mlp_width, config_.mlp_width, Activation::Tanh, rng));
  }
  mlp_.push_back(make_dense(config_.mlp_width, config_.bottleneck, Activation::Identity, rng));

  // Decoder mirrors the encoder.
  if (enc_fc1_.in_features() != dec_fc2_.out_features() ||
      enc_fc1_.out_features() != dec_fc2_.in_features() ||
      enc_fc2_.in_features() != dec_fc1_.out_features() ||
      enc_fc2_.out_features() != dec_fc1_.in_features() || enc_pre_.size() != dec_pre_.size() ||
      enc_post_.size() != dec_post_.size()) {
    throw ContractError("model: decoder does not mirror the encoder");
  }
}

std::size_t GcaModel::batch_of(const Tensor& fields, std::size_t nodes, const char* op) const {
  if (fields.cols() != config_.d || fields.rows() == 0 || fields.rows() % nodes != 0) {
    throw ShapeError(std::string(op) + ": fields " + to_string(fields.shape()) +
                     " are not a stack of " + std::to_string(nodes) + " x " +
                     std::to_string(config_.d) + " snapshots");
  }
  return fields.rows() / nodes;
}

Tensor GcaModel::conv_stack(const std::vector<MoNetKernel>& convs, const Graph& g,
                            const BatchedEdges& edges, Tensor h, bool linear_last) const {
  for (std::size_t i = 0; i < convs.size(); ++i) {
    h = monet_forward(h, g, convs[i], edges);
    if (!(linear_last && i + 1 == convs.size())) h = elu(h);
  }
  return h;
}

Tensor GcaModel::encode_graph_stage(const Tensor& fields) const {
  const std::size_t batch = batch_of(fields, config_.n_h, "encode");
  const auto fine_edges = batch_edges(graph_, batch);
  Tensor h = skip_connect(fields, conv_stack(enc_pre_, graph_, fine_edges, fields, false));
  if (mask_) {
    h = gather_rows(h, pooled_rows(*mask_, batch));
    h = conv_stack(enc_post_, coarse_, batch_edges(coarse_, batch), h, false);
  }
  return h;
}

Tensor GcaModel::encode(const Tensor& fields) const {
  const Tensor h = encode_graph_stage(fields);
  const std::size_t batch = fields.rows() / config_.n_h;
  const Tensor flat = reshape(h, {batch, config_.d * config_.coarse_nodes()});
  return dense_forward(dense_forward(flat, enc_fc1_), enc_fc2_);
}

Tensor GcaModel::decode(const Tensor& latent) const {
  if (latent.cols() != config_.bottleneck || latent.rows() == 0) {
    throw ShapeError("decode: latent " + to_string(latent.shape()) + " expected B x " +
                     std::to_string(config_.bottleneck));
  }
  const std::size_t batch = latent.rows();
  const Tensor flat = dense_forward(dense_forward(latent, dec_fc1_), dec_fc2_);
  Tensor h = reshape(flat, {batch * config_.coarse_nodes(), config_.d});
  if (mask_) {
    h = conv_stack(dec_post_, coarse_, batch_edges(coarse_, batch), h, false);
    h = unpool(h, unpool_plan_);
  }
  const auto fine_edges = batch_edges(graph_, batch);
  return skip_connect(h, conv_stack(dec_pre_, graph_, fine_edges, h, true));
}

Tensor GcaModel::latent_map(const Tensor& mu) const {
  if (mu.cols() != config_.param_dim) {
    throw ShapeError("latent_map: parameters " + to_string(mu.shape()) + " expected B x " +
                     std::to_string(config_.param_dim));
  }
  Tensor h = mu;
  for (const auto& layer : mlp_) h = dense_forward(h, layer);
  return h;
}

std::vector<NamedTensor> GcaModel::named_parameters() const {
  std::vector<NamedTensor> out;
  const auto add_convs = [&](const std::string& prefix, const std::vector<MoNetKernel>& convs) {
    for (std::size_t i = 0; i < convs.size(); ++i) {
      const std::string p = prefix + "." + std::to_string(i) + ".";
      out.push_back({p + "means", convs[i].means});
      out.push_back({p + "sqrt_inv_var", convs[i].sqrt_inv_var});
      out.push_back({p + "weights", convs[i].weights});
      if (convs[i].bias.defined()) out.push_back({p + "bias", convs[i].bias});
    }
  };
  const auto add_dense = [&](const std::string& p, const DenseLayer& l) {
    out.push_back({p + ".weight", l.weight});
    out.push_back({p + ".bias", l.bias});
  };
  add_convs("encoder.conv_pre", enc_pre_);
  add_convs("encoder.conv_post", enc_post_);
  add_dense("encoder.fc1", enc_fc1_);
  add_dense("encoder.fc2", enc_fc2_);
  add_dense("decoder.fc1", dec_fc1_);
  add_dense("decoder.fc2", dec_fc2_);
  add_convs("decoder.conv_post", dec_post_);
  add_convs("decoder.conv_pre", dec_pre_);
  for (std::size_t i = 0; i < mlp_.size(); ++i) add_dense("parameter_map." + std::to_string(i), mlp_[i]);
  return out;
}

std::vector<Tensor> GcaModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

ParameterCount GcaModel::parameter_count() const {
  ParameterCount out;
  std::map<std::string, std::size_t> index;
  for (const auto& p : named_parameters()) {
    // "encoder.fc1.weight" -> "encoder.fc", "parameter_map.3.bias" -> "parameter_map".
    std::string block = p.name.substr(0, p.name.find('.', p.name.find('.') + 1));
    while (!block.empty() && (std::isdigit(static_cast<unsigned char>(block.back())) || block.back() == '.')) {
      block.pop_back();
    }
    if (!index.contains(block)) {
      index[block] = out.blocks.size();
      out.blocks.push_back({block, 0});
    }
    out.blocks[index[block]].count += p.tensor.size();
    out.total += p.tensor.size();
  }
  return out;
}

void GcaModel::load_parameters(const std::vector<NamedTensor>& values) {
  std::map<std::string, const Tensor*> lookup;
  for (const auto& v : values) lookup[v.name] = &v.tensor;
  for (auto& p : named_parameters()) {
    const auto it = lookup.find(p.name);
    if (it == lookup.end()) throw ContractError("load_parameters: missing '" + p.name + "'");
    if (it->second->shape() != p.tensor.shape()) {
      throw ContractError("load_parameters: '" + p.name + "' has shape " +
                          to_string(it->second->shape()) + ", model expects " +
                          to_string(p.tensor.shape()));
    }
    const auto src = it->second->values();
    auto dst = p.tensor.mutable_values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

// ---------------------------------------------------------------------------

double combine_loss(double mse, double btt, double lambda) { return mse + lambda * btt; }

LossTerms loss_total(const GcaModel& model, const Tensor& fields, const Tensor& mu) {
  if (fields.rows() == 0 || mu.rows() == 0) throw ContractError("loss_total: empty batch");
  const std::size_t batch = mu.rows();
  if (fields.rows() != batch * model.config().n_h) {
    throw ShapeError("loss_total: " + std::to_string(batch) + " parameter rows for fields " +
                     to_string(fields.shape()));
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  const Tensor latent = model.encode(fields);
  const Tensor recon = model.decode(latent);
  const Tensor mapped = model.latent_map(mu);
  const Tensor mse = scale(sum(square(sub(recon, fields))), inv_b);
  const Tensor btt = scale(sum(square(sub(mapped, latent))), inv_b);
  LossTerms out;
  out.mse = mse.item();
  out.btt = btt.item();
  out.total = add(mse, scale(btt, model.config().lambda));
  return out;
}

}  // namespace gcarom
