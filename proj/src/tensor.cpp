#include "gcarom/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace gcarom {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

using NodePtr = std::shared_ptr<detail::Node>;

ConstMap as_matrix(const detail::Node& n) {
  return ConstMap(n.values.data(), static_cast<Eigen::Index>(n.shape.rows),
                  static_cast<Eigen::Index>(n.shape.cols));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                     " vs " + to_string(b.shape()));
  }
}

void require_defined(const Tensor& a, const char* op) {
  if (!a.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

}  // namespace

std::string to_string(Shape s) {
  return "[" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + "]";
}

std::vector<double>& detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(values.size(), 0.0);
  return grad;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape.size()) {
    throw ShapeError("Tensor: " + std::to_string(values.size()) +
                     " values do not fill shape " + to_string(shape));
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = shape;
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(shape, std::vector<double>(shape.size(), 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1, 1}, {value}, requires_grad);
}

Tensor Tensor::from_op(Shape shape, std::vector<double> values,
                       const std::vector<Tensor>& inputs, BackwardFn backward,
                       const char* op) {
  Tensor out(shape, std::move(values));
  out.node_->op = op;
  const bool tracked = std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor& t) { return t.requires_grad(); });
  if (tracked) {
    out.node_->requires_grad = true;
    out.node_->inputs.reserve(inputs.size());
    for (const auto& t : inputs) out.node_->inputs.push_back(t.node_);
    out.node_->backward = std::move(backward);
  }
  return out;
}

Shape Tensor::shape() const { return node_ ? node_->shape : Shape{}; }

std::span<const double> Tensor::values() const {
  if (!node_) return {};
  return node_->values;
}

std::span<double> Tensor::mutable_values() {
  require_defined(*this, "mutable_values");
  if (!node_->inputs.empty()) {
    throw ContractError("mutable_values: tensor produced by '" +
                        std::string(node_->op) + "' is not a leaf");
  }
  return node_->values;
}

double Tensor::operator()(std::size_t r, std::size_t c) const {
  const Shape s = shape();
  if (r >= s.rows || c >= s.cols) {
    throw IndexError("Tensor: index (" + std::to_string(r) + ", " + std::to_string(c) +
                     ") outside " + to_string(s));
  }
  return node_->values[r * s.cols + c];
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor " + to_string(shape()) + " is not a scalar");
  return node_->values[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  require_defined(*this, "detach");
  return Tensor(node_->shape, node_->values, false);
}

std::string_view Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

// ---------------------------------------------------------------------------
// Operations

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  const Shape out_shape{a.rows(), b.cols()};
  std::vector<double> out(out_shape.size());
  MutMap(out.data(), static_cast<Eigen::Index>(out_shape.rows),
         static_cast<Eigen::Index>(out_shape.cols))
      .noalias() = as_matrix(*a.node()) * as_matrix(*b.node());

  NodePtr an = a.node();
  NodePtr bn = b.node();
  return Tensor::from_op(
      out_shape, std::move(out), {a, b},
      [an, bn](const detail::Node& self) {
        const ConstMap g(self.grad.data(), static_cast<Eigen::Index>(self.shape.rows),
                         static_cast<Eigen::Index>(self.shape.cols));
        if (an->requires_grad) {
          auto& ga = an->ensure_grad();
          MutMap(ga.data(), static_cast<Eigen::Index>(an->shape.rows),
                 static_cast<Eigen::Index>(an->shape.cols))
              .noalias() += g * as_matrix(*bn).transpose();
        }
        if (bn->requires_grad) {
          auto& gb = bn->ensure_grad();
          MutMap(gb.data(), static_cast<Eigen::Index>(bn->shape.rows),
                 static_cast<Eigen::Index>(bn->shape.cols))
              .noalias() += as_matrix(*an).transpose() * g;
        }
      },
      "matmul");
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Bwd bwd) {
  require_defined(a, op);
  const auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  NodePtr an = a.node();
  return Tensor::from_op(
      a.shape(), std::move(out), {a},
      [an, bwd](const detail::Node& self) {
        auto& ga = an->ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) {
          ga[i] += self.grad[i] * bwd(an->values[i], self.values[i]);
        }
      },
      op);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  require_same_shape(a, b, "add");
  const auto x = a.values();
  const auto y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  NodePtr an = a.node();
  NodePtr bn = b.node();
  return Tensor::from_op(
      a.shape(), std::move(out), {a, b},
      [an, bn](const detail::Node& self) {
        for (const auto& n : {an, bn}) {
          if (!n->requires_grad) continue;
          auto& g = n->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_defined(a, "sub");
  require_defined(b, "sub");
  require_same_shape(a, b, "sub");
  const auto x = a.values();
  const auto y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  NodePtr an = a.node();
  NodePtr bn = b.node();
  return Tensor::from_op(
      a.shape(), std::move(out), {a, b},
      [an, bn](const detail::Node& self) {
        if (an->requires_grad) {
          auto& g = an->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (bn->requires_grad) {
          auto& g = bn->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  require_same_shape(a, b, "mul");
  const auto x = a.values();
  const auto y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  NodePtr an = a.node();
  NodePtr bn = b.node();
  return Tensor::from_op(
      a.shape(), std::move(out), {a, b},
      [an, bn](const detail::Node& self) {
        if (an->requires_grad) {
          auto& g = an->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->values[i];
        }
        if (bn->requires_grad) {
          auto& g = bn->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->values[i];
        }
      },
      "mul");
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor elu(const Tensor& a) {
  return unary(
      a, "elu", [](double x) { return x >= 0.0 ? x : std::expm1(x); },
      [](double x, double y) { return x >= 0.0 ? 1.0 : y + 1.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b, double factor) {
  const auto need_b = [&]() -> const Tensor& {
    if (b == nullptr) throw ContractError("elementwise: binary op needs a second operand");
    return *b;
  };
  switch (op) {
    case ElementwiseOp::Add: return add(a, need_b());
    case ElementwiseOp::Sub: return sub(a, need_b());
    case ElementwiseOp::Mul: return mul(a, need_b());
    case ElementwiseOp::Scale: return scale(a, factor);
    case ElementwiseOp::Exp: return exp(a);
    case ElementwiseOp::Tanh: return tanh(a);
    case ElementwiseOp::Elu: return elu(a);
    case ElementwiseOp::Square: return square(a);
  }
  throw ContractError("elementwise: unknown op");
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double total = 0.0;
  for (double v : a.values()) total += v;
  NodePtr an = a.node();
  return Tensor::from_op(
      {1, 1}, {total}, {a},
      [an](const detail::Node& self) {
        auto& g = an->ensure_grad();
        const double s = self.grad[0];
        for (double& v : g) v += s;
      },
      "sum");
}

Tensor gather_rows(const Tensor& h, std::span<const std::size_t> index) {
  require_defined(h, "gather_rows");
  const std::size_t n = h.rows();
  const std::size_t c = h.cols();
  std::vector<double> out(index.size() * c);
  const auto x = h.values();
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] >= n) {
      throw IndexError("gather_rows: index " + std::to_string(index[e]) + " at position " +
                       std::to_string(e) + " exceeds " + std::to_string(n) + " rows");
    }
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(index[e] * c), c,
                out.begin() + static_cast<std::ptrdiff_t>(e * c));
  }
  NodePtr hn = h.node();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return Tensor::from_op(
      {index.size(), c}, std::move(out), {h},
      [hn, idx = std::move(idx), c](const detail::Node& self) {
        auto& g = hn->ensure_grad();
        for (std::size_t e = 0; e < idx.size(); ++e) {
          for (std::size_t k = 0; k < c; ++k) g[idx[e] * c + k] += self.grad[e * c + k];
        }
      },
      "gather_rows");
}

Tensor scatter_mean(const Tensor& msgs, std::span<const std::size_t> targets, std::size_t n) {
  require_defined(msgs, "scatter_mean");
  if (msgs.rows() != targets.size()) {
    throw ShapeError("scatter_mean: " + std::to_string(targets.size()) + " targets for messages " +
                     to_string(msgs.shape()));
  }
  const std::size_t c = msgs.cols();
  std::vector<double> counts(n, 0.0);
  for (std::size_t e = 0; e < targets.size(); ++e) {
    if (targets[e] >= n) {
      throw IndexError("scatter_mean: target " + std::to_string(targets[e]) + " at position " +
                       std::to_string(e) + " exceeds " + std::to_string(n) + " nodes");
    }
    counts[targets[e]] += 1.0;
  }
  std::vector<double> out(n * c, 0.0);
  const auto x = msgs.values();
  for (std::size_t e = 0; e < targets.size(); ++e) {
    const std::size_t u = targets[e];
    for (std::size_t k = 0; k < c; ++k) out[u * c + k] += x[e * c + k];
  }
  for (std::size_t u = 0; u < n; ++u) {
    if (counts[u] == 0.0) continue;
    const double inv = 1.0 / counts[u];
    for (std::size_t k = 0; k < c; ++k) out[u * c + k] *= inv;
  }
  NodePtr mn = msgs.node();
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return Tensor::from_op(
      {n, c}, std::move(out), {msgs},
      [mn, tgt = std::move(tgt), counts = std::move(counts), c](const detail::Node& self) {
        auto& g = mn->ensure_grad();
        for (std::size_t e = 0; e < tgt.size(); ++e) {
          const std::size_t u = tgt[e];
          const double inv = 1.0 / counts[u];
          for (std::size_t k = 0; k < c; ++k) g[e * c + k] += self.grad[u * c + k] * inv;
        }
      },
      "scatter_mean");
}

Tensor scale_rows(const Tensor& a, const Tensor& weights) {
  require_defined(a, "scale_rows");
  require_defined(weights, "scale_rows");
  if (weights.shape() != Shape{a.rows(), 1}) {
    throw ShapeError("scale_rows: weights " + to_string(weights.shape()) + " do not match rows of " +
                     to_string(a.shape()));
  }
  const std::size_t c = a.cols();
  const auto x = a.values();
  const auto w = weights.values();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t k = 0; k < c; ++k) out[r * c + k] = w[r] * x[r * c + k];
  }
  NodePtr an = a.node();
  NodePtr wn = weights.node();
  return Tensor::from_op(
      a.shape(), std::move(out), {a, weights},
      [an, wn, c](const detail::Node& self) {
        const std::size_t rows = an->shape.rows;
        if (an->requires_grad) {
          auto& g = an->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t k = 0; k < c; ++k) g[r * c + k] += self.grad[r * c + k] * wn->values[r];
          }
        }
        if (wn->requires_grad) {
          auto& g = wn->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (std::size_t k = 0; k < c; ++k) acc += self.grad[r * c + k] * an->values[r * c + k];
            g[r] += acc;
          }
        }
      },
      "scale_rows");
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_defined(a, "add_bias");
  require_defined(bias, "add_bias");
  if (bias.shape() != Shape{1, a.cols()}) {
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " does not match columns of " +
                     to_string(a.shape()));
  }
  const std::size_t c = a.cols();
  const auto x = a.values();
  const auto b = bias.values();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t k = 0; k < c; ++k) out[r * c + k] = x[r * c + k] + b[k];
  }
  NodePtr an = a.node();
  NodePtr bn = bias.node();
  return Tensor::from_op(
      a.shape(), std::move(out), {a, bias},
      [an, bn, c](const detail::Node& self) {
        if (an->requires_grad) {
          auto& g = an->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (bn->requires_grad) {
          auto& g = bn->ensure_grad();
          const std::size_t rows = an->shape.rows;
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t k = 0; k < c; ++k) g[k] += self.grad[r * c + k];
          }
        }
      },
      "add_bias");
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape.size() != a.size()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  NodePtr an = a.node();
  return Tensor::from_op(
      shape, std::vector<double>(a.values().begin(), a.values().end()), {a},
      [an](const detail::Node& self) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      },
      "reshape");
}

void backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; reversing it gives a topological order in which
  // each node runs only after every consumer has added its contribution.
  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto& seed = loss.node()->ensure_grad();
  seed[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    node->backward(*node);
    // Interior gradients are consumed; only leaves keep theirs.
    std::vector<double>().swap(node->grad);
  }
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(std::span<Tensor> params, AdamState& state, double lr, double weight_decay) {
  if (state.first_moment.empty() && state.second_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ContractError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                        " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw ContractError("adam_step: parameter " + std::to_string(i) + " " +
                          to_string(params[i].shape()) + " has no gradient");
    }
    if (state.first_moment[i].size() != params[i].size() ||
        state.second_moment[i].size() != params[i].size()) {
      throw ContractError("adam_step: moment buffers do not match parameter " + std::to_string(i));
    }
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(state.beta1, t);
  const double bias2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].mutable_values();
    const auto grad = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = grad[j] + weight_decay * theta[j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      theta[j] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace gcarom
