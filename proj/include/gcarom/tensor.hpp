#pragma once

// Reverse-mode automatic differentiation over dense row-major f64 matrices.
//
// A Tensor is a cheap handle onto a shared graph node. Every operation below
// returns a fresh node that remembers its inputs and a backward rule whenever
// at least one input requires a gradient; otherwise no graph is recorded.
// Batched graph data is laid out as stacked rows (sample b, node i) -> row
// b * N + i, so all operations stay two-dimensional.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gcarom {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  [[nodiscard]] std::size_t size() const { return rows * cols; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(Shape s);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// A caller broke an operation precondition that is not a shape problem.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Propagates this node's grad into the grads of `inputs`.
  std::function<void(const Node&)> backward;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  using BackwardFn = std::function<void(const detail::Node&)>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  /// Builds the result of a custom operation. `backward` is kept only when an
  /// input requires a gradient; it receives the output node and must add into
  /// the grads of the inputs it captured.
  static Tensor from_op(Shape shape, std::vector<double> values,
                        const std::vector<Tensor>& inputs, BackwardFn backward,
                        const char* op);

  [[nodiscard]] bool defined() const { return node_ != nullptr; }
  [[nodiscard]] Shape shape() const;
  [[nodiscard]] std::size_t rows() const { return shape().rows; }
  [[nodiscard]] std::size_t cols() const { return shape().cols; }
  [[nodiscard]] std::size_t size() const { return shape().size(); }

  [[nodiscard]] std::span<const double> values() const;
  /// Writable storage; only valid on leaves (parameters and inputs).
  [[nodiscard]] std::span<double> mutable_values();
  [[nodiscard]] double operator()(std::size_t r, std::size_t c) const;
  [[nodiscard]] double item() const;

  [[nodiscard]] bool requires_grad() const;
  [[nodiscard]] bool has_grad() const;
  [[nodiscard]] std::span<const double> grad() const;
  void zero_grad();

  /// Same values, no history, no gradient requirement.
  [[nodiscard]] Tensor detach() const;
  [[nodiscard]] std::string_view op_name() const;

  [[nodiscard]] const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// ---------------------------------------------------------------------------
// Operations

Tensor matmul(const Tensor& a, const Tensor& b);

enum class ElementwiseOp { Add, Sub, Mul, Scale, Exp, Tanh, Elu, Square };

/// Pointwise op. Binary ops need equal shapes; Scale uses `factor`.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b = nullptr,
                   double factor = 1.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor exp(const Tensor& a);
Tensor tanh(const Tensor& a);
/// x for x >= 0, exp(x) - 1 otherwise.
Tensor elu(const Tensor& a);
Tensor square(const Tensor& a);

/// Sum of all entries as a 1x1 tensor.
Tensor sum(const Tensor& a);

/// Row e of the result is row index[e] of h.
Tensor gather_rows(const Tensor& h, std::span<const std::size_t> index);

/// Row u of the result is the mean of the message rows targeting u; rows with
/// no incoming message are zero.
Tensor scatter_mean(const Tensor& msgs, std::span<const std::size_t> targets,
                    std::size_t n);

/// Multiplies row r of `a` by weights(r, 0); weights is rows x 1.
Tensor scale_rows(const Tensor& a, const Tensor& weights);

/// Adds the 1 x c row `bias` to every row of `a`.
Tensor add_bias(const Tensor& a, const Tensor& bias);

/// Reinterprets the row-major buffer with a new shape of equal size.
Tensor reshape(const Tensor& a, Shape shape);

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::size_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One Adam update with bias correction. Weight decay is added to the
/// gradient as an L2 term before the moment updates.
void adam_step(std::span<Tensor> params, AdamState& state, double lr,
               double weight_decay);

}  // namespace gcarom
