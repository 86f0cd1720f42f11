#include <doctest.h>

#include <cmath>
#include <vector>

#include "gcarom/rng.hpp"
#include "gcarom/tensor.hpp"
#include "support.hpp"

using namespace gcarom;
using gcarom::testing::fd_gradient_error;
using gcarom::testing::random_tensor;

namespace {

// Weighted sum so every output entry gets a distinct upstream gradient.
Tensor probe(const Tensor& t, std::uint64_t seed = 99) {
  Rng rng(seed);
  Tensor w = random_tensor(t.shape(), rng, -1.0, 1.0, false);
  return sum(mul(t, w));
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("construction checks the buffer length") {
  CHECK_THROWS_AS(Tensor(Shape{2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t(1, 0) == 4.0);
  CHECK_THROWS_AS((void)t(2, 0), IndexError);
  CHECK_THROWS_AS((void)t.item(), ShapeError);
}

TEST_CASE("matmul matches hand computation") {
  Tensor a(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b(Shape{3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c(0, 0) == 58.0);
  CHECK(c(0, 1) == 64.0);
  CHECK(c(1, 0) == 139.0);
  CHECK(c(1, 1) == 154.0);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("elu and its derivative on both sides of zero") {
  Tensor x(Shape{1, 4}, {-2.0, -0.5, 0.5, 3.0}, true);
  Tensor y = elu(x);
  CHECK(y(0, 0) == doctest::Approx(std::exp(-2.0) - 1.0).epsilon(1e-15));
  CHECK(y(0, 3) == 3.0);
  backward(sum(y));
  CHECK(x.grad()[0] == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));
  CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("scatter_mean leaves rows without messages at zero") {
  Tensor m(Shape{3, 1}, {2.0, 4.0, 9.0});
  const std::vector<std::size_t> targets{0, 0, 2};
  Tensor out = scatter_mean(m, targets, 4);
  CHECK(out(0, 0) == 3.0);
  CHECK(out(1, 0) == 0.0);
  CHECK(out(2, 0) == 9.0);
  CHECK(out(3, 0) == 0.0);
  const std::vector<std::size_t> bad{0, 5, 1};
  CHECK_THROWS_AS(scatter_mean(m, bad, 4), IndexError);
}

TEST_CASE("mutable_values is refused on op results") {
  Tensor a = Tensor::scalar(1.0, true);
  Tensor b = scale(a, 2.0);
  CHECK_THROWS_AS((void)b.mutable_values(), ContractError);
  CHECK(b.detach().requires_grad() == false);
}

TEST_CASE("no graph is recorded when nothing requires grad") {
  Tensor a = Tensor::scalar(1.0);
  Tensor b = exp(a);
  CHECK(b.node()->inputs.empty());
}

TEST_CASE("backward demands a scalar") {
  Tensor a(Shape{2, 1}, {1, 2}, true);
  CHECK_THROWS_AS(backward(a), ShapeError);
}

TEST_CASE("gradient accumulates through a shared input") {
  Tensor x = Tensor::scalar(3.0, true);
  backward(add(mul(x, x), x));
  CHECK(x.grad()[0] == 7.0);
}

TEST_CASE("finite differences: every op") {
  Rng rng(2024);
  Tensor a = random_tensor({4, 3}, rng, -1, 1, true);
  Tensor b = random_tensor({4, 3}, rng, -1, 1, true);
  Tensor m = random_tensor({3, 5}, rng, -1, 1, true);
  Tensor rw = random_tensor({4, 1}, rng, -1, 1, true);
  Tensor bias = random_tensor({1, 3}, rng, -1, 1, true);
  const std::vector<std::size_t> idx{3, 0, 0, 2, 1, 3};
  const std::vector<std::size_t> tgt{0, 2, 2, 1};
  const double tol = 1e-6;

  SUBCASE("matmul") { CHECK(fd_gradient_error([&] { return probe(matmul(a, m)); }, {a, m}) < tol); }
  SUBCASE("add sub mul") {
    CHECK(fd_gradient_error([&] { return probe(add(a, b)); }, {a, b}) < tol);
    CHECK(fd_gradient_error([&] { return probe(sub(a, b)); }, {a, b}) < tol);
    CHECK(fd_gradient_error([&] { return probe(mul(a, b)); }, {a, b}) < tol);
  }
  SUBCASE("unary") {
    CHECK(fd_gradient_error([&] { return probe(scale(a, -1.7)); }, a) < tol);
    CHECK(fd_gradient_error([&] { return probe(exp(a)); }, a) < tol);
    CHECK(fd_gradient_error([&] { return probe(tanh(a)); }, a) < tol);
    CHECK(fd_gradient_error([&] { return probe(elu(a)); }, a) < tol);
    CHECK(fd_gradient_error([&] { return probe(square(a)); }, a) < tol);
  }
  SUBCASE("sum") { CHECK(fd_gradient_error([&] { return sum(square(a)); }, a) < tol); }
  SUBCASE("gather and scatter") {
    CHECK(fd_gradient_error([&] { return probe(gather_rows(a, idx)); }, a) < tol);
    CHECK(fd_gradient_error([&] { return probe(scatter_mean(a, tgt, 3)); }, a) < tol);
  }
  SUBCASE("row ops") {
    CHECK(fd_gradient_error([&] { return probe(scale_rows(a, rw)); }, {a, rw}) < tol);
    CHECK(fd_gradient_error([&] { return probe(add_bias(a, bias)); }, {a, bias}) < tol);
    CHECK(fd_gradient_error([&] { return probe(reshape(a, {2, 6})); }, a) < tol);
  }
  SUBCASE("composition") {
    const auto f = [&] { return sum(square(tanh(add_bias(matmul(elu(a), m), Tensor(Shape{1, 5}, {0.1, 0.2, 0.3, 0.4, 0.5}))))); };
    CHECK(fd_gradient_error(f, {a, m}) < tol);
  }
}

TEST_CASE("adam first step moves each entry by about lr against its gradient") {
  Tensor p(Shape{1, 3}, {1.0, -2.0, 0.5}, true);
  backward(sum(mul(p, Tensor(Shape{1, 3}, {3.0, -0.25, 0.0}))));
  AdamState state;
  std::vector<Tensor> params{p};
  adam_step(params, state, 0.1, 0.0);
  // m_hat = g and v_hat = g^2 after one step, so the update is lr * g / (|g| + eps).
  CHECK(p(0, 0) == doctest::Approx(1.0 - 0.1 * 3.0 / (3.0 + 1e-8)).epsilon(1e-14));
  CHECK(p(0, 1) == doctest::Approx(-2.0 + 0.1 * 0.25 / (0.25 + 1e-8)).epsilon(1e-14));
  CHECK(p(0, 2) == 0.5);
  CHECK(state.step_count == 1);
}

TEST_CASE("adam weight decay acts as an L2 gradient term") {
  Tensor p(Shape{1, 1}, {2.0}, true);
  backward(scale(p, 0.0));
  AdamState state;
  std::vector<Tensor> params{p};
  adam_step(params, state, 0.01, 0.5);
  // g = 0 + 0.5 * 2 = 1.
  CHECK(p(0, 0) == doctest::Approx(2.0 - 0.01 / (1.0 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("adam two-step oracle") {
  Tensor p(Shape{1, 1}, {1.0}, true);
  AdamState state;
  std::vector<Tensor> params{p};
  double m = 0.0, v = 0.0, theta = 1.0;
  for (int t = 1; t <= 2; ++t) {
    p.zero_grad();
    backward(square(p));
    const double g = 2.0 * theta;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    theta -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
    adam_step(params, state, 0.05, 0.0);
    CHECK(p(0, 0) == doctest::Approx(theta).epsilon(1e-14));
  }
}

TEST_CASE("adam refuses a parameter without a gradient") {
  Tensor p(Shape{1, 1}, {1.0}, true);
  AdamState state;
  std::vector<Tensor> params{p};
  CHECK_THROWS_AS(adam_step(params, state, 0.1, 0.0), ContractError);
}

}  // TEST_SUITE
