#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "gcarom/analysis.hpp"
#include "gcarom/sampling.hpp"
#include "gcarom/synthetic.hpp"
#include "support.hpp"

using namespace gcarom;
using gcarom::testing::fd_gradient_error;
using gcarom::testing::random_tensor;

namespace {

std::vector<Point2> kept_positions(const Mesh& mesh, const PoolMask& mask) {
  std::vector<Point2> out;
  for (std::size_t i : mask.kept) out.push_back(mesh.positions[i]);
  return out;
}

}  // namespace

TEST_SUITE("sampling") {

TEST_CASE("pool mask size, order and reproducibility") {
  const PoolMask m = make_pool_mask(441, 70.0, 5);
  CHECK(m.kept.size() == 309);  // round(0.7 * 441) = 308.7
  CHECK(std::is_sorted(m.kept.begin(), m.kept.end()));
  CHECK(std::adjacent_find(m.kept.begin(), m.kept.end()) == m.kept.end());
  CHECK(m == make_pool_mask(441, 70.0, 5));
  CHECK(m != make_pool_mask(441, 70.0, 6));
  CHECK(make_pool_mask(10, 100.0, 1).kept.size() == 10);
  CHECK(make_pool_mask(10, 1.0, 1).kept.size() == 1);
  CHECK_THROWS_AS(make_pool_mask(10, 0.0, 1), ContractError);
  CHECK_THROWS_AS(make_pool_mask(10, 120.0, 1), ContractError);
}

TEST_CASE("pooled graph is the induced subgraph") {
  const Mesh mesh = generate_mesh(8, 0.2, 3);
  const Graph g = build_graph(mesh);
  const PoolMask m = make_pool_mask(g.num_nodes, 50.0, 9);
  const PooledGraph p = pool(g, m);
  std::map<std::size_t, std::size_t> compact;
  for (std::size_t i = 0; i < m.kept.size(); ++i) compact[m.kept[i]] = i;
  std::vector<Edge> expected;
  for (const auto& e : g.edges) {
    if (compact.count(e.source) && compact.count(e.target)) {
      expected.push_back({compact[e.source], compact[e.target]});
    }
  }
  std::sort(expected.begin(), expected.end());
  CHECK(p.graph.edges == expected);
  CHECK(p.graph.num_nodes == m.kept.size());
  for (std::size_t i = 0; i < m.kept.size(); ++i) CHECK(p.graph.positions[i] == g.positions[m.kept[i]]);
  std::size_t total = 0;
  for (std::size_t s : p.component_sizes) total += s;
  CHECK(total == m.kept.size());
}

TEST_CASE("pooled rows follow the batch offsets") {
  PoolMask m{5, 40.0, 0, {1, 3}};
  CHECK(pooled_rows(m, 2) == std::vector<std::size_t>{1, 3, 6, 8});
}

TEST_CASE("unpool plan against a brute-force inverse-square oracle") {
  Rng rng(4);
  std::vector<Point2> coarse(12), fine(30);
  for (auto& p : coarse) p = {rng.uniform(), rng.uniform()};
  for (auto& p : fine) p = {rng.uniform(), rng.uniform()};
  const UnpoolPlan plan = make_unpool_plan(coarse, fine, 3);
  std::vector<double> values(12);
  for (auto& v : values) v = rng.uniform(-2, 2);
  const Tensor out = unpool(Tensor({12, 1}, values), plan);
  for (std::size_t i = 0; i < fine.size(); ++i) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < coarse.size(); ++j) {
      const double dx = fine[i].x - coarse[j].x, dy = fine[i].y - coarse[j].y;
      d.push_back({dx * dx + dy * dy, j});
    }
    std::sort(d.begin(), d.end());
    double num = 0.0, den = 0.0;
    for (int r = 0; r < 3; ++r) {
      num += values[d[r].second] / d[r].first;
      den += 1.0 / d[r].first;
    }
    CHECK(out(i, 0) == doctest::Approx(num / den).epsilon(1e-13));
  }
}

TEST_CASE("coincident nodes copy the coarse value") {
  const std::vector<Point2> coarse{{0, 0}, {1, 0}, {0, 1}};
  const std::vector<Point2> fine{{1, 0}, {0.5, 0.5}};
  const Tensor out = unpool_knn(coarse, Tensor({3, 1}, {4.0, 7.0, -1.0}), fine, 3);
  CHECK(out(0, 0) == 7.0);
  // Equidistant from all three.
  CHECK(out(1, 0) == doctest::Approx(10.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("unpooling reproduces constants exactly") {
  const Mesh mesh = generate_mesh(20, 0.25, 1);
  const PoolMask m = make_pool_mask(mesh.num_nodes(), 70.0, 2);
  const auto coarse = kept_positions(mesh, m);
  const Tensor out = unpool_knn(coarse, Tensor({coarse.size(), 1}, std::vector<double>(coarse.size(), 3.25)),
                                mesh.positions, 3);
  for (double v : out.values()) CHECK(std::abs(v - 3.25) < 1e-12);
}

TEST_CASE("unpooling a linear field is accurate to a few percent") {
  const Mesh mesh = generate_mesh(20, 0.25, 1);
  const PoolMask m = make_pool_mask(mesh.num_nodes(), 70.0, 2);
  const auto coarse = kept_positions(mesh, m);
  std::vector<double> cv, truth;
  for (const auto& p : coarse) cv.push_back(p.x + 2.0 * p.y);
  for (const auto& p : mesh.positions) truth.push_back(p.x + 2.0 * p.y);
  const Tensor out = unpool_knn(coarse, Tensor({coarse.size(), 1}, cv), mesh.positions, 3);
  CHECK(relative_error(truth, out.values()) < 5e-2);
}

TEST_CASE("unpool batches and channels") {
  Rng rng(12);
  std::vector<Point2> coarse(6), fine(10);
  for (auto& p : coarse) p = {rng.uniform(), rng.uniform()};
  for (auto& p : fine) p = {rng.uniform(), rng.uniform()};
  const UnpoolPlan plan = make_unpool_plan(coarse, fine, 2);
  Tensor x = random_tensor({12, 2}, rng, -1, 1, true);
  const Tensor out = unpool(x, plan);
  CHECK(out.shape() == Shape{20, 2});
  const Tensor second = unpool(Tensor({6, 2}, std::vector<double>(x.values().begin() + 12, x.values().end())), plan);
  CHECK(testing::max_abs_diff(out.values().subspan(20, 20), second.values()) == 0.0);
  Rng prng(1);
  Tensor w = random_tensor(out.shape(), prng);
  CHECK(fd_gradient_error([&] { return sum(mul(unpool(x, plan), w)); }, x) < 1e-6);
  CHECK_THROWS_AS(unpool(Tensor::zeros({7, 1}), plan), ShapeError);
}

TEST_CASE("k larger than the coarse set is rejected") {
  const std::vector<Point2> coarse{{0, 0}, {1, 0}};
  CHECK_THROWS_AS(make_unpool_plan(coarse, coarse, 3), ContractError);
}

}  // TEST_SUITE
