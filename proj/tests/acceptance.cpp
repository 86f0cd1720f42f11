// Acceptance runner: one PASS/FAIL line per criterion, details indented.
// Usage: acceptance [criterion numbers...]   (all when none given)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "gcarom/analysis.hpp"
#include "gcarom/checkpoint.hpp"
#include "gcarom/dataset_io.hpp"
#include "gcarom/layers.hpp"
#include "gcarom/pipeline.hpp"
#include "gcarom/sampling.hpp"
#include "gcarom/synthetic.hpp"
#include "support.hpp"

using namespace gcarom;
using testing::fd_gradient_error;
using testing::random_tensor;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& what) {
  std::printf("[%s] C%d %s\n", pass ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void detail(const std::string& s) {
  std::printf("    %s\n", s.c_str());
  std::fflush(stdout);
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// Shared desk-scale setting for the end-to-end runs.
constexpr std::size_t kResolution = 29;  // 900 nodes
constexpr double kJitter = 0.2;
constexpr std::uint64_t kMeshSeed = 1;

const Mesh& desk_mesh() {
  static const Mesh mesh = generate_mesh(kResolution, kJitter, kMeshSeed);
  return mesh;
}

ModelConfig desk_config(std::size_t n_h) {
  ModelConfig c;  // defaults: n = 15, lambda = 10, hcp = 3, ffn = 100, n_l = 50, 5000 epochs
  c.n_h = n_h;
  c.train_rate = 30.0;
  return c;
}

struct FamilyRun {
  SnapshotDataset data;
  TrainResult result;
  Evaluation eval;
  double seconds = 0.0;
};

FamilyRun run_family(Family family, bool pooling) {
  SnapshotDataset ds = generate_dataset(family, desk_mesh(), default_grid(family));
  ModelConfig c = desk_config(ds.num_nodes());
  if (pooling) {
    c.pooling = true;
    c.pool_rate = 70.0;
  }
  const auto t0 = Clock::now();
  TrainResult r = train(c, ds);
  const double secs = seconds_since(t0);
  Evaluation ev = evaluate(r.model, r.stats, ds, r.split.test);
  detail(to_string(family) + (pooling ? " + pooling" : "") + ": " + std::to_string(ds.num_nodes()) +
         " nodes, final loss " + sci(r.history.epochs.back().total) + ", " + sci(secs) + " s");
  return {std::move(ds), std::move(r), std::move(ev), secs};
}

double pod_mean(const SnapshotDataset& ds, const Split& split, std::size_t modes) {
  std::vector<double> tr, te;
  for (std::size_t i : split.train) tr.insert(tr.end(), ds.field(i).begin(), ds.field(i).end());
  for (std::size_t i : split.test) te.insert(te.end(), ds.field(i).begin(), ds.field(i).end());
  const PodBasis pod = pod_basis(tr, split.train.size(), ds.field_size(), modes);
  return pod_projection_error(pod, te, split.test).mean;
}

Tensor probe(const Tensor& t, std::uint64_t seed = 31) {
  Rng rng(seed);
  return sum(mul(t, random_tensor(t.shape(), rng)));
}

// --- criteria ---------------------------------------------------------------

void c1_gradients() {
  const auto t0 = Clock::now();
  Rng rng(1);
  std::map<std::string, double> ops;
  const auto check = [&](const std::string& name, const std::function<Tensor()>& f,
                         const std::vector<Tensor>& params) {
    ops[name] = fd_gradient_error(f, params);
  };
  Tensor a = random_tensor({4, 3}, rng, -1, 1, true);
  Tensor b = random_tensor({3, 5}, rng, -1, 1, true);
  Tensor c = random_tensor({4, 3}, rng, -1, 1, true);
  Tensor w = random_tensor({4, 1}, rng, -1, 1, true);
  Tensor bias = random_tensor({1, 3}, rng, -1, 1, true);
  check("matmul", [&] { return probe(matmul(a, b)); }, {a, b});
  check("add", [&] { return probe(add(a, c)); }, {a, c});
  check("sub", [&] { return probe(sub(a, c)); }, {a, c});
  check("mul", [&] { return probe(mul(a, c)); }, {a, c});
  check("scale", [&] { return probe(scale(a, -1.7)); }, {a});
  check("exp", [&] { return probe(exp(a)); }, {a});
  check("tanh", [&] { return probe(tanh(a)); }, {a});
  check("elu", [&] { return probe(elu(a)); }, {a});
  check("square", [&] { return probe(square(a)); }, {a});
  check("sum", [&] { return sum(mul(a, c)); }, {a, c});
  check("scale_rows", [&] { return probe(scale_rows(a, w)); }, {a, w});
  check("add_bias", [&] { return probe(add_bias(a, bias)); }, {a, bias});
  check("reshape", [&] { return probe(reshape(a, {2, 6})); }, {a});
  const std::vector<std::size_t> idx{3, 0, 0, 2, 1, 3, 3};
  const std::vector<std::size_t> tgt{0, 1, 1, 4, 2, 0, 2};
  check("gather_rows", [&] { return probe(gather_rows(a, idx)); }, {a});
  Tensor m = random_tensor({7, 3}, rng, -1, 1, true);
  check("scatter_mean", [&] { return probe(scatter_mean(m, tgt, 5)); }, {m});

  const Graph g = testing::random_graph(14, 3, 20);
  const std::vector<double> lo{0.0}, hi{0.6};
  MoNetKernel k = make_monet_kernel(2, 2, 3, lo, hi, true, rng);
  for (auto& v : k.sqrt_inv_var.mutable_values()) v = rng.uniform(0.8, 3.0);
  for (auto& v : k.bias.mutable_values()) v = rng.uniform(-0.3, 0.3);
  Tensor h = random_tensor({2 * 14, 2}, rng, -1, 1, true);
  check("gaussian_kernel",
        [&] { return probe(gaussian_kernel(g.pseudo, 1, k.means, k.sqrt_inv_var)); },
        {k.means, k.sqrt_inv_var});
  Tensor t = random_tensor({2 * 14, 6}, rng, -1, 1, true);
  Tensor omega = random_tensor({g.num_edges(), 3}, rng, 0, 1, true);
  check("monet_aggregate", [&] { return probe(monet_aggregate(t, omega, g)); }, {t, omega});
  const auto edges = batch_edges(g, 2);
  Tensor msgs = random_tensor({2 * g.num_edges(), 6}, rng, -1, 1, true);
  check("mixture_combine", [&] { return probe(mixture_combine(msgs, omega)); }, {msgs, omega});
  std::vector<Tensor> monet_params = k.parameters();
  monet_params.push_back(h);
  check("monet", [&] { return probe(elu(monet_forward(h, g, k))); }, monet_params);
  Tensor gw = random_tensor({2, 3}, rng, -1, 1, true);
  Tensor gb = random_tensor({1, 3}, rng, -1, 1, true);
  check("gcn", [&] { return probe(gcn_forward(h, g, gw, gb, Activation::Elu)); }, {h, gw, gb});
  DenseLayer d = make_dense(3, 4, Activation::Tanh, rng);
  for (auto& v : d.bias.mutable_values()) v = rng.uniform(-1, 1);
  check("dense", [&] { return probe(dense_forward(a, d)); }, {a, d.weight, d.bias});
  std::vector<Point2> coarse(6), fine(11);
  for (auto& p : coarse) p = {rng.uniform(), rng.uniform()};
  for (auto& p : fine) p = {rng.uniform(), rng.uniform()};
  const UnpoolPlan plan = make_unpool_plan(coarse, fine, 3);
  Tensor cf = random_tensor({12, 2}, rng, -1, 1, true);
  check("unpool", [&] { return probe(unpool(cf, plan)); }, {cf});

  double worst_op = 0.0;
  std::string worst_name;
  for (const auto& [name, err] : ops) {
    if (err >= worst_op) worst_op = err, worst_name = name;
  }

  double worst_loss = 0.0;
  const Mesh mesh = generate_mesh(4, 0.15, 8);
  for (bool pooling : {false, true}) {
    ModelConfig mc = testing::tiny_config(mesh.num_nodes(), pooling);
    mc.monet_bias = true;
    const GcaModel model(mc, build_graph(mesh));
    Rng prng(6);
    for (const auto& p : model.parameters()) {
      Tensor q = p;
      for (auto& v : q.mutable_values()) v += prng.uniform(-0.05, 0.05);
    }
    const Tensor x = random_tensor({2 * mc.n_h, 1}, prng);
    const Tensor mu = random_tensor({2, 2}, prng);
    worst_loss = std::max(worst_loss, fd_gradient_error([&] { return loss_total(model, x, mu).total; },
                                                        model.parameters()));
  }
  const double secs = seconds_since(t0);
  detail(std::to_string(ops.size()) + " operations checked; worst is " + worst_name);
  report(1, worst_op < 1e-6 && worst_loss < 1e-5 && secs < 120.0,
         "finite-difference gradients: ops " + sci(worst_op) + " (< 1e-6), full loss " +
             sci(worst_loss) + " (< 1e-5), " + sci(secs) + " s (< 120 s)");
}

void c2_equivariance() {
  double worst = 0.0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Rng rng(100 + trial);
    const Graph g = testing::random_graph(50, 200 + trial);
    std::vector<MoNetKernel> ks;
    const std::vector<double> lo{0.0}, hi{1.0};
    for (int i = 0; i < 3; ++i) {
      ks.push_back(make_monet_kernel(1, 1, 3, lo, hi, true, rng));
      for (auto& v : ks.back().sqrt_inv_var.mutable_values()) v = rng.uniform(0.5, 3.0);
      for (auto& v : ks.back().bias.mutable_values()) v = rng.uniform(-0.3, 0.3);
    }
    const auto stack = [&](const Graph& gr, const Tensor& x) {
      Tensor y = x;
      for (std::size_t i = 0; i < ks.size(); ++i) {
        y = monet_forward(y, gr, ks[i]);
        if (i + 1 < ks.size()) y = elu(y);
      }
      return skip_connect(x, y);
    };
    const Tensor h = random_tensor({50, 1}, rng);
    const Tensor base = stack(g, h);
    const auto perm = random_permutation(50, 1000 + trial);
    std::vector<double> ph(50);
    for (std::size_t i = 0; i < 50; ++i) ph[perm[i]] = h.values()[i];
    const Tensor out = stack(permute_nodes(g, perm), Tensor({50, 1}, ph));
    for (std::size_t i = 0; i < 50; ++i) {
      worst = std::max(worst, std::abs(out.values()[perm[i]] - base.values()[i]));
    }
  }
  report(2, worst < 1e-10,
         "conv stack permutation equivariance over 20 random 50-node graphs: " + sci(worst) +
             " (< 1e-10)");
}

void c3_gcn_reduction() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    Rng rng(40 + s);
    const Graph g = testing::random_graph(40, 60 + s);
    const std::vector<double> lo{0.0}, hi{1.0};
    MoNetKernel k = make_monet_kernel(3, 4, 1, lo, hi, true, rng);
    for (auto& v : k.sqrt_inv_var.mutable_values()) v = 0.0;
    for (auto& v : k.bias.mutable_values()) v = rng.uniform(-1, 1);
    const Tensor h = random_tensor({40, 3}, rng);
    const Tensor a = monet_forward(h, g, k);
    // Mean aggregation written out directly.
    std::vector<double> expect(40 * 4, 0.0);
    const auto wv = k.weights.values();
    for (const auto& e : g.edges) {
      for (std::size_t o = 0; o < 4; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < 3; ++i) acc += h.values()[e.source * 3 + i] * wv[i * 4 + o];
        expect[e.target * 4 + o] += acc / static_cast<double>(g.degrees[e.target]);
      }
    }
    for (std::size_t u = 0; u < 40; ++u) {
      for (std::size_t o = 0; o < 4; ++o) expect[u * 4 + o] += k.bias.values()[o];
    }
    worst = std::max(worst, testing::max_abs_diff(a.values(), expect));
  }
  report(3, worst < 1e-12, "MoNet with Q = 1 and zero inverse variance vs mean aggregation: " +
                               sci(worst) + " (< 1e-12)");
}

void c4_unpool() {
  const Mesh mesh = generate_mesh(20, 0.25, 3);
  const PoolMask mask = make_pool_mask(mesh.num_nodes(), 70.0, 5);
  std::vector<Point2> coarse;
  for (std::size_t i : mask.kept) coarse.push_back(mesh.positions[i]);
  const Tensor constant = unpool_knn(coarse, Tensor({coarse.size(), 1}, std::vector<double>(coarse.size(), -2.5)),
                                     mesh.positions, 3);
  double const_err = 0.0;
  for (double v : constant.values()) const_err = std::max(const_err, std::abs(v + 2.5));
  std::vector<double> cv, truth;
  for (const auto& p : coarse) cv.push_back(p.x + 2.0 * p.y);
  for (const auto& p : mesh.positions) truth.push_back(p.x + 2.0 * p.y);
  const double lin = relative_error(truth, unpool_knn(coarse, Tensor({coarse.size(), 1}, cv), mesh.positions, 3).values());
  report(4, const_err < 1e-12 && lin < 5e-2,
         "pool/unpool: constant " + sci(const_err) + " (< 1e-12), linear x + 2y " + sci(lin) +
             " (< 5e-2) at r_p = 70, k = 3, " + std::to_string(mesh.num_nodes()) + " nodes");
}

void c5_split() {
  const Split a = split_dataset(100, 30.0, 0);
  const Split b = split_dataset(3171, 10.0, 0);
  const bool ok = a.train.size() == 30 && a.test.size() == 70 && b.train.size() == 318 &&
                  b.test.size() == 2853;
  report(5, ok, "split counts: 100 @ 30% -> " + std::to_string(a.train.size()) + "/" +
                    std::to_string(a.test.size()) + ", 3171 @ 10% -> " +
                    std::to_string(b.train.size()) + "/" + std::to_string(b.test.size()));
}

std::optional<FamilyRun> smooth_run;

void c6_smooth() {
  smooth_run = run_family(Family::Smooth, false);
  const double e = smooth_run->eval.denormalized.mean;
  detail("max test error " + sci(smooth_run->eval.denormalized.max) + ", normalized mean " +
         sci(smooth_run->eval.normalized.mean));
  report(6, e <= 3e-2 && smooth_run->seconds <= 1200.0,
         "smooth family, 5000 epochs: mean test error " + sci(e) + " (<= 3e-2), " +
             sci(smooth_run->seconds) + " s (<= 1200 s)");
}

void c7_pooling() {
  const FamilyRun r = run_family(Family::Smooth, true);
  const double e = r.eval.denormalized.mean;
  detail("max test error " + sci(r.eval.denormalized.max));
  report(7, e <= 5e-2, "smooth family with pooling r_p = 70: mean test error " + sci(e) + " (<= 5e-2)");
}

void c8_pod() {
  if (!smooth_run) smooth_run = run_family(Family::Smooth, false);
  const double gca = smooth_run->eval.denormalized.mean;
  const double pod = pod_mean(smooth_run->data, smooth_run->result.split, 10);
  const FamilyRun front = run_family(Family::Front, false);
  const double front_gca = front.eval.denormalized.mean;
  const double front_pod = pod_mean(front.data, front.result.split, 15);
  detail(std::string("front family, N = n = 15: GCA ") + sci(front_gca) + ", POD " + sci(front_pod) +
         (front_gca <= front_pod ? " (soft target met)" : " (soft target missed; logged only)"));
  report(8, pod < gca, "smooth family POD N = 10 " + sci(pod) + " < GCA " + sci(gca));
}

void c9_regimes() {
  const FamilyRun r = run_family(Family::Bifurcating, false);
  std::vector<std::size_t> ids(r.data.num_samples);
  std::iota(ids.begin(), ids.end(), 0);
  const auto z = encoder_latents(r.result.model, r.result.stats, r.data, ids);
  const std::size_t dim = r.result.model.config().bottleneck;
  const SpectralResult sc = spectral_cluster(z, dim, 2, std::nullopt, 0);
  const double agree = best_permutation_agreement(sc.labels, r.data.labels);
  const std::vector<double> fractions{20, 30, 40, 50, 60, 70, 80, 90};
  const auto rows = label_fraction_sweep(z, dim, sc.labels, fractions, 0, 5);
  double worst = 1.0;
  std::string table;
  for (const auto& row : rows) {
    worst = std::min(worst, row.accuracy);
    table += " " + std::to_string(static_cast<int>(row.fraction)) + "%:" + sci(row.accuracy);
  }
  detail("k-NN accuracy by label fraction:" + table);
  detail("test error of the bifurcating model " + sci(r.eval.denormalized.mean));
  report(9, agree >= 0.99 && worst >= 0.995,
         "regime detection: cluster agreement " + sci(agree) + " (>= 0.99), lowest k-NN accuracy " +
             sci(worst) + " (>= 0.995)");
}

void c10_count() {
  ModelConfig c;
  c.n_h = 5160;
  c.d = 1;
  c.ffn = 200;
  c.bottleneck = 25;
  c.mlp_width = 50;
  c.hcp = 2;
  c.filters = 3;
  c.pseudo = PseudoCoordinates::Distance;
  const ParameterCount count = count_parameters(c);
  for (const auto& b : count.blocks) detail(b.name + ": " + std::to_string(b.count));
  const double rel = std::abs(static_cast<double>(count.total) - 2088682.0) / 2088682.0;
  report(10, rel < 0.02, "parameter count " + std::to_string(count.total) + " vs 2088682: " +
                             sci(rel) + " relative (< 2e-2)");
}

void c11_persistence() {
  ParamGrid grid = default_grid(Family::Smooth);
  grid.counts = {5, 5};
  const SnapshotDataset small = generate_dataset(Family::Smooth, generate_mesh(8, 0.2, 2), grid);
  ModelConfig c = desk_config(small.num_nodes());
  c.epochs = 40;
  c.ffn = 20;
  c.seed = 7;
  const TrainResult a = train(c, small);
  const TrainResult b = train(c, small);
  const std::string ca = serialize_checkpoint(make_checkpoint(a.model, small.mesh, a.stats, a.split));
  const std::string cb = serialize_checkpoint(make_checkpoint(b.model, small.mesh, b.stats, b.split));
  const bool identical = ca == cb;

  const auto dir = std::filesystem::temp_directory_path() / "gcarom_acceptance";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  save_checkpoint(deserialize_checkpoint(ca), dir / "a.gcar");
  const Checkpoint back = load_checkpoint(dir / "a.gcar");
  const GcaModel restored = restore_model(back, small.mesh);
  const bool ck_ok = serialize_checkpoint(back) == ca &&
                     evaluate(restored, back.stats, small, back.split.test).predictions ==
                         evaluate(a.model, a.stats, small, a.split.test).predictions;

  const SnapshotDataset full = generate_dataset(Family::Bifurcating, desk_mesh(), default_grid(Family::Bifurcating));
  save_dataset(full, dir / "ds");
  const bool ds_ok = load_dataset(dir / "ds") == full;
  std::filesystem::remove_all(dir);
  detail("checkpoint size " + std::to_string(ca.size()) + " bytes");
  report(11, identical && ck_ok && ds_ok,
         std::string("determinism and persistence: seeded checkpoints ") +
             (identical ? "bit-identical" : "DIFFER") + ", checkpoint round trip " +
             (ck_ok ? "lossless" : "LOSSY") + ", dataset round trip " + (ds_ok ? "lossless" : "LOSSY"));
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  const std::vector<std::function<void()>> criteria{c1_gradients, c2_equivariance, c3_gcn_reduction,
                                                    c4_unpool,    c5_split,        c6_smooth,
                                                    c7_pooling,   c8_pod,          c9_regimes,
                                                    c10_count,    c11_persistence};
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      report(id, false, std::string("threw: ") + e.what());
    }
  }
  std::printf("acceptance: %d failing, %.1f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
