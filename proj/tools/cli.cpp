#include "gcarom/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include "gcarom/analysis.hpp"
#include "gcarom/checkpoint.hpp"
#include "gcarom/config.hpp"
#include "gcarom/dataset_io.hpp"
#include "gcarom/pipeline.hpp"
#include "gcarom/synthetic.hpp"
#include "gcarom/vtk.hpp"

#ifndef GCAROM_VERSION
#define GCAROM_VERSION "unknown"
#endif

namespace gcarom {

std::string version_string() { return GCAROM_VERSION; }

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Everything needed to rerun a command, next to its outputs.
void write_run_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed,
                        const std::string& config_text, const json& args) {
  fs::create_directories(dir);
  json j;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = config_text;
  j["version"] = version_string();
  j["args"] = args;
  std::ofstream out(dir / "run_manifest.json");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("cannot write " + (dir / "run_manifest.json").string());
}

// Fills the mesh-dependent fields from the dataset when the config leaves
// them unset, and rejects contradictions.
void bind_to_dataset(ModelConfig& c, const SnapshotDataset& ds) {
  if (c.n_h == 0) c.n_h = ds.num_nodes();
  if (c.n_h != ds.num_nodes()) {
    throw DataError("config n_h = " + std::to_string(c.n_h) + " but the dataset has " +
                    std::to_string(ds.num_nodes()) + " nodes");
  }
  if (c.d != ds.components) {
    throw DataError("config d = " + std::to_string(c.d) + " but the dataset has " +
                    std::to_string(ds.components) + " components");
  }
  if (c.param_dim != ds.param_dim) {
    throw DataError("config P = " + std::to_string(c.param_dim) + " but the dataset has " +
                    std::to_string(ds.param_dim) + " parameters");
  }
}

ModelConfig read_config(const std::string& path, const std::vector<std::string>& overrides) {
  ModelConfig c = path.empty() ? ModelConfig{} : load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return c;
}

std::vector<std::size_t> all_ids(std::size_t n) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

std::vector<double> rows_of(const SnapshotDataset& ds, std::span<const std::size_t> ids) {
  std::vector<double> out;
  out.reserve(ids.size() * ds.field_size());
  for (std::size_t i : ids) {
    const auto f = ds.field(i);
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

ErrorReport subset(const ErrorReport& all, std::span<const std::size_t> ids) {
  std::vector<double> errors;
  for (std::size_t id : ids) {
    const auto it = std::find(all.ids.begin(), all.ids.end(), id);
    errors.push_back(all.errors[static_cast<std::size_t>(it - all.ids.begin())]);
  }
  return make_error_report({ids.begin(), ids.end()}, std::move(errors), all.mode);
}

// --- generate --------------------------------------------------------------

struct GenerateArgs {
  std::string family;
  std::string out;
  std::size_t resolution = 29;
  double jitter = 0.2;
  std::uint64_t seed = 1;
  std::size_t mu1_count = 10;
  std::size_t mu2_count = 10;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const Family family = *parse_family(a.family);
  ParamGrid grid = default_grid(family);
  grid.counts = {a.mu1_count, a.mu2_count};
  const Mesh mesh = generate_mesh(a.resolution, a.jitter, a.seed);
  const SnapshotDataset ds = generate_dataset(family, mesh, grid);
  save_dataset(ds, a.out);
  write_run_manifest(a.out, "generate", a.seed, "",
                     {{"family", a.family}, {"resolution", a.resolution}, {"jitter", a.jitter},
                      {"mu1_count", a.mu1_count}, {"mu2_count", a.mu2_count}});
  out << "generated " << ds.name << ": " << ds.num_samples << " samples on " << ds.num_nodes()
      << " nodes -> " << a.out << '\n';
  return kExitOk;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::size_t log_every = 500;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const SnapshotDataset ds = load_dataset(a.data);
  ModelConfig c = read_config(a.config, a.overrides);
  bind_to_dataset(c, ds);
  const TrainResult r = train(c, ds, [&](std::size_t epoch, const EpochLoss& l) {
    if (a.log_every > 0 && (epoch % a.log_every == 0 || epoch + 1 == c.epochs)) {
      out << "epoch " << epoch << " total " << format_double(l.total) << " mse "
          << format_double(l.mse) << " btt " << format_double(l.btt) << '\n';
    }
  });
  const fs::path dir(a.out);
  fs::create_directories(dir);
  save_checkpoint(make_checkpoint(r.model, ds.mesh, r.stats, r.split), dir / "checkpoint.gcar");
  write_history_csv(r.history, (dir / "history.csv").string());
  write_run_manifest(dir, "train", c.seed, format_config(c),
                     {{"data", a.data}, {"config", a.config}, {"set", a.overrides}});
  out << "trained " << r.split.train.size() << " samples in " << r.history.wall_seconds
      << " s; checkpoint " << (dir / "checkpoint.gcar").string() << '\n';
  return kExitOk;
}

// --- evaluate --------------------------------------------------------------

struct EvaluateArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::size_t vtk = 1;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const SnapshotDataset ds = load_dataset(a.data);
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const GcaModel model = restore_model(ck, ds.mesh);
  const auto ids = all_ids(ds.num_samples);
  const Evaluation ev = evaluate(model, ck.stats, ds, ids);
  const ErrorReport test = subset(ev.denormalized, ck.split.test);
  const ErrorReport test_norm = subset(ev.normalized, ck.split.test);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_error_report_csv(dir / "errors.csv", ds, ev.denormalized, ck.split.train);
  write_error_report_csv(dir / "errors_normalized.csv", ds, ev.normalized, ck.split.train);

  // Worst test samples as VTK: truth, prediction and pointwise error.
  std::vector<std::size_t> order(test.ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return test.errors[x] > test.errors[y]; });
  const std::size_t w = ds.field_size();
  for (std::size_t k = 0; k < std::min(a.vtk, order.size()); ++k) {
    const std::size_t id = test.ids[order[k]];
    const auto truth = ds.field(id);
    std::vector<double> pred(ev.predictions.begin() + static_cast<std::ptrdiff_t>(id * w),
                             ev.predictions.begin() + static_cast<std::ptrdiff_t>((id + 1) * w));
    std::vector<double> err(w);
    for (std::size_t j = 0; j < w; ++j) err[j] = std::abs(truth[j] - pred[j]);
    const std::vector<VtkField> fields{{"truth", ds.components, {truth.begin(), truth.end()}},
                                       {"prediction", ds.components, pred},
                                       {"error", ds.components, err}};
    export_vtk(ds.mesh, fields, dir / ("sample_" + std::to_string(id) + ".vtk"));
  }
  write_run_manifest(dir, "evaluate", ck.config.seed, format_config(ck.config),
                     {{"checkpoint", a.checkpoint}, {"data", a.data}, {"vtk", a.vtk}});
  out << "test samples " << test.ids.size() << '\n'
      << "mean " << format_double(test.mean) << " max " << format_double(test.max) << '\n'
      << "normalized mean " << format_double(test_norm.mean) << " max "
      << format_double(test_norm.max) << '\n';
  return kExitOk;
}

// --- pod -------------------------------------------------------------------

struct PodArgs {
  std::string data;
  std::string checkpoint;
  std::vector<std::size_t> modes{10};
  double train_rate = 30.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_pod(const PodArgs& a, std::ostream& out) {
  const SnapshotDataset ds = load_dataset(a.data);
  Split split;
  std::uint64_t seed = a.seed;
  if (!a.checkpoint.empty()) {
    // Same split as the trained model.
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    split = ck.split;
    seed = ck.config.seed;
  } else {
    split = split_dataset(ds.num_samples, a.train_rate, a.seed);
  }
  const auto train_rows = rows_of(ds, split.train);
  const auto test_rows = rows_of(ds, split.test);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::ofstream summary(dir / "pod_summary.csv");
  summary << "modes,mean,max\n";
  for (std::size_t n : a.modes) {
    const PodBasis pod = pod_basis(train_rows, split.train.size(), ds.field_size(), n);
    const ErrorReport rep = pod_projection_error(pod, test_rows, split.test);
    write_error_report_csv(dir / ("pod_" + std::to_string(n) + ".csv"), ds, rep, split.train);
    summary << n << ',' << format_double(rep.mean) << ',' << format_double(rep.max) << '\n';
    out << "modes " << n << " mean " << format_double(rep.mean) << " max "
        << format_double(rep.max) << '\n';
  }
  json args{{"data", a.data}, {"checkpoint", a.checkpoint}, {"modes", a.modes},
            {"train_rate", a.train_rate}};
  write_run_manifest(dir, "pod", seed, "", args);
  return kExitOk;
}

// --- cluster ---------------------------------------------------------------

struct ClusterArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::size_t clusters = 2;
  std::optional<double> sigma;
  std::vector<double> fractions{20, 30, 40, 50, 60, 70, 80, 90};
  std::size_t k = 5;
  std::vector<std::size_t> latent_dims;  // empty: all components
};

int cmd_cluster(const ClusterArgs& a, std::ostream& out) {
  const SnapshotDataset ds = load_dataset(a.data);
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const GcaModel model = restore_model(ck, ds.mesh);
  const auto ids = all_ids(ds.num_samples);
  auto latents = encoder_latents(model, ck.stats, ds, ids);
  std::size_t dim = ck.config.bottleneck;
  if (!a.latent_dims.empty()) {
    for (std::size_t j : a.latent_dims) {
      if (j >= dim) {
        throw DataError("cluster: latent component " + std::to_string(j) + " out of range for n = " +
                        std::to_string(dim));
      }
    }
    std::vector<double> picked;
    picked.reserve(ids.size() * a.latent_dims.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j : a.latent_dims) picked.push_back(latents[i * dim + j]);
    }
    latents = std::move(picked);
    dim = a.latent_dims.size();
  }
  const SpectralResult sc = spectral_cluster(latents, dim, a.clusters, a.sigma, ck.config.seed);
  const auto sweep = label_fraction_sweep(latents, dim, sc.labels, a.fractions, ck.config.seed, a.k);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_cluster_csv(dir / "clusters.csv", ds, ids, sc.labels);
  std::ofstream table(dir / "label_sweep.csv");
  table << "fraction,labeled,scored,accuracy\n";
  for (const auto& row : sweep) {
    table << format_double(row.fraction) << ',' << row.labeled << ',' << row.scored << ','
          << format_double(row.accuracy) << '\n';
  }
  json args{{"checkpoint", a.checkpoint}, {"data", a.data}, {"clusters", a.clusters},
            {"fractions", a.fractions}, {"k", a.k}, {"latent_dims", a.latent_dims}};
  if (a.sigma) args["sigma"] = *a.sigma;
  write_run_manifest(dir, "cluster", ck.config.seed, format_config(ck.config), args);

  out << "sigma " << format_double(sc.sigma) << '\n';
  if (!ds.labels.empty()) {
    out << "agreement with stored labels " << format_double(best_permutation_agreement(sc.labels, ds.labels))
        << '\n';
  }
  double worst = 1.0;
  for (const auto& row : sweep) worst = std::min(worst, row.accuracy);
  out << "lowest k-NN accuracy over the sweep " << format_double(worst) << '\n';
  return kExitOk;
}

// --- sweep -----------------------------------------------------------------

struct SweepArgs {
  std::string data;
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::vector<double> train_rates{10, 30, 50};
  std::vector<double> lambdas{0.1, 1, 10};
  std::vector<std::size_t> bottlenecks{15, 25};
  bool dry_run = false;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const ModelConfig base = read_config(a.config, a.overrides);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::optional<SnapshotDataset> ds;
  if (!a.dry_run) ds = load_dataset(a.data);
  std::ofstream summary(dir / "summary.csv");
  summary << "r_t,lambda,n,mean,max,seconds\n";
  std::size_t runs = 0;
  for (double rt : a.train_rates) {
    for (double lambda : a.lambdas) {
      for (std::size_t n : a.bottlenecks) {
        ModelConfig c = base;
        c.train_rate = rt;
        c.lambda = lambda;
        c.bottleneck = n;
        ++runs;
        const std::string tag = "rt" + format_double(rt) + "_lambda" + format_double(lambda) + "_n" +
                                std::to_string(n);
        if (a.dry_run) {
          summary << format_double(rt) << ',' << format_double(lambda) << ',' << n << ",,,\n";
          out << tag << '\n';
          continue;
        }
        bind_to_dataset(c, *ds);
        const TrainResult r = train(c, *ds);
        const Evaluation ev = evaluate(r.model, r.stats, *ds, r.split.test);
        write_error_report_csv(dir / ("errors_" + tag + ".csv"), *ds, ev.denormalized, r.split.train);
        summary << format_double(rt) << ',' << format_double(lambda) << ',' << n << ','
                << format_double(ev.denormalized.mean) << ',' << format_double(ev.denormalized.max)
                << ',' << format_double(r.history.wall_seconds) << '\n';
        out << tag << " mean " << format_double(ev.denormalized.mean) << '\n';
      }
    }
  }
  write_run_manifest(dir, "sweep", base.seed, format_config(base),
                     {{"data", a.data}, {"config", a.config}, {"set", a.overrides},
                      {"train_rates", a.train_rates}, {"lambdas", a.lambdas},
                      {"bottlenecks", a.bottlenecks}, {"dry_run", a.dry_run}});
  out << runs << " configurations\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph convolutional autoencoder reduced-order models", "gcarom"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic dataset");
  g->add_option("--family", gen.family, "smooth, front or bifurcating")
      ->required()
      ->check(CLI::IsMember({"smooth", "front", "bifurcating"}));
  g->add_option("--out", gen.out, "Dataset directory")->required();
  g->add_option("--resolution", gen.resolution, "Cells per side")->capture_default_str();
  g->add_option("--jitter", gen.jitter, "Interior node jitter as a fraction of the cell size")
      ->capture_default_str();
  g->add_option("--seed", gen.seed, "Mesh jitter seed")->capture_default_str();
  g->add_option("--mu1-count", gen.mu1_count, "Grid points along mu_1")->capture_default_str();
  g->add_option("--mu2-count", gen.mu2_count, "Grid points along mu_2")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a dataset");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--config", tr.config, "key = value config file");
  t->add_option("--set", tr.overrides, "Config override key=value (repeatable)");
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_option("--log-every", tr.log_every, "Epochs between progress lines (0 silences)")
      ->capture_default_str();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Relative errors of a trained model");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--out", ev.out, "Report directory")->required();
  e->add_option("--vtk", ev.vtk, "Worst test samples exported as VTK")->capture_default_str();

  PodArgs pd;
  auto* p = app.add_subcommand("pod", "POD projection baseline");
  p->add_option("--data", pd.data, "Dataset directory")->required();
  p->add_option("--modes", pd.modes, "Retained modes (repeatable)")->capture_default_str();
  p->add_option("--checkpoint", pd.checkpoint, "Reuse the split stored in this checkpoint");
  p->add_option("--train-rate", pd.train_rate, "Training percent when no checkpoint is given")
      ->capture_default_str();
  p->add_option("--seed", pd.seed, "Split seed when no checkpoint is given")->capture_default_str();
  p->add_option("--out", pd.out, "Report directory")->required();

  ClusterArgs cl;
  auto* c = app.add_subcommand("cluster", "Spectral clustering of encoder latents");
  c->add_option("--checkpoint", cl.checkpoint, "Checkpoint file")->required();
  c->add_option("--data", cl.data, "Dataset directory")->required();
  c->add_option("--out", cl.out, "Report directory")->required();
  c->add_option("--clusters", cl.clusters, "Number of clusters")->capture_default_str();
  c->add_option("--sigma", cl.sigma, "Similarity bandwidth (median distance when absent)");
  c->add_option("--fractions", cl.fractions, "Label percents for the k-NN sweep")
      ->capture_default_str();
  c->add_option("--k", cl.k, "k-NN neighbors")->capture_default_str();
  c->add_option("--latent-dims", cl.latent_dims, "Latent components to cluster on (default all)")
      ->delimiter(',');

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Train over a grid of configurations");
  s->add_option("--data", sw.data, "Dataset directory");
  s->add_option("--config", sw.config, "Base key = value config file");
  s->add_option("--set", sw.overrides, "Config override key=value (repeatable)");
  s->add_option("--out", sw.out, "Report directory")->required();
  s->add_option("--train-rates", sw.train_rates, "r_t values")->capture_default_str();
  s->add_option("--lambdas", sw.lambdas, "lambda values")->capture_default_str();
  s->add_option("--bottlenecks", sw.bottlenecks, "n values")->capture_default_str();
  s->add_flag("--dry-run", sw.dry_run, "List the grid without training");

  try {
    app.parse(argc, argv);
    if (*s && !sw.dry_run && sw.data.empty()) throw CLI::RequiredError("--data");
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) return cmd_generate(gen, out);
    if (*t) return cmd_train(tr, out);
    if (*e) return cmd_evaluate(ev, out);
    if (*p) return cmd_pod(pd, out);
    if (*c) return cmd_cluster(cl, out);
    if (*s) return cmd_sweep(sw, out);
  } catch (const NumericalError& ex) {
    err << "numerical failure: " << ex.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace gcarom
