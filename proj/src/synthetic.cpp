#include "gcarom/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "gcarom/rng.hpp"

namespace gcarom {

namespace {

constexpr double kPi = std::numbers::pi;

double grid_point(const ParamGrid& g, int axis, std::size_t i) {
  const auto a = static_cast<std::size_t>(axis);
  if (g.counts[a] == 1) return g.lo[a];
  return g.lo[a] + (g.hi[a] - g.lo[a]) * static_cast<double>(i) / static_cast<double>(g.counts[a] - 1);
}

}  // namespace

Mesh generate_mesh(std::size_t resolution, double jitter, std::uint64_t seed) {
  if (resolution < 1) throw GraphError("generate_mesh: resolution must be at least 1");
  if (!(jitter >= 0.0 && jitter < 0.5)) {
    throw GraphError("generate_mesh: jitter " + std::to_string(jitter) +
                     " must lie in [0, 0.5) cell widths");
  }
  const std::size_t side = resolution + 1;
  const double h = 1.0 / static_cast<double>(resolution);
  Rng rng(seed);
  Mesh mesh;
  mesh.positions.reserve(side * side);
  for (std::size_t j = 0; j < side; ++j) {
    for (std::size_t i = 0; i < side; ++i) {
      Point2 p{static_cast<double>(i) * h, static_cast<double>(j) * h};
      const bool interior = i > 0 && j > 0 && i < resolution && j < resolution;
      if (interior && jitter > 0.0) {
        p.x += rng.uniform(-jitter, jitter) * h;
        p.y += rng.uniform(-jitter, jitter) * h;
      }
      mesh.positions.push_back(p);
    }
  }
  for (std::size_t j = 0; j < resolution; ++j) {
    for (std::size_t i = 0; i < resolution; ++i) {
      const std::size_t n00 = j * side + i;
      const std::size_t n10 = n00 + 1;
      const std::size_t n01 = n00 + side;
      const std::size_t n11 = n01 + 1;
      mesh.elements.push_back({n00, n10, n11});
      mesh.elements.push_back({n00, n11, n01});
    }
  }
  for (const auto& t : mesh.elements) {
    if (signed_area2(mesh, t) <= 0.0) {
      throw GraphError("generate_mesh: jitter " + std::to_string(jitter) + " inverts a triangle");
    }
  }
  return mesh;
}

double signed_area2(const Mesh& mesh, const Triangle& t) {
  const auto& a = mesh.positions[t[0]];
  const auto& b = mesh.positions[t[1]];
  const auto& c = mesh.positions[t[2]];
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

std::string to_string(Family family) {
  switch (family) {
    case Family::Smooth: return "smooth";
    case Family::Front: return "front";
    case Family::Bifurcating: return "bifurcating";
  }
  return "unknown";
}

std::optional<Family> parse_family(std::string_view name) {
  if (name == "smooth") return Family::Smooth;
  if (name == "front") return Family::Front;
  if (name == "bifurcating") return Family::Bifurcating;
  return std::nullopt;
}

ParamGrid default_grid(Family family) {
  switch (family) {
    case Family::Smooth: return {{1.0, -1.0}, {3.0, 1.0}, {10, 10}};
    case Family::Front: return {{0.0, 0.6}, {1.0, 1.4}, {10, 10}};
    case Family::Bifurcating: return {{0.0, 0.0}, {1.0, 1.0}, {10, 10}};
  }
  return {};
}

double bifurcation_point(const ParamGrid& grid) { return 0.5 * (grid.lo[0] + grid.hi[0]); }

double family_value(Family family, Point2 p, double mu1, double mu2, double mu_c) {
  const double bump = std::sin(kPi * p.x) * std::sin(kPi * p.y);
  switch (family) {
    case Family::Smooth:
      return mu1 * bump * std::exp(0.5 * mu2 * (p.x + p.y));
    case Family::Front:
      return std::tanh((p.x + p.y - mu2) * std::pow(10.0, mu1));
    case Family::Bifurcating: {
      const double base = bump * (1.0 + 0.5 * mu2) + 0.2 * mu1 * p.y;
      const double branch = mu1 > mu_c ? 1.0 : -1.0;
      const double asym = 0.8 * std::sin(2.0 * kPi * p.x) * std::sin(kPi * p.y);
      return base + branch * asym;
    }
  }
  return 0.0;
}

SnapshotDataset generate_dataset(Family family, const Mesh& mesh, const ParamGrid& grid) {
  validate_mesh(mesh);
  SnapshotDataset ds;
  ds.name = to_string(family);
  ds.mesh = mesh;
  ds.components = 1;
  ds.param_dim = 2;
  ds.num_samples = grid.counts[0] * grid.counts[1];
  const double mu_c = bifurcation_point(grid);
  ds.params.reserve(ds.num_samples * 2);
  ds.fields.reserve(ds.num_samples * mesh.num_nodes());
  for (std::size_t i = 0; i < grid.counts[0]; ++i) {
    const double mu1 = grid_point(grid, 0, i);
    for (std::size_t j = 0; j < grid.counts[1]; ++j) {
      const double mu2 = grid_point(grid, 1, j);
      ds.params.push_back(mu1);
      ds.params.push_back(mu2);
      for (const auto& p : mesh.positions) ds.fields.push_back(family_value(family, p, mu1, mu2, mu_c));
      if (family == Family::Bifurcating) ds.labels.push_back(mu1 > mu_c ? 1 : 0);
    }
  }
  return ds;
}

}  // namespace gcarom
