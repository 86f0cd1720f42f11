#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "gcarom/graph.hpp"
#include "gcarom/pipeline.hpp"

namespace gcarom {

/// Unit square split into resolution x resolution cells of two triangles.
/// Interior nodes move by uniform noise of at most `jitter` cell widths per
/// coordinate; jitter must stay below 0.5 and no triangle may flip.
Mesh generate_mesh(std::size_t resolution, double jitter = 0.0, std::uint64_t seed = 0);

/// Twice the signed area; positive for counter-clockwise triangles.
double signed_area2(const Mesh& mesh, const Triangle& t);

enum class Family {
  Smooth,       ///< mu1 sin(pi x) sin(pi y) exp(mu2 (x + y) / 2)
  Front,        ///< tanh((x + y - mu2) / 10^(-mu1))
  Bifurcating,  ///< symmetric base plus a branch-signed antisymmetric mode
};

std::string to_string(Family family);
std::optional<Family> parse_family(std::string_view name);

/// Uniform tensor grid over [lo, hi] with `counts` points per axis (P = 2).
struct ParamGrid {
  std::array<double, 2> lo{};
  std::array<double, 2> hi{};
  std::array<std::size_t, 2> counts{10, 10};
};

ParamGrid default_grid(Family family);

/// Critical mu1 of the bifurcating family: the midpoint of its mu1 range.
double bifurcation_point(const ParamGrid& grid);

/// Field value of `family` at one point. For the bifurcating family `mu_c`
/// picks the branch: +1 when mu1 > mu_c, -1 otherwise.
double family_value(Family family, Point2 p, double mu1, double mu2, double mu_c = 0.5);

/// Evaluates the family at every node for every grid point (mu1 slowest).
/// Bifurcating datasets carry labels: 1 when mu1 > mu_c, else 0.
SnapshotDataset generate_dataset(Family family, const Mesh& mesh, const ParamGrid& grid);

}  // namespace gcarom
