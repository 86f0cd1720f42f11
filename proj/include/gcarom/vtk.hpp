#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gcarom/graph.hpp"

namespace gcarom {

/// Nodal field with `components` values per node, node-major.
struct VtkField {
  std::string name;
  std::size_t components = 1;
  std::vector<double> values;
};

/// Legacy ASCII unstructured grid: POINTS, CELLS (triangles, type 5), and
/// one SCALARS block per component ("name" when d = 1, "name_k" otherwise).
/// Values are written in shortest round-trip form.
void export_vtk(const Mesh& mesh, std::span<const VtkField> fields, const std::filesystem::path& path);

void export_vtk(const Mesh& mesh, std::span<const double> field, std::size_t components,
                const std::filesystem::path& path, const std::string& name = "u");

/// What read_vtk recovers: mesh plus scalar arrays in file order.
struct VtkData {
  Mesh mesh;
  std::vector<std::string> cell_types;
  std::vector<std::pair<std::string, std::vector<double>>> scalars;

  [[nodiscard]] const std::vector<double>& scalar(const std::string& name) const;
};

/// Reads the subset of the legacy format export_vtk writes. Throws std::runtime_error.
VtkData read_vtk(const std::filesystem::path& path);

}  // namespace gcarom
