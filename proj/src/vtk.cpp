#include "gcarom/vtk.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gcarom/config.hpp"

namespace gcarom {

void export_vtk(const Mesh& mesh, std::span<const VtkField> fields, const std::filesystem::path& path) {
  const std::size_t n = mesh.num_nodes();
  for (const auto& f : fields) {
    if (f.components == 0 || f.values.size() != n * f.components) {
      throw std::invalid_argument("export_vtk: field '" + f.name + "' has " +
                                  std::to_string(f.values.size()) + " values, expected " +
                                  std::to_string(n) + " x " + std::to_string(f.components));
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("export_vtk: cannot write " + path.string());
  out << "# vtk DataFile Version 3.0\n"
      << "gcarom field\n"
      << "ASCII\n"
      << "DATASET UNSTRUCTURED_GRID\n"
      << "POINTS " << n << " double\n";
  for (const auto& p : mesh.positions) out << format_double(p.x) << ' ' << format_double(p.y) << " 0\n";
  const std::size_t cells = mesh.elements.size();
  out << "CELLS " << cells << ' ' << cells * 4 << '\n';
  for (const auto& t : mesh.elements) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  out << "CELL_TYPES " << cells << '\n';
  for (std::size_t c = 0; c < cells; ++c) out << "5\n";
  if (!fields.empty()) out << "POINT_DATA " << n << '\n';
  for (const auto& f : fields) {
    for (std::size_t k = 0; k < f.components; ++k) {
      const std::string name = f.components == 1 ? f.name : f.name + "_" + std::to_string(k);
      out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (std::size_t i = 0; i < n; ++i) out << format_double(f.values[i * f.components + k]) << '\n';
    }
  }
  if (!out) throw std::runtime_error("export_vtk: write failed for " + path.string());
}

void export_vtk(const Mesh& mesh, std::span<const double> field, std::size_t components,
                const std::filesystem::path& path, const std::string& name) {
  const VtkField f{name, components, std::vector<double>(field.begin(), field.end())};
  export_vtk(mesh, std::span<const VtkField>(&f, 1), path);
}

const std::vector<double>& VtkData::scalar(const std::string& name) const {
  for (const auto& [n, v] : scalars) {
    if (n == name) return v;
  }
  throw std::out_of_range("vtk: no scalar array '" + name + "'");
}

VtkData read_vtk(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_vtk: cannot open " + path.string());
  const auto fail = [&](const std::string& msg) {
    return std::runtime_error("read_vtk: " + path.string() + ": " + msg);
  };
  std::string line;
  for (int i = 0; i < 4; ++i) {
    if (!std::getline(in, line)) throw fail("truncated header");
  }
  if (line.rfind("DATASET UNSTRUCTURED_GRID", 0) != 0) throw fail("not an unstructured grid");

  VtkData data;
  std::size_t points = 0;
  std::string word;
  const auto number = [&]() {
    if (!(in >> word)) throw fail("unexpected end of file");
    try {
      return parse_double(word);
    } catch (const ConfigError&) {
      throw fail("bad number '" + word + "'");
    }
  };
  const auto index = [&]() {
    std::size_t v = 0;
    if (!(in >> v)) throw fail("bad index");
    return v;
  };
  while (in >> word) {
    if (word == "POINTS") {
      points = index();
      in >> word;
      data.mesh.positions.resize(points);
      for (auto& p : data.mesh.positions) {
        p.x = number();
        p.y = number();
        number();
      }
    } else if (word == "CELLS") {
      const std::size_t cells = index();
      index();
      data.mesh.elements.resize(cells);
      for (auto& t : data.mesh.elements) {
        if (index() != 3) throw fail("only triangles are supported");
        t = {index(), index(), index()};
      }
    } else if (word == "CELL_TYPES") {
      const std::size_t cells = index();
      data.cell_types.resize(cells);
      for (auto& c : data.cell_types) in >> c;
    } else if (word == "POINT_DATA") {
      if (index() != points) throw fail("POINT_DATA count differs from POINTS");
    } else if (word == "SCALARS") {
      std::string name, type, comps;
      in >> name >> type >> comps;
      std::string lut, lut_name;
      in >> lut >> lut_name;
      if (lut != "LOOKUP_TABLE") throw fail("expected LOOKUP_TABLE after SCALARS " + name);
      std::vector<double> values(points);
      for (auto& v : values) v = number();
      data.scalars.emplace_back(name, std::move(values));
    } else {
      throw fail("unexpected token '" + word + "'");
    }
  }
  return data;
}

}  // namespace gcarom
