#include "gcarom/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gcarom/checkpoint.hpp"
#include "gcarom/config.hpp"

namespace gcarom {

namespace {

constexpr std::string_view kFieldsMagic = "GCAF";
constexpr const char* kManifest = "manifest.txt";

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto c = line.find(',');
    out.push_back(line.substr(0, c));
    if (c == std::string_view::npos) break;
    line = line.substr(c + 1);
  }
  return out;
}

std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing dataset file: " + path.string());
  return in;
}

/// Rows of a CSV with a header line; every row must have `width` cells.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, std::size_t width) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip(line).empty()) continue;
    const auto cells = split_commas(strip(line));
    if (cells.size() != width) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(width) + " columns, found " + std::to_string(cells.size()));
    }
    std::vector<std::string> row;
    for (auto c : cells) row.emplace_back(strip(c));
    rows.push_back(std::move(row));
  }
  return rows;
}

double cell_double(const std::filesystem::path& path, const std::string& cell) {
  try {
    const double v = parse_double(cell);
    if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite value '" + cell + "'");
    return v;
  } catch (const ConfigError&) {
    throw DataError(path.string() + ": not a number '" + cell + "'");
  }
}

std::size_t cell_size(const std::filesystem::path& path, const std::string& cell) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw DataError(path.string() + ": not an index '" + cell + "'");
  }
  return v;
}

int cell_int(const std::filesystem::path& path, const std::string& cell) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw DataError(path.string() + ": not an integer label '" + cell + "'");
  }
  return v;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void write_params_header(std::ostream& out, std::size_t p) {
  for (std::size_t k = 0; k < p; ++k) out << (k ? ",mu_" : "mu_") << (k + 1);
}

}  // namespace

std::string encode_fields(std::span<const double> fields, std::size_t num_samples,
                          std::size_t num_nodes, std::size_t components) {
  if (fields.size() != num_samples * num_nodes * components) {
    throw DataError("encode_fields: " + std::to_string(fields.size()) + " values for " +
                    std::to_string(num_samples) + " x " + std::to_string(num_nodes) + " x " +
                    std::to_string(components));
  }
  ByteWriter w;
  w.bytes(kFieldsMagic);
  w.u32(kFieldsVersion);
  w.u64(num_samples);
  w.u64(num_nodes);
  w.u64(components);
  for (double v : fields) w.f64(v);
  return w.take();
}

FieldMatrix decode_fields(std::string_view bytes) {
  try {
    ByteReader r(bytes, "fields");
    if (r.bytes(kFieldsMagic.size()) != kFieldsMagic) {
      throw DataError("fields: bad magic (expected \"GCAF\")");
    }
    const auto version = r.u32();
    if (version != kFieldsVersion) {
      throw DataError("fields: unsupported version " + std::to_string(version));
    }
    FieldMatrix m;
    m.num_samples = r.u64();
    m.num_nodes = r.u64();
    m.components = r.u64();
    const std::size_t expected_bytes = r.remaining();
    const double declared = static_cast<double>(m.num_samples) * static_cast<double>(m.num_nodes) *
                            static_cast<double>(m.components) * 8.0;
    if (declared != static_cast<double>(expected_bytes)) {
      throw DataError("fields: header declares " + std::to_string(m.num_samples) + " x " +
                      std::to_string(m.num_nodes) + " x " + std::to_string(m.components) +
                      " values but the payload holds " + std::to_string(expected_bytes) + " bytes");
    }
    m.values.resize(expected_bytes / 8);
    for (auto& v : m.values) v = r.f64();
    return m;
  } catch (const CheckpointError& e) {
    throw DataError(e.what());
  }
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifest;
  auto in = open_input(path);
  DatasetManifest m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto l = strip(line);
    if (l.empty() || l.front() == '#') continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(strip(l.substr(0, eq)));
    const std::string value(strip(l.substr(eq + 1)));
    if (key == "name") m.name = value;
    else if (key == "nodes") m.nodes_file = value;
    else if (key == "elements") m.elements_file = value;
    else if (key == "params") m.params_file = value;
    else if (key == "fields") m.fields_file = value;
    else if (key == "N_S") m.num_samples = cell_size(path, value);
    else if (key == "N_h") m.num_nodes = cell_size(path, value);
    else if (key == "d") m.components = cell_size(path, value);
    else if (key == "P") m.param_dim = cell_size(path, value);
    else if (key == "labels") m.has_labels = value == "true";
    else throw DataError(path.string() + ": unknown key '" + key + "'");
  }
  return m;
}

void save_dataset(const SnapshotDataset& dataset, const std::filesystem::path& dir) {
  dataset.validate();
  std::filesystem::create_directories(dir);
  DatasetManifest m;
  m.name = dataset.name;
  m.num_samples = dataset.num_samples;
  m.num_nodes = dataset.num_nodes();
  m.components = dataset.components;
  m.param_dim = dataset.param_dim;
  m.has_labels = !dataset.labels.empty();
  {
    auto out = open_output(dir / kManifest);
    out << "name = " << m.name << '\n'
        << "nodes = " << m.nodes_file << '\n'
        << "elements = " << m.elements_file << '\n'
        << "params = " << m.params_file << '\n'
        << "fields = " << m.fields_file << '\n'
        << "N_S = " << m.num_samples << '\n'
        << "N_h = " << m.num_nodes << '\n'
        << "d = " << m.components << '\n'
        << "P = " << m.param_dim << '\n'
        << "labels = " << (m.has_labels ? "true" : "false") << '\n';
  }
  {
    auto out = open_output(dir / m.nodes_file);
    out << "x,y\n";
    for (const auto& p : dataset.mesh.positions) {
      out << format_double(p.x) << ',' << format_double(p.y) << '\n';
    }
  }
  {
    auto out = open_output(dir / m.elements_file);
    out << "a,b,c\n";
    for (const auto& t : dataset.mesh.elements) out << t[0] << ',' << t[1] << ',' << t[2] << '\n';
  }
  {
    auto out = open_output(dir / m.params_file);
    write_params_header(out, m.param_dim);
    out << (m.has_labels ? ",label\n" : "\n");
    for (std::size_t i = 0; i < m.num_samples; ++i) {
      for (std::size_t k = 0; k < m.param_dim; ++k) {
        out << (k ? "," : "") << format_double(dataset.params[i * m.param_dim + k]);
      }
      if (m.has_labels) out << ',' << dataset.labels[i];
      out << '\n';
    }
  }
  write_file_bytes(dir / m.fields_file,
                   encode_fields(dataset.fields, m.num_samples, m.num_nodes, m.components));
}

SnapshotDataset load_dataset(const std::filesystem::path& dir) {
  const DatasetManifest m = read_manifest(dir);
  SnapshotDataset ds;
  ds.name = m.name;
  ds.num_samples = m.num_samples;
  ds.components = m.components;
  ds.param_dim = m.param_dim;

  const auto nodes_path = dir / m.nodes_file;
  for (const auto& row : read_csv(nodes_path, 2)) {
    ds.mesh.positions.push_back({cell_double(nodes_path, row[0]), cell_double(nodes_path, row[1])});
  }
  if (ds.mesh.positions.size() != m.num_nodes) {
    throw DataError(nodes_path.string() + ": " + std::to_string(ds.mesh.positions.size()) +
                    " nodes, manifest declares N_h = " + std::to_string(m.num_nodes));
  }
  const auto elements_path = dir / m.elements_file;
  for (const auto& row : read_csv(elements_path, 3)) {
    ds.mesh.elements.push_back({cell_size(elements_path, row[0]), cell_size(elements_path, row[1]),
                                cell_size(elements_path, row[2])});
  }
  try {
    validate_mesh(ds.mesh);
  } catch (const GraphError& e) {
    throw DataError(elements_path.string() + ": " + e.what());
  }

  const auto params_path = dir / m.params_file;
  const auto rows = read_csv(params_path, m.param_dim + (m.has_labels ? 1 : 0));
  if (rows.size() != m.num_samples) {
    throw DataError(params_path.string() + ": " + std::to_string(rows.size()) +
                    " rows, manifest declares N_S = " + std::to_string(m.num_samples));
  }
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < m.param_dim; ++k) ds.params.push_back(cell_double(params_path, row[k]));
    if (m.has_labels) ds.labels.push_back(cell_int(params_path, row[m.param_dim]));
  }

  const auto fields_path = dir / m.fields_file;
  if (!std::filesystem::exists(fields_path)) {
    throw DataError("missing dataset file: " + fields_path.string());
  }
  FieldMatrix f;
  try {
    f = decode_fields(read_file_bytes(fields_path));
  } catch (const DataError& e) {
    throw DataError(fields_path.string() + ": " + e.what());
  }
  if (f.num_samples != m.num_samples || f.num_nodes != m.num_nodes || f.components != m.components) {
    throw DataError(fields_path.string() + ": dims " + std::to_string(f.num_samples) + " x " +
                    std::to_string(f.num_nodes) + " x " + std::to_string(f.components) +
                    " contradict the manifest (" + std::to_string(m.num_samples) + " x " +
                    std::to_string(m.num_nodes) + " x " + std::to_string(m.components) + ")");
  }
  ds.fields = std::move(f.values);
  ds.validate();
  return ds;
}

void write_error_report_csv(const std::filesystem::path& path, const SnapshotDataset& dataset,
                            const ErrorReport& report, std::span<const std::size_t> train_ids) {
  auto out = open_output(path);
  out << "id,";
  write_params_header(out, dataset.param_dim);
  out << ",epsilon,split\n";
  for (std::size_t r = 0; r < report.ids.size(); ++r) {
    const std::size_t id = report.ids[r];
    out << id;
    for (double v : dataset.param(id)) out << ',' << format_double(v);
    const bool is_train = std::find(train_ids.begin(), train_ids.end(), id) != train_ids.end();
    out << ',' << format_double(report.errors[r]) << ',' << (is_train ? "train" : "test") << '\n';
  }
}

void write_cluster_csv(const std::filesystem::path& path, const SnapshotDataset& dataset,
                       std::span<const std::size_t> ids, std::span<const int> labels) {
  if (ids.size() != labels.size()) throw DataError("write_cluster_csv: ids and labels differ in length");
  auto out = open_output(path);
  out << "id,";
  write_params_header(out, dataset.param_dim);
  out << ",label\n";
  for (std::size_t r = 0; r < ids.size(); ++r) {
    out << ids[r];
    for (double v : dataset.param(ids[r])) out << ',' << format_double(v);
    out << ',' << labels[r] << '\n';
  }
}

}  // namespace gcarom
