#include "gcarom/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "gcarom/config.hpp"

namespace gcarom {

namespace {

constexpr std::string_view kMagic = "GCAR";

void write_le(std::string& out, std::uint64_t v, int width) {
  for (int i = 0; i < width; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint64_t read_le(std::string_view s) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
  }
  return v;
}

void fnv(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xFFu;
    h *= 0x100000001B3ULL;
  }
}

}  // namespace

void ByteWriter::u32(std::uint32_t v) { write_le(out_, v, 4); }
void ByteWriter::u64(std::uint64_t v) { write_le(out_, v, 8); }
void ByteWriter::f64(double v) { write_le(out_, std::bit_cast<std::uint64_t>(v), 8); }

void ByteWriter::str(std::string_view s) {
  u64(s.size());
  out_.append(s);
}

void ByteWriter::f64s(const std::vector<double>& v) {
  u64(v.size());
  for (double x : v) f64(x);
}

void ByteWriter::u64s(const std::vector<std::size_t>& v) {
  u64(v.size());
  for (std::size_t x : v) u64(x);
}

void ByteReader::need(std::size_t n) const {
  if (n > remaining()) {
    throw CheckpointError(what_ + ": truncated (needed " + std::to_string(n) + " bytes at offset " +
                          std::to_string(pos_) + ", " + std::to_string(remaining()) + " left)");
  }
}

std::string_view ByteReader::bytes(std::size_t n) {
  need(n);
  const auto s = data_.substr(pos_, n);
  pos_ += n;
  return s;
}

std::uint32_t ByteReader::u32() { return static_cast<std::uint32_t>(read_le(bytes(4))); }
std::uint64_t ByteReader::u64() { return read_le(bytes(8)); }
double ByteReader::f64() { return std::bit_cast<double>(read_le(bytes(8))); }

std::string ByteReader::str() {
  const auto n = u64();
  return std::string(bytes(n));
}

std::vector<double> ByteReader::f64s() {
  const auto n = u64();
  need(n > remaining() / 8 ? remaining() + 1 : n * 8);
  std::vector<double> v(n);
  for (auto& x : v) x = f64();
  return v;
}

std::vector<std::size_t> ByteReader::u64s() {
  const auto n = u64();
  need(n > remaining() / 8 ? remaining() + 1 : n * 8);
  std::vector<std::size_t> v(n);
  for (auto& x : v) x = u64();
  return v;
}

std::uint64_t mesh_fingerprint(const Mesh& mesh) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  fnv(h, mesh.positions.size());
  for (const auto& p : mesh.positions) {
    fnv(h, std::bit_cast<std::uint64_t>(p.x));
    fnv(h, std::bit_cast<std::uint64_t>(p.y));
  }
  fnv(h, mesh.elements.size());
  for (const auto& t : mesh.elements) {
    for (std::size_t v : t) fnv(h, v);
  }
  return h;
}

Checkpoint make_checkpoint(const GcaModel& model, const Mesh& mesh, const NormalizationStats& stats,
                           const Split& split) {
  Checkpoint c;
  c.config = model.config();
  c.mesh_fingerprint = mesh_fingerprint(mesh);
  c.mask = model.mask();
  c.stats = stats;
  c.split = split;
  for (const auto& p : model.named_parameters()) c.parameters.push_back({p.name, p.tensor.detach()});
  return c;
}

std::string serialize_checkpoint(const Checkpoint& c) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.str(format_config(c.config));
  w.u64(c.mesh_fingerprint);

  w.u32(c.mask ? 1 : 0);
  if (c.mask) {
    w.u64(c.mask->num_nodes);
    w.f64(c.mask->rate);
    w.u64(c.mask->seed);
    w.u64s(c.mask->kept);
  }

  const auto& s = c.stats;
  w.f64s(s.node_mean);
  w.f64s(s.node_std);
  w.f64s(s.sample_mean);
  w.f64s(s.sample_std);
  w.f64s(s.param_min);
  w.f64s(s.param_max);
  w.f64(s.floor);

  w.u64s(c.split.train);
  w.u64s(c.split.test);

  w.u64(c.parameters.size());
  for (const auto& p : c.parameters) {
    w.str(p.name);
    w.u64(p.tensor.shape().rows);
    w.u64(p.tensor.shape().cols);
    for (double v : p.tensor.values()) w.f64(v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  ByteReader r(bytes, "checkpoint");
  if (bytes.size() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) {
    throw CheckpointError("checkpoint: bad magic (expected \"GCAR\")");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version) +
                          " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  try {
    c.config = parse_config(r.str());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: bad config block: ") + e.what());
  }
  c.mesh_fingerprint = r.u64();

  const auto has_mask = r.u32();
  if (has_mask > 1) throw CheckpointError("checkpoint: corrupt mask flag");
  if (has_mask == 1) {
    PoolMask m;
    m.num_nodes = r.u64();
    m.rate = r.f64();
    m.seed = r.u64();
    m.kept = r.u64s();
    c.mask = std::move(m);
  }

  auto& s = c.stats;
  s.node_mean = r.f64s();
  s.node_std = r.f64s();
  s.sample_mean = r.f64s();
  s.sample_std = r.f64s();
  s.param_min = r.f64s();
  s.param_max = r.f64s();
  s.floor = r.f64();

  c.split.train = r.u64s();
  c.split.test = r.u64s();

  const auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const Shape shape{r.u64(), r.u64()};
    if (shape.rows != 0 && shape.cols > r.remaining() / 8 / shape.rows) {
      throw CheckpointError("checkpoint: truncated buffer '" + name + "'");
    }
    std::vector<double> values(shape.rows * shape.cols);
    for (auto& v : values) v = r.f64();
    c.parameters.push_back({std::move(name), Tensor(shape, std::move(values), true)});
  }
  if (r.remaining() != 0) {
    throw CheckpointError("checkpoint: " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return c;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const std::runtime_error& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  return deserialize_checkpoint(bytes);
}

GcaModel restore_model(const Checkpoint& checkpoint, const Mesh& mesh) {
  if (mesh_fingerprint(mesh) != checkpoint.mesh_fingerprint) {
    throw CheckpointError("checkpoint: mesh does not match the one the model was trained on");
  }
  GcaModel model(checkpoint.config, build_graph(mesh, checkpoint.config.pseudo), checkpoint.mask);
  model.load_parameters(checkpoint.parameters);
  return model;
}

}  // namespace gcarom
