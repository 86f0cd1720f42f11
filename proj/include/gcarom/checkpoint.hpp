#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gcarom/model.hpp"
#include "gcarom/pipeline.hpp"

namespace gcarom {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Appends little-endian scalars to a byte string regardless of host order.
class ByteWriter {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(std::string_view s);  ///< u64 length + bytes
  void f64s(const std::vector<double>& v);  ///< u64 count + values
  void u64s(const std::vector<std::size_t>& v);
  [[nodiscard]] const std::string& data() const { return out_; }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

/// Reads what ByteWriter wrote; throws CheckpointError("truncated ...") past the end.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}
  std::string_view bytes(std::size_t n);
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  std::vector<double> f64s();
  std::vector<std::size_t> u64s();
  [[nodiscard]] std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const;
  std::string_view data_;
  std::string what_;
  std::size_t pos_ = 0;
};

/// FNV-1a over node coordinates and element indices; ties a checkpoint to its mesh.
std::uint64_t mesh_fingerprint(const Mesh& mesh);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to rebuild a trained surrogate on the same mesh.
struct Checkpoint {
  ModelConfig config;
  std::uint64_t mesh_fingerprint = 0;
  std::optional<PoolMask> mask;
  NormalizationStats stats;
  Split split;
  std::vector<NamedTensor> parameters;
};

Checkpoint make_checkpoint(const GcaModel& model, const Mesh& mesh, const NormalizationStats& stats,
                           const Split& split);

/// "GCAR", u32 version, config text, mesh fingerprint, mask, stats, split,
/// then named parameter buffers (u64 rows, u64 cols, little-endian f64 values).
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds the model on `mesh` (which must match the fingerprint) and loads the parameters.
GcaModel restore_model(const Checkpoint& checkpoint, const Mesh& mesh);

/// Whole-file helpers shared by the binary formats.
std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace gcarom
