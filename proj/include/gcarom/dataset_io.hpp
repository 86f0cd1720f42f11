#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gcarom/analysis.hpp"
#include "gcarom/pipeline.hpp"

namespace gcarom {

/// Describes the files of one dataset directory (manifest.txt).
struct DatasetManifest {
  std::string name;
  std::string nodes_file = "nodes.csv";
  std::string elements_file = "elements.csv";
  std::string params_file = "params.csv";
  std::string fields_file = "fields.bin";
  std::size_t num_samples = 0;
  std::size_t num_nodes = 0;
  std::size_t components = 1;
  std::size_t param_dim = 0;
  bool has_labels = false;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline constexpr std::uint32_t kFieldsVersion = 1;

/// "GCAF", u32 version, u64 N_S, N_h, d, then N_S * N_h * d little-endian f64.
std::string encode_fields(std::span<const double> fields, std::size_t num_samples,
                          std::size_t num_nodes, std::size_t components);

struct FieldMatrix {
  std::size_t num_samples = 0;
  std::size_t num_nodes = 0;
  std::size_t components = 0;
  std::vector<double> values;
};

/// Throws DataError on bad magic, version or a payload that contradicts the header.
FieldMatrix decode_fields(std::string_view bytes);

/// Writes manifest.txt, nodes/elements/params CSV and the fields binary.
void save_dataset(const SnapshotDataset& dataset, const std::filesystem::path& dir);

/// Throws DataError naming the missing or inconsistent file.
SnapshotDataset load_dataset(const std::filesystem::path& dir);

DatasetManifest read_manifest(const std::filesystem::path& dir);

/// "id,mu_1..mu_P,epsilon,split" with split = train/test.
void write_error_report_csv(const std::filesystem::path& path, const SnapshotDataset& dataset,
                            const ErrorReport& report, std::span<const std::size_t> train_ids);

/// "id,mu_1..mu_P,label".
void write_cluster_csv(const std::filesystem::path& path, const SnapshotDataset& dataset,
                       std::span<const std::size_t> ids, std::span<const int> labels);

}  // namespace gcarom
