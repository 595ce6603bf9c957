#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cras/tensor.hpp"

namespace cras {

// CRFT on-disk layout, all integers little-endian:
//   "CRFT" | u16 version (=1) | u8 dtype | u8 ndim | ndim x u32 dims | payload
// Payload is row-major in dims order.
inline constexpr char kTensorMagic[4] = {'C', 'R', 'F', 'T'};
inline constexpr std::uint16_t kTensorVersion = 1;

enum class DType : std::uint8_t { kFloat32 = 1, kUInt8 = 2 };

std::size_t dtype_size(DType dtype);

struct StoredTensor {
  std::vector<std::uint32_t> dims;
  std::variant<std::vector<float>, std::vector<std::uint8_t>> values;

  DType dtype() const noexcept {
    return std::holds_alternative<std::vector<float>>(values) ? DType::kFloat32
                                                              : DType::kUInt8;
  }
  std::size_t element_count() const noexcept;
  bool operator==(const StoredTensor&) const = default;
};

StoredTensor to_stored(const FeatureMap& map);
StoredTensor to_stored(const Mask& mask);
StoredTensor to_stored(const Grid<float>& grid);

FeatureMap as_feature_map(const StoredTensor& tensor);
Mask as_mask(const StoredTensor& tensor);
Grid<float> as_float_grid(const StoredTensor& tensor);

// Serializes one CRFT record. Throws kNonFinite naming the flat index of the
// first NaN/Inf, kFormat on empty or out-of-range dims.
std::string encode_tensor(const StoredTensor& tensor);

// Parses one CRFT record starting at `offset` and advances it past the record.
// When `exact` is set the record must consume the rest of `bytes`.
StoredTensor decode_tensor(std::span<const char> bytes, std::size_t& offset, bool exact);

void write_tensor(const std::filesystem::path& path, const StoredTensor& tensor);
void write_tensor(const std::filesystem::path& path, const FeatureMap& map);
void write_tensor(const std::filesystem::path& path, const Mask& mask);
void write_tensor(const std::filesystem::path& path, const Grid<float>& grid);

StoredTensor read_tensor(const std::filesystem::path& path);
FeatureMap read_feature_map(const std::filesystem::path& path);
Mask read_mask(const std::filesystem::path& path);

// Writes through a temporary sibling and renames over `path`.
void atomic_write_file(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Dataset manifest: JSON lines, first line {"manifest_version":1}.

inline constexpr int kManifestVersion = 1;

enum class Split { kTrain, kTest };
enum class Label { kNormal, kAnomalous };

std::string_view to_string(Split split);
std::string_view to_string(Label label);

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::string category;
  std::string sample_id;
  Split split = Split::kTrain;
  Label label = Label::kNormal;
  std::optional<std::string> mask_path;
  std::optional<int> level;  // backbone hierarchy level; absent for merged features

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::filesystem::path root;  // directory relative paths resolve against
  std::vector<ManifestEntry> entries;
  std::vector<std::string> categories;  // lexicographically ordered, unique

  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
  std::size_t category_index(std::string_view category) const;
};

struct ManifestOptions {
  bool eager_validation = false;  // stat every referenced file at load time
};

DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& root,
                               const ManifestOptions& options = {});
DatasetManifest load_manifest(const std::filesystem::path& path,
                              const ManifestOptions& options = {});
std::string serialize_manifest(std::span<const ManifestEntry> entries);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

// One logical sample: all manifest entries sharing (split, sample_id). Merged
// samples carry a single level-less path.
struct SampleRecord {
  std::string sample_id;
  std::string category;
  Split split = Split::kTrain;
  Label label = Label::kNormal;
  std::optional<std::string> mask_path;
  std::vector<std::pair<int, std::string>> levels;  // (level, path), ascending level
  std::optional<std::string> merged_path;
};

std::vector<SampleRecord> group_samples(const DatasetManifest& manifest, Split split);

}  // namespace cras
