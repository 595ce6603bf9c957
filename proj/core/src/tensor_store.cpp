#include "cras/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

#include <nlohmann/json.hpp>

namespace cras {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

std::uint16_t get_u16(const char* p) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(p[0]) |
                                    (static_cast<unsigned char>(p[1]) << 8));
}

std::size_t dims_product(std::span<const std::uint32_t> dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kFloat32: return 4;
    case DType::kUInt8: return 1;
  }
  fail(ErrorCode::kFormat, "unknown dtype");
}

std::size_t StoredTensor::element_count() const noexcept {
  return std::visit([](const auto& v) { return v.size(); }, values);
}

StoredTensor to_stored(const FeatureMap& map) {
  return {{static_cast<std::uint32_t>(map.channels()), static_cast<std::uint32_t>(map.height()),
           static_cast<std::uint32_t>(map.width())},
          map.storage()};
}

StoredTensor to_stored(const Mask& mask) {
  return {{static_cast<std::uint32_t>(mask.height()), static_cast<std::uint32_t>(mask.width())},
          std::vector<std::uint8_t>(mask.storage().begin(), mask.storage().end())};
}

StoredTensor to_stored(const Grid<float>& grid) {
  return {{static_cast<std::uint32_t>(grid.height()), static_cast<std::uint32_t>(grid.width())},
          grid.storage()};
}

FeatureMap as_feature_map(const StoredTensor& tensor) {
  require(tensor.dtype() == DType::kFloat32, ErrorCode::kFormat,
          "feature map must be float32");
  const auto& values = std::get<std::vector<float>>(tensor.values);
  if (tensor.dims.size() == 3) {
    return FeatureMap(tensor.dims[0], tensor.dims[1], tensor.dims[2], values);
  }
  require(tensor.dims.size() == 2, ErrorCode::kFormat, "feature map must have 2 or 3 dims");
  return FeatureMap(1, tensor.dims[0], tensor.dims[1], values);
}

Mask as_mask(const StoredTensor& tensor) {
  require(tensor.dtype() == DType::kUInt8, ErrorCode::kFormat, "mask must be uint8");
  const auto& values = std::get<std::vector<std::uint8_t>>(tensor.values);
  std::vector<unsigned char> data(values.begin(), values.end());
  if (tensor.dims.size() == 3) {
    require(tensor.dims[0] == 1, ErrorCode::kFormat, "3-d mask must have one channel");
    return Mask(tensor.dims[1], tensor.dims[2], std::move(data));
  }
  return Mask(tensor.dims[0], tensor.dims[1], std::move(data));
}

Grid<float> as_float_grid(const StoredTensor& tensor) {
  require(tensor.dtype() == DType::kFloat32 && tensor.dims.size() == 2, ErrorCode::kFormat,
          "expected a 2-d float32 tensor");
  return Grid<float>(tensor.dims[0], tensor.dims[1], std::get<std::vector<float>>(tensor.values));
}

std::string encode_tensor(const StoredTensor& tensor) {
  require(tensor.dims.size() == 2 || tensor.dims.size() == 3, ErrorCode::kFormat,
          "ndim must be 2 or 3, got " + std::to_string(tensor.dims.size()));
  for (auto d : tensor.dims) require(d > 0, ErrorCode::kFormat, "dims must be nonzero");
  const std::size_t count = dims_product(tensor.dims);
  require(count == tensor.element_count(), ErrorCode::kDimMismatch,
          "payload has " + std::to_string(tensor.element_count()) + " values, dims imply " +
              std::to_string(count));

  std::string out;
  out.reserve(8 + 4 * tensor.dims.size() + count * dtype_size(tensor.dtype()));
  out.append(kTensorMagic, 4);
  put_u16(out, kTensorVersion);
  out.push_back(static_cast<char>(tensor.dtype()));
  out.push_back(static_cast<char>(tensor.dims.size()));
  for (auto d : tensor.dims) put_u32(out, d);

  if (const auto* floats = std::get_if<std::vector<float>>(&tensor.values)) {
    for (std::size_t i = 0; i < floats->size(); ++i) {
      const float v = (*floats)[i];
      if (!std::isfinite(v)) {
        fail(ErrorCode::kNonFinite, "non-finite value at flat index " + std::to_string(i));
      }
      put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
  } else {
    const auto& bytes = std::get<std::vector<std::uint8_t>>(tensor.values);
    out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }
  return out;
}

StoredTensor decode_tensor(std::span<const char> bytes, std::size_t& offset, bool exact) {
  auto remaining = [&] { return bytes.size() - offset; };
  require(remaining() >= 8, ErrorCode::kTruncated, "header truncated");
  const char* p = bytes.data() + offset;
  require(std::memcmp(p, kTensorMagic, 4) == 0, ErrorCode::kBadMagic,
          "bad magic '" + std::string(p, 4) + "'");
  const std::uint16_t version = get_u16(p + 4);
  require(version >= 1 && version <= kTensorVersion, ErrorCode::kBadVersion,
          "unsupported CRFT version " + std::to_string(version));
  const auto dtype_raw = static_cast<std::uint8_t>(p[6]);
  require(dtype_raw == 1 || dtype_raw == 2, ErrorCode::kFormat,
          "unknown dtype " + std::to_string(dtype_raw));
  const auto dtype = static_cast<DType>(dtype_raw);
  const auto ndim = static_cast<std::uint8_t>(p[7]);
  require(ndim == 2 || ndim == 3, ErrorCode::kFormat,
          "ndim must be 2 or 3, got " + std::to_string(ndim));
  offset += 8;
  require(remaining() >= 4u * ndim, ErrorCode::kTruncated, "dims truncated");

  StoredTensor tensor;
  tensor.dims.resize(ndim);
  for (std::size_t i = 0; i < ndim; ++i) {
    tensor.dims[i] = get_u32(bytes.data() + offset);
    offset += 4;
    require(tensor.dims[i] > 0, ErrorCode::kFormat, "dims must be nonzero");
  }
  const std::size_t count = dims_product(tensor.dims);
  const std::size_t payload = count * dtype_size(dtype);
  require(remaining() >= payload, ErrorCode::kTruncated,
          "payload truncated: need " + std::to_string(payload) + " bytes, have " +
              std::to_string(remaining()));
  if (exact) {
    require(remaining() == payload, ErrorCode::kTruncated,
            "payload length mismatch: " + std::to_string(remaining() - payload) +
                " trailing bytes");
  }

  const char* src = bytes.data() + offset;
  if (dtype == DType::kFloat32) {
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      values[i] = std::bit_cast<float>(get_u32(src + 4 * i));
      if (!std::isfinite(values[i])) {
        fail(ErrorCode::kNonFinite, "non-finite value at flat index " + std::to_string(i));
      }
    }
    tensor.values = std::move(values);
  } else {
    tensor.values = std::vector<std::uint8_t>(reinterpret_cast<const std::uint8_t*>(src),
                                              reinterpret_cast<const std::uint8_t*>(src) + count);
  }
  offset += payload;
  return tensor;
}

void atomic_write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorCode::kIo, "rename to " + path.string() + " failed");
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

void write_tensor(const fs::path& path, const StoredTensor& tensor) {
  atomic_write_file(path, encode_tensor(tensor));
}
void write_tensor(const fs::path& path, const FeatureMap& map) { write_tensor(path, to_stored(map)); }
void write_tensor(const fs::path& path, const Mask& mask) { write_tensor(path, to_stored(mask)); }
void write_tensor(const fs::path& path, const Grid<float>& grid) {
  write_tensor(path, to_stored(grid));
}

StoredTensor read_tensor(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::size_t offset = 0;
  try {
    return decode_tensor(bytes, offset, /*exact=*/true);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

FeatureMap read_feature_map(const fs::path& path) { return as_feature_map(read_tensor(path)); }
Mask read_mask(const fs::path& path) { return as_mask(read_tensor(path)); }

// ---------------------------------------------------------------------------

std::string_view to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }
std::string_view to_string(Label label) {
  return label == Label::kNormal ? "normal" : "anomalous";
}

std::size_t DatasetManifest::category_index(std::string_view category) const {
  auto it = std::lower_bound(categories.begin(), categories.end(), category);
  require(it != categories.end() && *it == category, ErrorCode::kManifest,
          "unknown category '" + std::string(category) + "'");
  return static_cast<std::size_t>(it - categories.begin());
}

namespace {

ManifestEntry parse_entry(const json& record, std::size_t line_no) {
  auto where = [&] { return "manifest line " + std::to_string(line_no) + ": "; };
  auto str = [&](const char* key) -> std::string {
    auto it = record.find(key);
    require(it != record.end() && it->is_string(), ErrorCode::kManifest,
            where() + "missing string field '" + key + "'");
    return it->get<std::string>();
  };

  ManifestEntry entry;
  entry.path = str("path");
  entry.category = str("category");
  entry.sample_id = str("sample_id");
  const std::string split = str("split");
  if (split == "train") entry.split = Split::kTrain;
  else if (split == "test") entry.split = Split::kTest;
  else fail(ErrorCode::kManifest, where() + "split must be train|test, got '" + split + "'");
  const std::string label = str("label");
  if (label == "normal") entry.label = Label::kNormal;
  else if (label == "anomalous") entry.label = Label::kAnomalous;
  else fail(ErrorCode::kManifest, where() + "label must be normal|anomalous, got '" + label + "'");
  if (auto it = record.find("mask_path"); it != record.end() && !it->is_null()) {
    entry.mask_path = it->get<std::string>();
  }
  if (auto it = record.find("level"); it != record.end() && !it->is_null()) {
    entry.level = it->get<int>();
  }
  return entry;
}

}  // namespace

DatasetManifest parse_manifest(std::string_view text, const fs::path& root,
                               const ManifestOptions& options) {
  DatasetManifest manifest;
  manifest.root = root;
  std::set<std::string> paths;
  std::set<std::string> categories;
  bool header_seen = false;

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorCode::kManifest, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    require(record.is_object(), ErrorCode::kManifest,
            "manifest line " + std::to_string(line_no) + ": expected an object");

    if (!header_seen) {
      auto it = record.find("manifest_version");
      require(it != record.end() && it->is_number_integer(), ErrorCode::kManifest,
              "manifest must start with a {\"manifest_version\":1} header");
      const int version = it->get<int>();
      require(version >= 1 && version <= kManifestVersion, ErrorCode::kBadVersion,
              "unsupported manifest_version " + std::to_string(version));
      header_seen = true;
      continue;
    }

    ManifestEntry entry = parse_entry(record, line_no);
    require(paths.insert(entry.path).second, ErrorCode::kManifest,
            "duplicate path '" + entry.path + "'");
    require(!(entry.split == Split::kTrain && entry.label == Label::kAnomalous),
            ErrorCode::kManifest,
            "train entry '" + entry.path + "' is labeled anomalous; training is normal-only");
    if (options.eager_validation) {
      require(fs::exists(manifest.resolve(entry.path)), ErrorCode::kIo,
              "missing file " + manifest.resolve(entry.path).string());
      if (entry.mask_path) {
        require(fs::exists(manifest.resolve(*entry.mask_path)), ErrorCode::kIo,
                "missing mask " + manifest.resolve(*entry.mask_path).string());
      }
    }
    categories.insert(entry.category);
    manifest.entries.push_back(std::move(entry));
  }
  require(header_seen, ErrorCode::kManifest, "manifest is empty");
  manifest.categories.assign(categories.begin(), categories.end());
  return manifest;
}

DatasetManifest load_manifest(const fs::path& path, const ManifestOptions& options) {
  require(fs::exists(path), ErrorCode::kIo, "manifest not found: " + path.string());
  return parse_manifest(read_file(path), path.parent_path(), options);
}

std::string serialize_manifest(std::span<const ManifestEntry> entries) {
  std::string out = json{{"manifest_version", kManifestVersion}}.dump() + "\n";
  for (const auto& e : entries) {
    json record = {{"path", e.path},
                   {"category", e.category},
                   {"sample_id", e.sample_id},
                   {"split", std::string(to_string(e.split))},
                   {"label", std::string(to_string(e.label))}};
    if (e.mask_path) record["mask_path"] = *e.mask_path;
    if (e.level) record["level"] = *e.level;
    out += record.dump() + "\n";
  }
  return out;
}

void write_manifest(const fs::path& path, std::span<const ManifestEntry> entries) {
  atomic_write_file(path, serialize_manifest(entries));
}

std::vector<SampleRecord> group_samples(const DatasetManifest& manifest, Split split) {
  std::vector<SampleRecord> samples;
  std::map<std::string, std::size_t> index;
  for (const auto& e : manifest.entries) {
    if (e.split != split) continue;
    auto [it, inserted] = index.try_emplace(e.sample_id, samples.size());
    if (inserted) {
      SampleRecord record;
      record.sample_id = e.sample_id;
      record.category = e.category;
      record.split = e.split;
      record.label = e.label;
      samples.push_back(std::move(record));
    }
    SampleRecord& record = samples[it->second];
    require(record.category == e.category && record.label == e.label, ErrorCode::kManifest,
            "sample '" + e.sample_id + "' has inconsistent category/label across entries");
    if (e.mask_path) record.mask_path = e.mask_path;
    if (e.level) {
      record.levels.emplace_back(*e.level, e.path);
    } else {
      require(!record.merged_path, ErrorCode::kManifest,
              "sample '" + e.sample_id + "' has more than one level-less entry");
      record.merged_path = e.path;
    }
  }
  for (auto& s : samples) {
    std::sort(s.levels.begin(), s.levels.end());
    for (std::size_t i = 1; i < s.levels.size(); ++i) {
      require(s.levels[i].first != s.levels[i - 1].first, ErrorCode::kManifest,
              "sample '" + s.sample_id + "' repeats level " + std::to_string(s.levels[i].first));
    }
  }
  return samples;
}

}  // namespace cras
