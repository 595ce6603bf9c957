#include "cras/nn_model.hpp"

#include <cstring>

#include "cras/tensor_store.hpp"

namespace cras {

namespace {

StoredTensor matrix_record(const Matrix<float>& m) {
  return {{static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)}, m.values};
}

StoredTensor bias_record(const std::vector<float>& b) {
  return {{1u, static_cast<std::uint32_t>(b.size())}, b};
}

Matrix<float> read_matrix(std::span<const char> bytes, std::size_t& offset, const char* name) {
  StoredTensor t = decode_tensor(bytes, offset, false);
  require(t.dtype() == DType::kFloat32 && t.dims.size() == 2, ErrorCode::kFormat,
          std::string("checkpoint record ") + name + " must be a 2-d float32 tensor");
  Matrix<float> m;
  m.rows = t.dims[0];
  m.cols = t.dims[1];
  m.values = std::get<std::vector<float>>(std::move(t.values));
  return m;
}

std::vector<float> read_bias(std::span<const char> bytes, std::size_t& offset, const char* name,
                             std::size_t expected) {
  Matrix<float> m = read_matrix(bytes, offset, name);
  require(m.rows == 1 && m.cols == expected, ErrorCode::kFormat,
          std::string("checkpoint record ") + name + " has wrong length");
  return std::move(m.values);
}

}  // namespace

std::string encode_checkpoint(const ModelParams& params) {
  std::string out(kModelMagic, 4);
  out.push_back(static_cast<char>(kModelVersion & 0xff));
  out.push_back(static_cast<char>(kModelVersion >> 8));
  out += encode_tensor(matrix_record(params.adapter.layer.weight));
  out += encode_tensor(bias_record(params.adapter.layer.bias));
  out += encode_tensor(matrix_record(params.discriminator.hidden.weight));
  out += encode_tensor(bias_record(params.discriminator.hidden.bias));
  out += encode_tensor(matrix_record(params.discriminator.out.weight));
  out += encode_tensor(bias_record(params.discriminator.out.bias));
  return out;
}

ModelParams decode_checkpoint(std::string_view bytes) {
  require(bytes.size() >= 6, ErrorCode::kTruncated, "checkpoint header truncated");
  require(std::memcmp(bytes.data(), kModelMagic, 4) == 0, ErrorCode::kBadMagic,
          "bad checkpoint magic");
  const auto version = static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[4]) |
                                                  (static_cast<unsigned char>(bytes[5]) << 8));
  require(version >= 1 && version <= kModelVersion, ErrorCode::kBadVersion,
          "unsupported checkpoint version " + std::to_string(version));

  std::span<const char> span(bytes.data(), bytes.size());
  std::size_t offset = 6;
  ModelParams params;
  auto& adapter = params.adapter.layer;
  adapter.weight = read_matrix(span, offset, "adapter.weight");
  require(adapter.weight.rows == adapter.weight.cols, ErrorCode::kFormat,
          "adapter weight must be square");
  adapter.bias = read_bias(span, offset, "adapter.bias", adapter.weight.rows);

  auto& disc = params.discriminator;
  disc.hidden.weight = read_matrix(span, offset, "disc.hidden.weight");
  disc.hidden.bias = read_bias(span, offset, "disc.hidden.bias", disc.hidden.weight.rows);
  disc.out.weight = read_matrix(span, offset, "disc.out.weight");
  require(disc.out.weight.rows == 1 && disc.out.weight.cols == disc.hidden.weight.rows,
          ErrorCode::kFormat, "discriminator output layer has wrong shape");
  disc.out.bias = read_bias(span, offset, "disc.out.bias", 1);
  require(offset == bytes.size(), ErrorCode::kTruncated, "trailing bytes after checkpoint");
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  atomic_write_file(path, encode_checkpoint(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace cras
