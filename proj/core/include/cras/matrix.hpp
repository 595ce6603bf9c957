#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cras/tensor.hpp"

namespace cras {

// Row-major batch of vectors: rows = batch elements, cols = feature dim.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), values(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<T> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

// (C, H, W) -> (H*W) x C: one row per spatial position.
template <typename T>
Matrix<T> to_positions(const Tensor3<T>& map) {
  const std::size_t C = map.channels();
  const std::size_t P = map.plane();
  Matrix<T> out(P, C);
  for (std::size_t c = 0; c < C; ++c) {
    auto src = map.channel(c);
    for (std::size_t p = 0; p < P; ++p) out.values[p * C + c] = src[p];
  }
  return out;
}

template <typename T>
Tensor3<T> from_positions(const Matrix<T>& rows, std::size_t height, std::size_t width) {
  require(rows.rows == height * width, ErrorCode::kDimMismatch,
          "position matrix does not match spatial dims");
  const std::size_t C = rows.cols;
  const std::size_t P = rows.rows;
  Tensor3<T> out(C, height, width);
  for (std::size_t c = 0; c < C; ++c) {
    auto dst = out.channel(c);
    for (std::size_t p = 0; p < P; ++p) dst[p] = rows.values[p * C + c];
  }
  return out;
}

}  // namespace cras
