#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cras/error.hpp"

namespace cras {

// Dense channels x height x width tensor, row-major in (c, h, w) order.
template <typename T>
class Tensor3 {
 public:
  using value_type = T;

  Tensor3() = default;
  Tensor3(std::size_t channels, std::size_t height, std::size_t width, T fill = T{})
      : channels_(channels),
        height_(height),
        width_(width),
        data_(channels * height * width, fill) {}
  Tensor3(std::size_t channels, std::size_t height, std::size_t width, std::vector<T> data)
      : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
    require(data_.size() == channels * height * width, ErrorCode::kDimMismatch,
            "tensor payload does not match dims");
  }

  std::size_t channels() const noexcept { return channels_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t plane() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t c, std::size_t h, std::size_t w) {
    return data_[(c * height_ + h) * width_ + w];
  }
  const T& operator()(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * height_ + h) * width_ + w];
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  // Channel slice c as a contiguous height x width plane.
  std::span<T> channel(std::size_t c) { return {data_.data() + c * plane(), plane()}; }
  std::span<const T> channel(std::size_t c) const {
    return {data_.data() + c * plane(), plane()};
  }

  template <typename U>
  bool same_shape(const Tensor3<U>& other) const noexcept {
    return channels_ == other.channels() && height_ == other.height() &&
           width_ == other.width();
  }

  template <typename U>
  Tensor3<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return Tensor3<U>(channels_, height_, width_, std::move(out));
  }

  bool operator==(const Tensor3&) const = default;

 private:
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> data_;
};

// Row-major height x width grid of scalars (norm maps, ratio maps, score maps, masks).
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(std::size_t height, std::size_t width, T fill = T{})
      : height_(height), width_(width), data_(height * width, fill) {}
  Grid(std::size_t height, std::size_t width, std::vector<T> data)
      : height_(height), width_(width), data_(std::move(data)) {
    require(data_.size() == height * width, ErrorCode::kDimMismatch,
            "grid payload does not match dims");
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t h, std::size_t w) { return data_[h * width_ + w]; }
  const T& operator()(std::size_t h, std::size_t w) const { return data_[h * width_ + w]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> data_;
};

using FeatureMap = Tensor3<float>;
using Mask = Grid<unsigned char>;

inline std::string shape_string(std::size_t c, std::size_t h, std::size_t w) {
  return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

template <typename T>
std::string shape_string(const Tensor3<T>& t) {
  return shape_string(t.channels(), t.height(), t.width());
}

template <typename T, typename U>
void require_same_shape(const Tensor3<T>& a, const Tensor3<U>& b, const char* what) {
  if (!a.same_shape(b)) {
    fail(ErrorCode::kDimMismatch,
         std::string(what) + ": shape " + shape_string(a) + " vs " + shape_string(b));
  }
}

}  // namespace cras
