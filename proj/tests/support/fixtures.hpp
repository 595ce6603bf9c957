#pragma once

// Scratch directories and random inputs shared by unit and acceptance tests.

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>
#include <unistd.h>

#include "cras/tensor.hpp"

namespace cras {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("cras_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

template <typename T>
Tensor3<T> random_tensor(std::size_t c, std::size_t h, std::size_t w, std::mt19937& gen,
                         double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor3<T> t(c, h, w);
  for (auto& v : t.storage()) v = T(dist(gen));
  return t;
}

}  // namespace cras

namespace cras {

// Small-integer entries so that exact cosine ties are common. `dup_center`
// duplicates center 0 into the last slot to force a global tie, and every
// center repeats some of its position vectors to force local ties.
inline std::vector<FeatureMap> tie_heavy_centers(std::size_t k, std::size_t c, std::size_t h,
                                                 std::size_t w, std::mt19937& gen,
                                                 bool dup_center) {
  std::uniform_int_distribution<int> value(-2, 2);
  std::vector<FeatureMap> centers;
  for (std::size_t i = 0; i < k; ++i) {
    FeatureMap m(c, h, w);
    for (std::size_t q = 0; q < m.plane(); ++q) {
      bool nonzero = false;
      while (!nonzero) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const int v = value(gen);
          m.storage()[ch * m.plane() + q] = float(v);
          nonzero |= v != 0;
        }
      }
    }
    for (std::size_t q = 1; q < m.plane(); q += 3)
      for (std::size_t ch = 0; ch < c; ++ch)
        m.storage()[ch * m.plane() + q] = m.storage()[ch * m.plane() + q - 1];
    centers.push_back(std::move(m));
  }
  if (dup_center && k > 1) centers.back() = centers.front();
  return centers;
}

inline FeatureMap tie_heavy_query(std::size_t c, std::size_t h, std::size_t w, std::mt19937& gen) {
  return tie_heavy_centers(1, c, h, w, gen, false).front();
}

}  // namespace cras
