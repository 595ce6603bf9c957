#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cras/matrix.hpp"
#include "cras/nn_model.hpp"
#include "cras/tensor.hpp"

namespace cras {

enum class RefreshPolicy { kOnce, kPerEpoch };
enum class CenterMode { kMean, kSingleSample };

std::string_view to_string(RefreshPolicy policy);
std::string_view to_string(CenterMode mode);
RefreshPolicy parse_refresh_policy(std::string_view text);
CenterMode parse_center_mode(std::string_view text);

// Per-category contextual center c_k with cached flat/positional views.
class ClassCenter {
 public:
  // Throws kZeroNorm when vec(map) is the zero vector.
  ClassCenter(std::string category, FeatureMap map);

  const std::string& category() const noexcept { return category_; }
  const FeatureMap& map() const noexcept { return map_; }
  // vec(c_k) in (c, h, w) order.
  std::span<const float> flat() const noexcept { return map_.data(); }
  double flat_norm() const noexcept { return flat_norm_; }
  // (H*W) x C, one row per center vector.
  const Matrix<float>& positions() const noexcept { return positions_; }
  std::span<const double> position_norms() const noexcept { return position_norms_; }

 private:
  std::string category_;
  FeatureMap map_;
  double flat_norm_ = 0.0;
  Matrix<float> positions_;
  std::vector<double> position_norms_;
};

struct CenterBank {
  std::vector<ClassCenter> centers;  // manifest category order
  RefreshPolicy refresh_policy = RefreshPolicy::kPerEpoch;

  std::size_t size() const noexcept { return centers.size(); }
  const ClassCenter& operator[](std::size_t k) const { return centers[k]; }
  std::size_t index_of(std::string_view category) const;
  // Categories unique, all maps share dims.
  void validate() const;
};

// c_k = mean_i A(t_i) with the adapter held fixed.
ClassCenter init_center(std::string category, std::span<const FeatureMap> samples,
                        const AdapterNet<float>& adapter);

struct ClassMatch {
  std::size_t index = 0;
  double similarity = 0.0;
};

// Global stage: argmax_k cos(vec(u), vec(c_k)), ties to the lowest k.
ClassMatch match_class(const FeatureMap& u, const CenterBank& bank);

struct Alignment {
  FeatureMap recomposed;               // p_i
  std::vector<std::uint32_t> source;   // per query position, the center's linear index h*W+w
};

// Local stage: each u[h,w] is replaced by the most cosine-similar vector of
// `center`, ties to the lowest linear index. Center spatial dims may differ from u.
Alignment align_patches(const FeatureMap& u, const ClassCenter& center);

struct Recomposition {
  ClassMatch match;
  Alignment alignment;
};

// Global-to-local: align only against the matched center.
Recomposition recompose(const FeatureMap& u, const CenterBank& bank);

struct ExhaustiveAlignment {
  FeatureMap recomposed;
  std::vector<std::uint32_t> class_index;
  std::vector<std::uint32_t> source;
};

// Baseline 1-NN over every vector of every center; cost grows with |K|.
ExhaustiveAlignment exhaustive_align(const FeatureMap& u, const CenterBank& bank);

struct CategorySamples {
  std::string category;
  std::vector<FeatureMap> features;  // merged features t_i
};

// One center per category; single-sample mode uses the first sample of each class.
CenterBank build_center_bank(std::span<const CategorySamples> classes,
                             const AdapterNet<float>& adapter, CenterMode mode,
                             RefreshPolicy policy);

// Directory of CRFT maps plus index.json mapping category -> file.
void save_center_bank(const std::filesystem::path& dir, const CenterBank& bank);
CenterBank load_center_bank(const std::filesystem::path& dir);

}  // namespace cras
