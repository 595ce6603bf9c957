#include "cras/centers.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "cras/tensor_store.hpp"

namespace cras {
namespace fs = std::filesystem;

std::string_view to_string(RefreshPolicy policy) {
  return policy == RefreshPolicy::kOnce ? "once" : "per-epoch";
}

std::string_view to_string(CenterMode mode) {
  return mode == CenterMode::kMean ? "mean" : "single-sample";
}

RefreshPolicy parse_refresh_policy(std::string_view text) {
  if (text == "once") return RefreshPolicy::kOnce;
  if (text == "per-epoch") return RefreshPolicy::kPerEpoch;
  fail(ErrorCode::kInvalidArgument, "refresh_policy must be once|per-epoch, got '" +
                                        std::string(text) + "'");
}

CenterMode parse_center_mode(std::string_view text) {
  if (text == "mean") return CenterMode::kMean;
  if (text == "single-sample") return CenterMode::kSingleSample;
  fail(ErrorCode::kInvalidArgument, "center_mode must be mean|single-sample, got '" +
                                        std::string(text) + "'");
}

namespace {

double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

// u as position rows plus their norms; rejects zero-norm vectors.
struct PositionQuery {
  Matrix<float> rows;
  std::vector<double> norms;

  explicit PositionQuery(const FeatureMap& u) : rows(to_positions(u)), norms(rows.rows) {
    for (std::size_t q = 0; q < rows.rows; ++q) {
      norms[q] = norm(rows.row(q));
      require(norms[q] > 0.0, ErrorCode::kZeroNorm,
              "zero-norm query vector at position " + std::to_string(q));
    }
  }
};

void require_center_norms(const ClassCenter& center) {
  auto norms = center.position_norms();
  for (std::size_t j = 0; j < norms.size(); ++j) {
    require(norms[j] > 0.0, ErrorCode::kZeroNorm,
            "zero-norm center vector at position " + std::to_string(j) + " of class '" +
                center.category() + "'");
  }
}

// Returns (best linear index, best similarity) of query row q against center rows.
std::pair<std::uint32_t, double> nearest(std::span<const float> query, double query_norm,
                                         const ClassCenter& center) {
  const auto& rows = center.positions();
  const auto norms = center.position_norms();
  std::uint32_t best = 0;
  double best_sim = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < rows.rows; ++j) {
    const double sim = dot(query, rows.row(j)) / (query_norm * norms[j]);
    if (sim > best_sim) {
      best_sim = sim;
      best = static_cast<std::uint32_t>(j);
    }
  }
  return {best, best_sim};
}

}  // namespace

ClassCenter::ClassCenter(std::string category, FeatureMap map)
    : category_(std::move(category)), map_(std::move(map)) {
  require(!map_.empty(), ErrorCode::kInvalidArgument, "center map is empty");
  flat_norm_ = norm(map_.data());
  require(flat_norm_ > 0.0, ErrorCode::kZeroNorm,
          "center of class '" + category_ + "' has zero norm (degenerate class)");
  positions_ = to_positions(map_);
  position_norms_.resize(positions_.rows);
  for (std::size_t j = 0; j < positions_.rows; ++j) position_norms_[j] = norm(positions_.row(j));
}

std::size_t CenterBank::index_of(std::string_view category) const {
  for (std::size_t k = 0; k < centers.size(); ++k) {
    if (centers[k].category() == category) return k;
  }
  fail(ErrorCode::kInvalidArgument, "no center for category '" + std::string(category) + "'");
}

void CenterBank::validate() const {
  require(!centers.empty(), ErrorCode::kInvalidArgument, "center bank is empty");
  std::set<std::string> seen;
  for (const auto& c : centers) {
    require(seen.insert(c.category()).second, ErrorCode::kInvalidArgument,
            "duplicate center category '" + c.category() + "'");
    require_same_shape(c.map(), centers.front().map(), "center bank dims");
  }
}

ClassCenter init_center(std::string category, std::span<const FeatureMap> samples,
                        const AdapterNet<float>& adapter) {
  require(!samples.empty(), ErrorCode::kInvalidArgument,
          "no samples for class '" + category + "'");
  std::vector<double> acc(samples.front().size(), 0.0);
  for (const auto& t : samples) {
    require_same_shape(t, samples.front(), "init_center sample dims");
    const FeatureMap u = adapt_features(adapter, t);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += u.storage()[i];
  }
  const auto& first = samples.front();
  FeatureMap mean(adapter.channels(), first.height(), first.width());
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < acc.size(); ++i) mean.storage()[i] = static_cast<float>(acc[i] / n);
  return ClassCenter(std::move(category), std::move(mean));
}

ClassMatch match_class(const FeatureMap& u, const CenterBank& bank) {
  require(!bank.centers.empty(), ErrorCode::kInvalidArgument, "center bank is empty");
  const double u_norm = norm(u.data());
  require(u_norm > 0.0, ErrorCode::kZeroNorm, "zero-norm feature map");
  ClassMatch best{0, -std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k < bank.size(); ++k) {
    require_same_shape(u, bank[k].map(), "match_class");
    const double sim = dot(u.data(), bank[k].flat()) / (u_norm * bank[k].flat_norm());
    if (sim > best.similarity) best = {k, sim};
  }
  return best;
}

Alignment align_patches(const FeatureMap& u, const ClassCenter& center) {
  require(u.channels() == center.map().channels(), ErrorCode::kDimMismatch,
          "align_patches: channel mismatch " + shape_string(u) + " vs " +
              shape_string(center.map()));
  require_center_norms(center);
  const PositionQuery query(u);
  const auto& rows = center.positions();

  Matrix<float> out(query.rows.rows, u.channels());
  Alignment alignment;
  alignment.source.resize(query.rows.rows);
  for (std::size_t q = 0; q < query.rows.rows; ++q) {
    const auto [j, sim] = nearest(query.rows.row(q), query.norms[q], center);
    alignment.source[q] = j;
    std::copy(rows.row(j).begin(), rows.row(j).end(), out.row(q).begin());
  }
  alignment.recomposed = from_positions(out, u.height(), u.width());
  return alignment;
}

Recomposition recompose(const FeatureMap& u, const CenterBank& bank) {
  Recomposition result;
  result.match = match_class(u, bank);
  result.alignment = align_patches(u, bank[result.match.index]);
  return result;
}

ExhaustiveAlignment exhaustive_align(const FeatureMap& u, const CenterBank& bank) {
  require(!bank.centers.empty(), ErrorCode::kInvalidArgument, "center bank is empty");
  for (const auto& c : bank.centers) {
    require(c.map().channels() == u.channels(), ErrorCode::kDimMismatch,
            "exhaustive_align: channel mismatch");
    require_center_norms(c);
  }
  const PositionQuery query(u);
  Matrix<float> out(query.rows.rows, u.channels());
  ExhaustiveAlignment result;
  result.class_index.resize(query.rows.rows);
  result.source.resize(query.rows.rows);
  for (std::size_t q = 0; q < query.rows.rows; ++q) {
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < bank.size(); ++k) {
      const auto [j, sim] = nearest(query.rows.row(q), query.norms[q], bank[k]);
      if (sim > best_sim) {
        best_sim = sim;
        result.class_index[q] = static_cast<std::uint32_t>(k);
        result.source[q] = j;
      }
    }
    const auto src = bank[result.class_index[q]].positions().row(result.source[q]);
    std::copy(src.begin(), src.end(), out.row(q).begin());
  }
  result.recomposed = from_positions(out, u.height(), u.width());
  return result;
}

CenterBank build_center_bank(std::span<const CategorySamples> classes,
                             const AdapterNet<float>& adapter, CenterMode mode,
                             RefreshPolicy policy) {
  CenterBank bank;
  bank.refresh_policy = policy;
  for (const auto& cls : classes) {
    require(!cls.features.empty(), ErrorCode::kInvalidArgument,
            "class '" + cls.category + "' has no training samples");
    std::span<const FeatureMap> samples(cls.features);
    if (mode == CenterMode::kSingleSample) samples = samples.first(1);
    bank.centers.push_back(init_center(cls.category, samples, adapter));
  }
  bank.validate();
  return bank;
}

void save_center_bank(const fs::path& dir, const CenterBank& bank) {
  fs::create_directories(dir);
  nlohmann::json index;
  index["version"] = 1;
  index["refresh_policy"] = std::string(to_string(bank.refresh_policy));
  index["categories"] = nlohmann::json::array();
  for (std::size_t k = 0; k < bank.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "center_%03zu.crft", k);
    write_tensor(dir / name, bank[k].map());
    index["categories"].push_back({{"category", bank[k].category()}, {"file", name}});
  }
  atomic_write_file(dir / "index.json", index.dump(2) + "\n");
}

CenterBank load_center_bank(const fs::path& dir) {
  const fs::path index_path = dir / "index.json";
  require(fs::exists(index_path), ErrorCode::kIo, "missing center index " + index_path.string());
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(read_file(index_path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, index_path.string() + ": " + e.what());
  }
  CenterBank bank;
  bank.refresh_policy = parse_refresh_policy(index.value("refresh_policy", "per-epoch"));
  for (const auto& entry : index.at("categories")) {
    bank.centers.emplace_back(entry.at("category").get<std::string>(),
                              read_feature_map(dir / entry.at("file").get<std::string>()));
  }
  bank.validate();
  return bank;
}

}  // namespace cras
