#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cras/centers.hpp"
#include "cras/crd_train.hpp"
#include "cras/nn_model.hpp"
#include "cras/tensor.hpp"
#include "cras/tensor_store.hpp"

namespace cras {

struct ScoreMap {
  Grid<float> values;  // logistic probabilities in [0, 1]
  std::string sample_id;
  std::string category;
};

// Raw discriminator logits of [u | u - p] (per mode) at every position.
Grid<float> discriminator_logits(const FeatureMap& u, const FeatureMap& p,
                                 const DiscriminatorNet<float>& disc, FeatureMode mode);

// Normalized Gaussian taps for offsets -R..R, R = ceil(4 sigma). Empty for sigma <= 0.
std::vector<double> gaussian_kernel(double sigma);

// Separable Gaussian blur with half-sample symmetric ("reflect") borders.
Grid<float> gaussian_smooth(const Grid<float>& grid, double sigma);

// logits -> logistic -> bilinear resize to out_h x out_w -> Gaussian smoothing.
ScoreMap score_map(const FeatureMap& u, const FeatureMap& p, const DiscriminatorNet<float>& disc,
                   FeatureMode mode, std::size_t out_height, std::size_t out_width,
                   double smooth_sigma = 4.0);

// Max over positions.
double score_image(const ScoreMap& map);

// Mann-Whitney AUROC with midrank ties. Labels are 0 (normal) / 1 (anomalous).
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);
double auroc(std::span<const float> scores, std::span<const std::uint8_t> labels);

// Sum over distinct descending thresholds of (recall step x precision).
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);
double average_precision(std::span<const float> scores, std::span<const std::uint8_t> labels);

struct EvalSample {
  std::string sample_id;
  std::string category;
  Label label = Label::kNormal;
  FeatureMap features;       // merged t_i
  std::optional<Mask> mask;  // ground truth at image resolution
};

struct EvalConfig {
  FeatureMode feature_mode = FeatureMode::kRawResidual;
  double smooth_sigma = 4.0;
  // Score map size when a sample has no mask; defaults to the feature map size.
  std::optional<std::pair<std::size_t, std::size_t>> out_dims;
  std::size_t workers = 1;
  std::optional<std::filesystem::path> score_dir;  // write scores/<sample_id>.crft
  bool write_pgm = false;                          // plus an 8-bit heatmap
};

struct MetricSet {
  std::optional<double> i_auroc;
  std::optional<double> i_ap;
  std::optional<double> p_auroc;
  std::optional<double> p_ap;
};

struct CategoryReport {
  std::string category;
  std::size_t normal = 0;
  std::size_t anomalous = 0;
  std::size_t matched_correctly = 0;  // global matching agreed with the true category
  MetricSet metrics;
};

struct ImageScore {
  std::string sample_id;
  std::string category;
  std::string matched_category;
  Label label = Label::kNormal;
  double score = 0.0;
};

struct EvalReport {
  std::vector<ImageScore> image_scores;
  std::vector<CategoryReport> categories;
  MetricSet mean;  // macro average over categories where available
  bool pixel_metrics_available = false;
  std::string pixel_metrics_note;
};

// Full inference path per sample, then per-category and macro-averaged metrics.
// Pixel metrics pool every pixel of a category's test images; they are omitted
// (not zeroed) when an anomalous sample has no mask or a category lacks either
// pixel class.
EvalReport evaluate(std::span<const EvalSample> samples, const ModelParams& model,
                    const CenterBank& centers, const EvalConfig& config);

inline constexpr int kReportVersion = 1;

nlohmann::json report_to_json(const EvalReport& report);
std::string report_table(const EvalReport& report);

// Binary PGM (P5), value = round(score * 255).
void write_pgm(const std::filesystem::path& path, const Grid<float>& scores);

}  // namespace cras
