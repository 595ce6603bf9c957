#include "cras/scoring_eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cras/feature_prep.hpp"
#include "cras/parallel.hpp"

namespace cras {

Grid<float> discriminator_logits(const FeatureMap& u, const FeatureMap& p,
                                 const DiscriminatorNet<float>& disc, FeatureMode mode) {
  const std::vector<float> logits = disc.forward(to_positions(concat_center_aware(u, p, mode)));
  return Grid<float>(u.height(), u.width(), logits);
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) return {};
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double w = std::exp(-double(k) * k / (2.0 * sigma * sigma));
    taps[k + radius] = w;
    sum += w;
  }
  for (auto& w : taps) w /= sum;
  return taps;
}

namespace {

// Half-sample symmetric reflection, periodic with period 2n.
std::size_t reflect_index(long i, std::size_t n) {
  const long period = 2 * static_cast<long>(n);
  long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long>(n)) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

void convolve_line(const float* src, float* dst, std::size_t n, std::size_t stride,
                   const std::vector<double>& taps, std::vector<double>& scratch) {
  const long radius = static_cast<long>(taps.size() / 2);
  scratch.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (long k = -radius; k <= radius; ++k) {
      acc += taps[k + radius] * src[reflect_index(static_cast<long>(i) + k, n) * stride];
    }
    scratch[i] = acc;
  }
  for (std::size_t i = 0; i < n; ++i) dst[i * stride] = static_cast<float>(scratch[i]);
}

}  // namespace

Grid<float> gaussian_smooth(const Grid<float>& grid, double sigma) {
  const std::vector<double> taps = gaussian_kernel(sigma);
  if (taps.size() <= 1) return grid;
  Grid<float> out = grid;
  const std::size_t H = grid.height();
  const std::size_t W = grid.width();
  std::vector<double> scratch;
  float* data = out.data().data();
  for (std::size_t h = 0; h < H; ++h) convolve_line(data + h * W, data + h * W, W, 1, taps, scratch);
  for (std::size_t w = 0; w < W; ++w) convolve_line(data + w, data + w, H, W, taps, scratch);
  return out;
}

ScoreMap score_map(const FeatureMap& u, const FeatureMap& p, const DiscriminatorNet<float>& disc,
                   FeatureMode mode, std::size_t out_height, std::size_t out_width,
                   double smooth_sigma) {
  require(out_height > 0 && out_width > 0, ErrorCode::kInvalidArgument,
          "score_map: output dims must be nonzero");
  require(disc.in_dim() > 0, ErrorCode::kInvalidArgument, "score_map: untrained model");
  Grid<float> probs = discriminator_logits(u, p, disc, mode);
  for (auto& v : probs.storage()) v = sigmoid(v);
  ScoreMap out;
  out.values = gaussian_smooth(resize_bilinear(probs, out_height, out_width), smooth_sigma);
  for (auto& v : out.values.storage()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

double score_image(const ScoreMap& map) {
  require(!map.values.empty(), ErrorCode::kInvalidArgument, "score_image: empty map");
  return *std::max_element(map.values.storage().begin(), map.values.storage().end());
}

namespace {

struct LabelCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

template <typename S>
LabelCounts count_labels(std::span<const S> scores, std::span<const std::uint8_t> labels) {
  require(scores.size() == labels.size(), ErrorCode::kDimMismatch,
          "scores and labels differ in length");
  LabelCounts counts;
  for (auto l : labels) (l ? counts.positives : counts.negatives)++;
  return counts;
}

template <typename S>
std::vector<std::size_t> sorted_order(std::span<const S> scores, bool descending) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  if (descending) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  } else {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  }
  return order;
}

template <typename S>
double auroc_impl(std::span<const S> scores, std::span<const std::uint8_t> labels) {
  const LabelCounts counts = count_labels(scores, labels);
  require(counts.positives > 0 && counts.negatives > 0, ErrorCode::kInvalidArgument,
          "auroc needs both normal and anomalous labels");
  for (auto s : scores) require(!std::isnan(s), ErrorCode::kNonFinite, "auroc: NaN score");
  const auto order = sorted_order(scores, false);
  // Walk tie groups in ascending order: each positive beats every lower negative
  // and draws with the negatives in its own group.
  double wins = 0.0;
  double negatives_below = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double pos = 0.0;
    double neg = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? pos : neg) += 1.0;
      ++j;
    }
    wins += pos * negatives_below + 0.5 * pos * neg;
    negatives_below += neg;
    i = j;
  }
  return wins / (double(counts.positives) * double(counts.negatives));
}

template <typename S>
double ap_impl(std::span<const S> scores, std::span<const std::uint8_t> labels) {
  const LabelCounts counts = count_labels(scores, labels);
  require(counts.positives > 0, ErrorCode::kInvalidArgument,
          "average_precision needs at least one positive");
  for (auto s : scores) require(!std::isnan(s), ErrorCode::kNonFinite, "ap: NaN score");
  const auto order = sorted_order(scores, true);
  double tp = 0.0;
  double fp = 0.0;
  double ap = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double pos = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? pos : fp) += 1.0;
      ++j;
    }
    tp += pos;
    if (pos > 0.0) ap += (pos / double(counts.positives)) * (tp / (tp + fp));
    i = j;
  }
  return ap;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  return auroc_impl(scores, labels);
}
double auroc(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  return auroc_impl(scores, labels);
}
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  return ap_impl(scores, labels);
}
double average_precision(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  return ap_impl(scores, labels);
}

namespace {

struct ScoredSample {
  ScoreMap map;
  double image_score = 0.0;
  std::size_t matched = 0;
};

std::optional<double> mean_of(const std::vector<CategoryReport>& cats,
                              std::optional<double> MetricSet::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : cats) {
    if (const auto& v = c.metrics.*field) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0 || n != cats.size()) return std::nullopt;
  return sum / double(n);
}

}  // namespace

EvalReport evaluate(std::span<const EvalSample> samples, const ModelParams& model,
                    const CenterBank& centers, const EvalConfig& config) {
  require(!samples.empty(), ErrorCode::kInvalidArgument, "evaluate: test split is empty");
  centers.validate();
  if (config.score_dir) std::filesystem::create_directories(*config.score_dir);

  std::vector<ScoredSample> scored(samples.size());
  parallel_for(samples.size(), config.workers, [&](std::size_t i) {
    const EvalSample& s = samples[i];
    const FeatureMap u = adapt_features(model.adapter, s.features);
    const Recomposition rec = recompose(u, centers);
    std::size_t out_h = u.height();
    std::size_t out_w = u.width();
    if (s.mask) {
      out_h = s.mask->height();
      out_w = s.mask->width();
    } else if (config.out_dims) {
      std::tie(out_h, out_w) = *config.out_dims;
    }
    ScoredSample& out = scored[i];
    out.map = score_map(u, rec.alignment.recomposed, model.discriminator, config.feature_mode,
                        out_h, out_w, config.smooth_sigma);
    out.map.sample_id = s.sample_id;
    out.map.category = s.category;
    out.image_score = score_image(out.map);
    out.matched = rec.match.index;
    if (config.score_dir) {
      std::string stem = s.sample_id;
      std::replace(stem.begin(), stem.end(), '/', '_');
      write_tensor(*config.score_dir / (stem + ".crft"), out.map.values);
      if (config.write_pgm) write_pgm(*config.score_dir / (stem + ".pgm"), out.map.values);
    }
  });

  EvalReport report;
  std::map<std::string, std::vector<std::size_t>> by_category;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const EvalSample& s = samples[i];
    report.image_scores.push_back({s.sample_id, s.category,
                                   centers[scored[i].matched].category(), s.label,
                                   scored[i].image_score});
    by_category[s.category].push_back(i);
  }

  bool all_pixel = true;
  std::vector<std::string> notes;
  for (const auto& [category, indices] : by_category) {
    CategoryReport cat;
    cat.category = category;
    std::vector<double> image_scores;
    std::vector<std::uint8_t> image_labels;
    bool masks_ok = true;
    std::size_t pixel_count = 0;
    for (std::size_t i : indices) {
      const EvalSample& s = samples[i];
      const bool anomalous = s.label == Label::kAnomalous;
      (anomalous ? cat.anomalous : cat.normal)++;
      if (report.image_scores[i].matched_category == category) ++cat.matched_correctly;
      image_scores.push_back(scored[i].image_score);
      image_labels.push_back(anomalous ? 1 : 0);
      if (anomalous && !s.mask) masks_ok = false;
      pixel_count += scored[i].map.values.size();
    }
    if (cat.normal > 0 && cat.anomalous > 0) {
      cat.metrics.i_auroc = auroc(std::span<const double>(image_scores), image_labels);
      cat.metrics.i_ap = average_precision(std::span<const double>(image_scores), image_labels);
    }

    if (masks_ok) {
      std::vector<float> pixel_scores;
      std::vector<std::uint8_t> pixel_labels;
      pixel_scores.reserve(pixel_count);
      pixel_labels.reserve(pixel_count);
      for (std::size_t i : indices) {
        const auto& values = scored[i].map.values.storage();
        pixel_scores.insert(pixel_scores.end(), values.begin(), values.end());
        if (samples[i].mask) {
          for (auto m : samples[i].mask->storage()) pixel_labels.push_back(m > 0 ? 1 : 0);
        } else {
          pixel_labels.insert(pixel_labels.end(), values.size(), 0);  // normal: all-zero mask
        }
      }
      const bool has_pos = std::find(pixel_labels.begin(), pixel_labels.end(), 1) != pixel_labels.end();
      const bool has_neg = std::find(pixel_labels.begin(), pixel_labels.end(), 0) != pixel_labels.end();
      if (has_pos && has_neg) {
        cat.metrics.p_auroc = auroc(std::span<const float>(pixel_scores), pixel_labels);
        cat.metrics.p_ap = average_precision(std::span<const float>(pixel_scores), pixel_labels);
      } else {
        all_pixel = false;
        notes.push_back(category + ": masks contain no " +
                        (has_pos ? "normal" : "anomalous") + " pixels");
      }
    } else {
      all_pixel = false;
      notes.push_back(category + ": anomalous sample without mask");
    }
    report.categories.push_back(std::move(cat));
  }

  report.mean.i_auroc = mean_of(report.categories, &MetricSet::i_auroc);
  report.mean.i_ap = mean_of(report.categories, &MetricSet::i_ap);
  report.mean.p_auroc = mean_of(report.categories, &MetricSet::p_auroc);
  report.mean.p_ap = mean_of(report.categories, &MetricSet::p_ap);
  report.pixel_metrics_available = all_pixel;
  for (std::size_t i = 0; i < notes.size(); ++i) {
    report.pixel_metrics_note += (i ? "; " : "") + notes[i];
  }
  return report;
}

namespace {

nlohmann::json metrics_json(const MetricSet& m) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"i_auroc", opt(m.i_auroc)},
          {"i_ap", opt(m.i_ap)},
          {"p_auroc", opt(m.p_auroc)},
          {"p_ap", opt(m.p_ap)}};
}

std::string pct(const std::optional<double>& v) {
  return v ? fmt::format("{:6.2f}", 100.0 * *v) : std::string("   n/a");
}

}  // namespace

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json out;
  out["report_version"] = kReportVersion;
  out["mean"] = metrics_json(report.mean);
  out["pixel_metrics_available"] = report.pixel_metrics_available;
  if (!report.pixel_metrics_note.empty()) out["pixel_metrics_note"] = report.pixel_metrics_note;
  out["categories"] = nlohmann::json::array();
  for (const auto& c : report.categories) {
    out["categories"].push_back({{"category", c.category},
                                 {"normal", c.normal},
                                 {"anomalous", c.anomalous},
                                 {"matched_correctly", c.matched_correctly},
                                 {"metrics", metrics_json(c.metrics)}});
  }
  out["image_scores"] = nlohmann::json::array();
  for (const auto& s : report.image_scores) {
    out["image_scores"].push_back({{"sample_id", s.sample_id},
                                   {"category", s.category},
                                   {"matched_category", s.matched_category},
                                   {"label", std::string(to_string(s.label))},
                                   {"score", s.score}});
  }
  return out;
}

std::string report_table(const EvalReport& report) {
  std::ostringstream out;
  out << fmt::format("{:<20} {:>7} {:>7} {:>7} {:>7} {:>9}\n", "category", "I-AUROC", "I-AP",
                     "P-AUROC", "P-AP", "matched");
  for (const auto& c : report.categories) {
    out << fmt::format("{:<20} {:>7} {:>7} {:>7} {:>7} {:>4}/{:<4}\n", c.category,
                       pct(c.metrics.i_auroc), pct(c.metrics.i_ap), pct(c.metrics.p_auroc),
                       pct(c.metrics.p_ap), c.matched_correctly, c.normal + c.anomalous);
  }
  out << fmt::format("{:<20} {:>7} {:>7} {:>7} {:>7}\n", "mean", pct(report.mean.i_auroc),
                     pct(report.mean.i_ap), pct(report.mean.p_auroc), pct(report.mean.p_ap));
  if (!report.pixel_metrics_available) {
    out << "pixel metrics unavailable: " << report.pixel_metrics_note << "\n";
  }
  return out.str();
}

void write_pgm(const std::filesystem::path& path, const Grid<float>& scores) {
  std::string bytes = fmt::format("P5\n{} {}\n255\n", scores.width(), scores.height());
  for (float v : scores.storage()) {
    bytes.push_back(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  }
  atomic_write_file(path, bytes);
}

}  // namespace cras
