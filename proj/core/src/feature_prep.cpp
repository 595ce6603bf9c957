#include "cras/feature_prep.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cras {

void PrepConfig::validate() const {
  require(patch_size >= 1 && patch_size % 2 == 1, ErrorCode::kInvalidArgument,
          "patch_size must be a positive odd integer, got " + std::to_string(patch_size));
  require(!levels_used.empty(), ErrorCode::kInvalidArgument, "levels_used must be nonempty");
  if (target_channels) {
    require(*target_channels > 0, ErrorCode::kInvalidArgument,
            "target_channels must be positive");
  }
}

void validate_stack(const HierarchyStack& stack) {
  for (std::size_t i = 1; i < stack.size(); ++i) {
    require(stack[i].level > stack[i - 1].level, ErrorCode::kInvalidArgument,
            "hierarchy levels must be strictly increasing");
    require(stack[i].map.height() <= stack[i - 1].map.height() &&
                stack[i].map.width() <= stack[i - 1].map.width(),
            ErrorCode::kInvalidArgument, "spatial dims must not grow with level");
  }
}

namespace {

// Replicate-padded box mean along one axis of a strided line.
void box_mean_line(const float* src, float* dst, std::size_t n, std::size_t stride, int radius,
                   std::vector<double>& scratch) {
  scratch.assign(n, 0.0);
  const auto last = static_cast<long>(n) - 1;
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int d = -radius; d <= radius; ++d) {
      const long j = std::clamp(static_cast<long>(i) + d, 0L, last);
      sum += src[static_cast<std::size_t>(j) * stride];
    }
    scratch[i] = sum / (2 * radius + 1);
  }
  for (std::size_t i = 0; i < n; ++i) dst[i * stride] = static_cast<float>(scratch[i]);
}

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double max_src = static_cast<double>(in - 1);
  for (std::size_t i = 0; i < out; ++i) {
    const double src = std::clamp((static_cast<double>(i) + 0.5) * scale - 0.5, 0.0, max_src);
    const auto lo = static_cast<std::size_t>(std::floor(src));
    taps[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return taps;
}

void resize_plane(std::span<const float> src, std::size_t in_h, std::size_t in_w,
                  std::span<float> dst, std::size_t out_h, std::size_t out_w,
                  const std::vector<Tap>& rows, const std::vector<Tap>& cols) {
  for (std::size_t y = 0; y < out_h; ++y) {
    const Tap& ry = rows[y];
    const float* r0 = src.data() + ry.lo * in_w;
    const float* r1 = src.data() + ry.hi * in_w;
    for (std::size_t x = 0; x < out_w; ++x) {
      const Tap& cx = cols[x];
      const double top = r0[cx.lo] + (r0[cx.hi] - static_cast<double>(r0[cx.lo])) * cx.frac;
      const double bottom = r1[cx.lo] + (r1[cx.hi] - static_cast<double>(r1[cx.lo])) * cx.frac;
      dst[y * out_w + x] = static_cast<float>(top + (bottom - top) * ry.frac);
    }
  }
  (void)in_h;
}

}  // namespace

FeatureMap aggregate_neighborhood(const FeatureMap& map, int patch_size) {
  require(patch_size >= 1 && patch_size % 2 == 1, ErrorCode::kInvalidArgument,
          "patch size must be odd and positive, got " + std::to_string(patch_size));
  if (patch_size == 1) return map;
  const int radius = patch_size / 2;
  const std::size_t H = map.height();
  const std::size_t W = map.width();
  FeatureMap out = map;
  std::vector<double> scratch;
  for (std::size_t c = 0; c < map.channels(); ++c) {
    float* plane = out.channel(c).data();
    for (std::size_t h = 0; h < H; ++h) {
      box_mean_line(plane + h * W, plane + h * W, W, 1, radius, scratch);
    }
    for (std::size_t w = 0; w < W; ++w) {
      box_mean_line(plane + w, plane + w, H, W, radius, scratch);
    }
  }
  return out;
}

Grid<float> resize_bilinear(const Grid<float>& grid, std::size_t height, std::size_t width) {
  require(height > 0 && width > 0, ErrorCode::kInvalidArgument, "resize target must be nonzero");
  require(!grid.empty(), ErrorCode::kInvalidArgument, "cannot resize an empty grid");
  Grid<float> out(height, width);
  resize_plane(grid.data(), grid.height(), grid.width(), out.data(), height, width,
               bilinear_taps(grid.height(), height), bilinear_taps(grid.width(), width));
  return out;
}

FeatureMap resize_bilinear(const FeatureMap& map, std::size_t height, std::size_t width) {
  require(height > 0 && width > 0, ErrorCode::kInvalidArgument, "resize target must be nonzero");
  if (map.height() == height && map.width() == width) return map;
  FeatureMap out(map.channels(), height, width);
  const auto rows = bilinear_taps(map.height(), height);
  const auto cols = bilinear_taps(map.width(), width);
  for (std::size_t c = 0; c < map.channels(); ++c) {
    resize_plane(map.channel(c), map.height(), map.width(), out.channel(c), height, width, rows,
                 cols);
  }
  return out;
}

FeatureMap concat_channels(std::span<const FeatureMap> maps) {
  require(!maps.empty(), ErrorCode::kInvalidArgument, "nothing to concatenate");
  std::size_t channels = 0;
  for (const auto& m : maps) {
    require(m.height() == maps[0].height() && m.width() == maps[0].width(),
            ErrorCode::kDimMismatch, "concat requires equal spatial dims");
    channels += m.channels();
  }
  FeatureMap out(channels, maps[0].height(), maps[0].width());
  auto dst = out.storage().begin();
  for (const auto& m : maps) dst = std::copy(m.storage().begin(), m.storage().end(), dst);
  return out;
}

FeatureMap grouped_channel_mean(const FeatureMap& map, std::size_t target) {
  const std::size_t C = map.channels();
  require(target > 0 && target <= C, ErrorCode::kInvalidArgument,
          "target_channels " + std::to_string(target) + " exceeds " + std::to_string(C) +
              " concatenated channels");
  if (target == C) return map;
  FeatureMap out(target, map.height(), map.width());
  std::vector<double> acc(map.plane());
  for (std::size_t g = 0; g < target; ++g) {
    const std::size_t begin = g * C / target;
    const std::size_t end = (g + 1) * C / target;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t c = begin; c < end; ++c) {
      auto src = map.channel(c);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += src[i];
    }
    auto dst = out.channel(g);
    const double n = static_cast<double>(end - begin);
    for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i] / n);
  }
  return out;
}

FeatureMap merge_hierarchies(const HierarchyStack& stack, const PrepConfig& config) {
  config.validate();
  validate_stack(stack);

  std::vector<int> levels = config.levels_used;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

  std::vector<const FeatureMap*> selected;
  for (int level : levels) {
    auto it = std::find_if(stack.begin(), stack.end(),
                           [&](const HierarchyLevel& l) { return l.level == level; });
    require(it != stack.end(), ErrorCode::kInvalidArgument,
            "hierarchy level " + std::to_string(level) + " missing from stack");
    selected.push_back(&it->map);
  }

  const std::size_t H = selected.front()->height();
  const std::size_t W = selected.front()->width();
  std::vector<FeatureMap> parts;
  parts.reserve(selected.size());
  for (const FeatureMap* m : selected) {
    parts.push_back(resize_bilinear(aggregate_neighborhood(*m, config.patch_size), H, W));
  }
  FeatureMap merged = parts.size() == 1 ? std::move(parts.front()) : concat_channels(parts);
  if (config.target_channels) merged = grouped_channel_mean(merged, *config.target_channels);
  return merged;
}

}  // namespace cras
