#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cras/tensor.hpp"

namespace cras {

struct PrepConfig {
  int patch_size = 3;                     // odd neighborhood size p
  std::vector<int> levels_used = {2, 3};  // backbone hierarchy levels to merge
  std::optional<std::size_t> target_channels;  // nullopt keeps every channel

  void validate() const;
};

struct HierarchyLevel {
  int level = 0;
  FeatureMap map;
};

// Levels strictly increasing by index, spatial dims non-increasing with depth.
using HierarchyStack = std::vector<HierarchyLevel>;

void validate_stack(const HierarchyStack& stack);

// Mean over the p x p window centered at every position, edges replicated.
FeatureMap aggregate_neighborhood(const FeatureMap& map, int patch_size);

// Bilinear resize with pixel-center alignment: src = (dst + 0.5) * in/out - 0.5,
// clamped to the valid range. Shared by feature merging and score maps.
Grid<float> resize_bilinear(const Grid<float>& grid, std::size_t height, std::size_t width);
FeatureMap resize_bilinear(const FeatureMap& map, std::size_t height, std::size_t width);

FeatureMap concat_channels(std::span<const FeatureMap> maps);

// Partitions the channels into `target` contiguous groups [g*C/target, (g+1)*C/target)
// and averages each group.
FeatureMap grouped_channel_mean(const FeatureMap& map, std::size_t target);

FeatureMap merge_hierarchies(const HierarchyStack& stack, const PrepConfig& config);

}  // namespace cras
